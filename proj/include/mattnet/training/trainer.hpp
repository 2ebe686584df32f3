#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "mattnet/training/loss.hpp"

namespace mattnet::training {

struct CurveRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double rank_loss = 0.0;
  double attr_loss = 0.0;
  double lr = 0.0;
  std::optional<double> val_acc;  // after this step's update
};

/// iter,loss,rank_loss,attr_loss,lr,val_acc (val_acc empty between validations).
void write_curves(const std::vector<CurveRow>& curve, const std::filesystem::path& path);

using Validator = std::function<double(const ad::ParamStore&)>;

struct TrainResult {
  ad::ParamStore params;
  std::vector<CurveRow> curve;
};

/// Adam over shuffled batches of cfg.batch_scenes scenes, global-norm
/// clipping, step-halving lr. `validate` runs every cfg.val_every steps and
/// after the last one. Deterministic given cfg.seed.
TrainResult train(const std::vector<PreparedScene>& scenes, const DataShape& shape, const TrainConfig& cfg,
                  const Validator& validate = {});

}  // namespace mattnet::training
