#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mattnet/harness/evaluation.hpp"
#include "mattnet/training/trainer.hpp"

namespace mattnet::harness {

struct AblationResult {
  int row = 0;
  std::string label;
  AblationConfig config;
  EvalReport report;
};

using Progress = std::function<void(const std::string&)>;

/// Trains each requested row (1..7) from `base` with the row's switches and
/// evaluates it on `eval_scenes`.
std::vector<AblationResult> run_ablation_suite(const std::vector<PreparedScene>& train_scenes,
                                               const std::vector<PreparedScene>& eval_scenes,
                                               const training::DataShape& shape, const training::TrainConfig& base,
                                               std::vector<int> rows = {1, 2, 3, 4, 5, 6, 7},
                                               const Progress& progress = {});

/// One line per row: switches, overall accuracy and per-kind accuracies.
void write_ablation_csv(const std::vector<AblationResult>& results, const std::filesystem::path& path);
nlohmann::json ablation_json(const std::vector<AblationResult>& results);

}  // namespace mattnet::harness
