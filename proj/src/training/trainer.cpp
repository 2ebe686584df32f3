#include "mattnet/training/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "mattnet/autodiff/ops.hpp"
#include "mattnet/errors.hpp"

namespace mattnet::training {

void write_curves(const std::vector<CurveRow>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "iter,loss,rank_loss,attr_loss,lr,val_acc\n";
  for (const auto& r : curve) {
    out << fmt::format("{},{},{},{},{},", r.iter, r.loss, r.rank_loss, r.attr_loss, r.lr);
    if (r.val_acc) out << fmt::format("{}", *r.val_acc);
    out << '\n';
  }
  if (!out) throw InputError("write failed for " + path.string());
}

namespace {

// Cycles through shuffled scene orders, one fresh shuffle per epoch.
class BatchStream {
 public:
  BatchStream(const std::vector<PreparedScene>& scenes, std::size_t batch, Rng& rng)
      : scenes_(scenes), batch_(std::min(batch, scenes.size())), rng_(rng), order_(scenes.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    rng_.shuffle(order_);
  }

  std::vector<const PreparedScene*> next() {
    if (cursor_ + batch_ > order_.size()) {
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    std::vector<const PreparedScene*> out;
    for (std::size_t i = 0; i < batch_; ++i) out.push_back(&scenes_[order_[cursor_ + i]]);
    cursor_ += batch_;
    return out;
  }

 private:
  const std::vector<PreparedScene>& scenes_;
  std::size_t batch_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

void check_gradients(const ad::ParamStore& params, std::size_t iter) {
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient for parameter " + name + " at iteration " + std::to_string(iter));
      }
    }
  }
}

}  // namespace

TrainResult train(const std::vector<PreparedScene>& scenes, const DataShape& shape, const TrainConfig& cfg,
                  const Validator& validate) {
  cfg.validate();
  if (scenes.empty()) throw InputError("training split is empty");
  TrainResult result;
  result.params = init_model(cfg.model, shape, cfg.ablation, derive_seed({cfg.seed, 1}));
  const auto table = AttributeLabelTable::from_scenes(scenes, shape.attribute_count);

  Rng batch_rng(derive_seed({cfg.seed, 2}));
  Rng sample_rng(derive_seed({cfg.seed, 3}));
  BatchStream stream(scenes, cfg.batch_scenes, batch_rng);
  ad::AdamState adam;
  auto& params = result.params;

  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    const auto batch = stream.next();
    const auto negatives = sample_negatives(batch, sample_rng);
    params.zero_grad();
    const auto loss = total_loss(batch, negatives, params, cfg, table, ForwardMode::training(sample_rng));
    ad::backward(loss.total);
    const double norm = params.grad_norm();
    if (!std::isfinite(norm)) check_gradients(params, iter);
    if (norm > cfg.clip_norm) params.scale_grads(cfg.clip_norm / norm);
    const double lr = lr_at(cfg, iter);
    ad::adam_step(params, adam, lr);

    CurveRow row{iter, loss.total.item(), loss.ranking.item(), loss.attribute.item(), lr, std::nullopt};
    if (validate && ((iter + 1) % cfg.val_every == 0 || iter + 1 == cfg.max_iters)) row.val_acc = validate(params);
    result.curve.push_back(row);
  }
  return result;
}

}  // namespace mattnet::training
