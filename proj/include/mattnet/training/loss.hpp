#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mattnet/training/model.hpp"

namespace mattnet::training {

struct TrainConfig {
  double lr = 4e-4;
  std::size_t lr_warmup = 8000;          // constant lr for this many steps
  std::size_t lr_halving_period = 8000;  // then halve every period
  std::size_t batch_scenes = 15;
  double margin = 0.1;
  double lambda_expr = 1.0;  // weight of the wrong-expression hinge
  double lambda_obj = 1.0;   // weight of the wrong-object hinge
  double lambda_attr = 1.0;
  double clip_norm = 10.0;
  std::size_t max_iters = 20000;
  std::size_t val_every = 500;
  std::uint64_t seed = 0;
  ModelConfig model;
  AblationConfig ablation;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep defaults; unknown keys are an InputError.
  static TrainConfig from_json(const nlohmann::json& doc);
};

/// Learning rate used at optimizer step `step` (0-based).
double lr_at(const TrainConfig& cfg, std::size_t step);

/// lambda_expr * max(0, margin + neg_expr - pos) + lambda_obj * max(0, margin + neg_obj - pos).
/// An undefined negative drops its term.
Tensor ranking_loss(const Tensor& pos, const Tensor& neg_expr, const Tensor& neg_obj, const TrainConfig& cfg);

/// Negatives for one positive pair (scene, expression).
struct NegativeSample {
  std::size_t scene = 0;
  std::size_t expression = 0;
  // Expression describing another object; same scene when possible.
  std::optional<std::pair<std::size_t, std::size_t>> other_expression;
  // Another object of the same scene; empty for single-object scenes.
  std::optional<std::size_t> other_object;
};

std::vector<NegativeSample> sample_negatives(const std::vector<const PreparedScene*>& batch, Rng& rng);

/// 1 / sqrt(max(freq, 1)).
double attribute_weight(double freq);

class AttributeLabelTable {
 public:
  AttributeLabelTable() = default;
  explicit AttributeLabelTable(std::vector<double> frequencies);
  /// Counts positive labels over every expression of `scenes`.
  static AttributeLabelTable from_scenes(const std::vector<PreparedScene>& scenes, std::size_t attribute_count);

  const std::vector<double>& frequencies() const { return freq_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> freq_;
  std::vector<double> weights_;
};

/// lambda_attr * weighted BCE of `probs` against the expression's labels;
/// zero for expressions without attribute words.
Tensor attribute_loss(const Tensor& probs, const ExampleExpression& expr, const AttributeLabelTable& table,
                      double lambda_attr);

struct LossBreakdown {
  Tensor total;
  Tensor ranking;
  Tensor attribute;
};

/// Ranking plus attribute loss summed over every positive in the batch.
/// Throws NumericalError naming the first non-finite term.
LossBreakdown total_loss(const std::vector<const PreparedScene*>& batch, const std::vector<NegativeSample>& negatives,
                         const ad::ParamStore& params, const TrainConfig& cfg, const AttributeLabelTable& table,
                         const ForwardMode& mode);

}  // namespace mattnet::training
