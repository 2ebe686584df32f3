#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mattnet/training/model.hpp"

namespace mattnet::harness {

using training::AblationConfig;
using training::ExampleExpression;
using training::PreparedScene;
using training::ScoreBreakdown;

struct Comprehension {
  std::size_t predicted = 0;  // argmax of the total score, lowest index on ties
  std::vector<ScoreBreakdown> scores;
};

/// Scores every candidate for `expr` in evaluation mode.
Comprehension comprehend(const visual::SceneContext& candidates, const ExampleExpression& expr,
                         const ad::ParamStore& params, const AblationConfig& ablation);

struct Prediction {
  std::uint64_t scene_id = 0;
  std::size_t expression = 0;
  std::string kind;
  std::size_t target = 0;
  std::size_t predicted = 0;
  double iou = 0.0;
  bool correct = false;
  std::array<double, 3> weights{};
};

struct KindStats {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::array<double, 3> mean_weights{};
};

struct AttributeMetrics {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::string split;
  std::string candidates;
  std::size_t n_expressions = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
  std::map<std::string, KindStats> per_kind;
  std::optional<AttributeMetrics> attributes;  // when the attribute branch is on
  std::vector<Prediction> predictions;

  double kind_accuracy(const std::string& kind) const;
  nlohmann::json to_json() const;
};

/// Accuracy = share of expressions whose chosen candidate has IoU > 0.5 with
/// the target's true box. Throws InputError on an empty split.
EvalReport evaluate(const std::vector<PreparedScene>& scenes, const ad::ParamStore& params,
                    const AblationConfig& ablation, const std::string& split, const std::string& candidates);

/// Accuracy recomputed from a prediction log alone.
double recount_accuracy(const std::vector<Prediction>& predictions);

}  // namespace mattnet::harness
