#include "mattnet/harness/evaluation.hpp"

#include "mattnet/autodiff/ops.hpp"
#include "mattnet/errors.hpp"

namespace mattnet::harness {

namespace {

constexpr double kCorrectIou = 0.5;
constexpr double kAttributeThreshold = 0.5;

std::size_t argmax(const std::vector<ScoreBreakdown>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].value() > scores[best].value()) best = i;
  }
  return best;
}

}  // namespace

Comprehension comprehend(const visual::SceneContext& candidates, const ExampleExpression& expr,
                         const ad::ParamStore& params, const AblationConfig& ablation) {
  if (candidates.objects.empty()) throw InputError("no candidates to choose from");
  ad::NoGradGuard no_grad;
  const training::Scorer scorer(params, ablation, ForwardMode::eval(), 0.0);
  const auto query = scorer.encode_expression(expr);
  Comprehension out;
  for (std::size_t i = 0; i < candidates.objects.size(); ++i) {
    out.scores.push_back(scorer.score(scorer.encode_object(candidates, i), query));
  }
  out.predicted = argmax(out.scores);
  return out;
}

double EvalReport::kind_accuracy(const std::string& kind) const {
  auto it = per_kind.find(kind);
  return it == per_kind.end() ? 0.0 : it->second.accuracy;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& [kind, k] : per_kind) {
    kinds[kind] = {{"n", k.n},
                   {"correct", k.correct},
                   {"accuracy", k.accuracy},
                   {"mean_weights", {{"subj", k.mean_weights[0]}, {"loc", k.mean_weights[1]}, {"rel", k.mean_weights[2]}}}};
  }
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : predictions) {
    preds.push_back({{"scene_id", p.scene_id},
                     {"expression", p.expression},
                     {"kind", p.kind},
                     {"target", p.target},
                     {"predicted", p.predicted},
                     {"iou", p.iou},
                     {"correct", p.correct},
                     {"weights", p.weights}});
  }
  nlohmann::json doc{{"split", split},
                     {"candidates", candidates},
                     {"n_expressions", n_expressions},
                     {"n_correct", n_correct},
                     {"accuracy", accuracy},
                     {"per_kind", kinds},
                     {"predictions", preds}};
  if (attributes) {
    doc["attributes"] = {{"threshold", kAttributeThreshold},
                         {"true_positive", attributes->true_positive},
                         {"false_positive", attributes->false_positive},
                         {"false_negative", attributes->false_negative},
                         {"precision", attributes->precision},
                         {"recall", attributes->recall},
                         {"f1", attributes->f1}};
  }
  return doc;
}

EvalReport evaluate(const std::vector<PreparedScene>& scenes, const ad::ParamStore& params,
                    const AblationConfig& ablation, const std::string& split, const std::string& candidates) {
  std::size_t total = 0;
  for (const auto& s : scenes) total += s.expressions.size();
  if (total == 0) throw InputError("split '" + split + "' has no expressions to evaluate");

  ad::NoGradGuard no_grad;
  const training::Scorer scorer(params, ablation, ForwardMode::eval(), 0.0);
  const bool attributes_on = ablation.use_attr && !ablation.baseline_matching;
  EvalReport report;
  report.split = split;
  report.candidates = candidates;
  AttributeMetrics attr;

  for (const auto& scene : scenes) {
    std::vector<training::ObjectEncoding> objects;
    for (std::size_t i = 0; i < scene.candidates.objects.size(); ++i) {
      objects.push_back(scorer.encode_object(scene.candidates, i));
    }
    std::vector<ad::Tensor> probs(objects.size());
    for (std::size_t e = 0; e < scene.expressions.size(); ++e) {
      const auto& expr = scene.expressions[e];
      const auto query = scorer.encode_expression(expr);
      std::vector<ScoreBreakdown> scores;
      for (const auto& obj : objects) scores.push_back(scorer.score(obj, query));
      Prediction p;
      p.scene_id = scene.scene_id;
      p.expression = e;
      p.kind = expr.kind;
      p.target = expr.target;
      p.predicted = argmax(scores);
      p.iou = visual::iou(scene.candidates.objects[p.predicted].box, scene.gold_boxes.at(expr.target));
      p.correct = p.iou > kCorrectIou;
      for (std::size_t m = 0; m < 3; ++m) p.weights[m] = query.weights[m];

      auto& k = report.per_kind[expr.kind];
      ++k.n;
      k.correct += p.correct;
      for (std::size_t m = 0; m < 3; ++m) k.mean_weights[m] += p.weights[m];
      report.n_correct += p.correct;
      report.predictions.push_back(std::move(p));

      if (attributes_on && expr.has_attribute) {
        if (!probs[expr.target].defined()) probs[expr.target] = scorer.attribute_probs(objects[expr.target]);
        const ad::Tensor& pr = probs[expr.target];
        for (std::size_t j = 0; j < expr.attr_labels.size(); ++j) {
          const bool predicted = pr[j] >= kAttributeThreshold, actual = expr.attr_labels[j] > 0.5;
          attr.true_positive += predicted && actual;
          attr.false_positive += predicted && !actual;
          attr.false_negative += !predicted && actual;
        }
      }
    }
  }
  report.n_expressions = total;
  report.accuracy = static_cast<double>(report.n_correct) / static_cast<double>(total);
  for (auto& [_, k] : report.per_kind) {
    k.accuracy = static_cast<double>(k.correct) / static_cast<double>(k.n);
    for (double& w : k.mean_weights) w /= static_cast<double>(k.n);
  }
  if (attributes_on) {
    const double tp = static_cast<double>(attr.true_positive);
    attr.precision = tp + attr.false_positive > 0 ? tp / (tp + attr.false_positive) : 0.0;
    attr.recall = tp + attr.false_negative > 0 ? tp / (tp + attr.false_negative) : 0.0;
    attr.f1 = attr.precision + attr.recall > 0 ? 2 * attr.precision * attr.recall / (attr.precision + attr.recall) : 0.0;
    report.attributes = attr;
  }
  return report;
}

double recount_accuracy(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw InputError("empty prediction log");
  std::size_t correct = 0;
  for (const auto& p : predictions) correct += p.iou > kCorrectIou;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace mattnet::harness
