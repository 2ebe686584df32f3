#include "mattnet/harness/inspect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mattnet/errors.hpp"

namespace mattnet::harness {

nlohmann::json attention_dump(const std::vector<std::string>& tokens, const lang::LanguageOutput& language,
                              const ad::Tensor& weights) {
  nlohmann::json attn = nlohmann::json::object();
  for (lang::Module m : lang::kModules) {
    const auto& t = language.attention_for(m);
    const auto a = t.defined() ? t.values() : std::span<const double>{};
    attn[std::string(lang::module_name(m))] = std::vector<double>(a.begin(), a.end());
  }
  const auto w = weights.values();
  return {{"tokens", tokens}, {"attn", attn}, {"weights", std::vector<double>(w.begin(), w.end())}};
}

nlohmann::json spatial_dump(std::size_t object_id, const ad::Tensor& attention) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(attention.size()))));
  if (side * side != attention.size()) throw DimensionError("spatial attention is not a square grid");
  nlohmann::json grid = nlohmann::json::array();
  for (std::size_t r = 0; r < side; ++r) {
    std::vector<double> row(side);
    for (std::size_t c = 0; c < side; ++c) row[c] = attention[r * side + c];
    grid.push_back(row);
  }
  return {{"object_id", object_id}, {"grid", grid}};
}

nlohmann::json inspect_bundle(const PreparedScene& scene, const ExampleExpression& expr, const ad::ParamStore& params,
                              const AblationConfig& ablation, const std::vector<std::string>& attribute_names) {
  ad::NoGradGuard no_grad;
  const training::Scorer scorer(params, ablation, ForwardMode::eval(), 0.0);
  const auto query = scorer.encode_expression(expr);
  std::vector<training::ObjectEncoding> objects;
  std::vector<ScoreBreakdown> scores;
  for (std::size_t i = 0; i < scene.candidates.objects.size(); ++i) {
    objects.push_back(scorer.encode_object(scene.candidates, i));
    scores.push_back(scorer.score(objects.back(), query));
  }
  std::size_t predicted = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].value() > scores[predicted].value()) predicted = i;
  }

  nlohmann::json bundle;
  bundle["scene_id"] = scene.scene_id;
  bundle["expression"] = expr.expression.raw_text;
  bundle["attention"] = attention_dump(expr.tokens, query.language, query.weights);
  nlohmann::json weighted = nlohmann::json::object();
  for (lang::Module m : lang::kModules) {
    const auto& t = query.language.attention_for(m);
    const auto a = t.defined() ? t.values() : std::span<const double>{};
    const double w = query.weights[static_cast<std::size_t>(m)];
    std::vector<double> row;
    for (double x : a) row.push_back(x * w);
    weighted[std::string(lang::module_name(m))] = row;
  }
  bundle["weighted_attention"] = weighted;
  bundle["predicted"] = predicted;

  nlohmann::json candidates = nlohmann::json::array();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& b = scene.candidates.objects[i].box;
    const auto& s = scores[i];
    candidates.push_back({{"object_id", i},
                          {"box", {b.x_tl, b.y_tl, b.x_br, b.y_br}},
                          {"s_subj", s.subj()},
                          {"s_loc", s.loc()},
                          {"s_rel", s.rel()},
                          {"w_subj", s.w(lang::Module::subj)},
                          {"w_loc", s.w(lang::Module::loc)},
                          {"w_rel", s.w(lang::Module::rel)},
                          {"total", s.value()}});
  }
  bundle["candidates"] = candidates;

  if (ablation.baseline_matching) {
    bundle["spatial"] = nullptr;
    bundle["top_attributes"] = nlohmann::json::array();
    return bundle;
  }
  bundle["spatial"] = spatial_dump(predicted, scorer.subject(objects[predicted], query).attention);
  const ad::Tensor probs = scorer.attribute_probs(objects[predicted]);
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  nlohmann::json top = nlohmann::json::array();
  for (std::size_t k = 0; k < std::min<std::size_t>(5, order.size()); ++k) {
    const std::size_t j = order[k];
    top.push_back({{"attribute", j < attribute_names.size() ? attribute_names[j] : std::to_string(j)},
                   {"probability", probs[j]}});
  }
  bundle["top_attributes"] = top;
  return bundle;
}

}  // namespace mattnet::harness
