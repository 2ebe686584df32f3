#include "mattnet/training/loss.hpp"

#include <cmath>
#include <map>

#include "mattnet/autodiff/ops.hpp"
#include "mattnet/errors.hpp"

namespace mattnet::training {

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InputError("lr must be positive");
  if (!(margin > 0.0)) throw InputError("margin must be positive");
  if (!(lambda_expr >= 0.0 && lambda_obj >= 0.0 && lambda_attr >= 0.0)) {
    throw InputError("loss weights must be non-negative");
  }
  if (!(clip_norm > 0.0)) throw InputError("clip_norm must be positive");
  if (batch_scenes == 0) throw InputError("batch_scenes must be positive");
  if (lr_halving_period == 0) throw InputError("lr_halving_period must be positive");
  if (val_every == 0) throw InputError("val_every must be positive");
  ablation.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"lr_warmup", lr_warmup},
          {"lr_halving_period", lr_halving_period},
          {"batch_scenes", batch_scenes},
          {"margin", margin},
          {"lambda_expr", lambda_expr},
          {"lambda_obj", lambda_obj},
          {"lambda_attr", lambda_attr},
          {"clip_norm", clip_norm},
          {"max_iters", max_iters},
          {"val_every", val_every},
          {"seed", seed},
          {"model", model.to_json()},
          {"ablation", ablation.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InputError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "model") {
        c.model = ModelConfig::from_json(value);
      } else if (key == "ablation") {
        c.ablation = AblationConfig::from_json(value);
      } else if (key == "lr" || key == "margin" || key == "lambda_expr" || key == "lambda_obj" ||
                 key == "lambda_attr" || key == "clip_norm") {
        if (!value.is_number()) throw InputError("'" + key + "' must be a number");
        double& field = key == "lr"            ? c.lr
                        : key == "margin"      ? c.margin
                        : key == "lambda_expr" ? c.lambda_expr
                        : key == "lambda_obj"  ? c.lambda_obj
                        : key == "lambda_attr" ? c.lambda_attr
                                               : c.clip_norm;
        field = value.get<double>();
      } else if (key == "lr_warmup" || key == "lr_halving_period" || key == "batch_scenes" || key == "max_iters" ||
                 key == "val_every") {
        if (!value.is_number_unsigned()) throw InputError("'" + key + "' must be a non-negative integer");
        std::size_t& field = key == "lr_warmup"           ? c.lr_warmup
                             : key == "lr_halving_period" ? c.lr_halving_period
                             : key == "batch_scenes"      ? c.batch_scenes
                             : key == "max_iters"         ? c.max_iters
                                                          : c.val_every;
        field = value.get<std::size_t>();
      } else if (key == "seed") {
        if (!value.is_number_unsigned()) throw InputError("'seed' must be a non-negative integer");
        c.seed = value.get<std::uint64_t>();
      } else {
        throw InputError("unknown train config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double lr_at(const TrainConfig& cfg, std::size_t step) {
  if (step < cfg.lr_warmup) return cfg.lr;
  const auto halvings = (step - cfg.lr_warmup) / cfg.lr_halving_period;
  return std::ldexp(cfg.lr, -static_cast<int>(std::min<std::size_t>(halvings, 1000)));
}

Tensor ranking_loss(const Tensor& pos, const Tensor& neg_expr, const Tensor& neg_obj, const TrainConfig& cfg) {
  std::vector<Tensor> terms;
  auto hinge = [&](const Tensor& neg, double lambda) {
    if (!neg.defined()) return;
    terms.push_back(ad::scale_shift(ad::relu(ad::scale_shift(ad::sub(neg, pos), 1.0, cfg.margin)), lambda));
  };
  hinge(neg_expr, cfg.lambda_expr);
  hinge(neg_obj, cfg.lambda_obj);
  return ad::sum_scalars(terms);
}

std::vector<NegativeSample> sample_negatives(const std::vector<const PreparedScene*>& batch, Rng& rng) {
  std::vector<NegativeSample> out;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const PreparedScene& scene = *batch[s];
    const std::size_t n_objects = scene.candidates.objects.size();
    for (std::size_t e = 0; e < scene.expressions.size(); ++e) {
      NegativeSample ns{s, e, std::nullopt, std::nullopt};
      const std::size_t target = scene.expressions[e].target;
      std::vector<std::pair<std::size_t, std::size_t>> pool;
      for (std::size_t f = 0; f < scene.expressions.size(); ++f) {
        if (scene.expressions[f].target != target) pool.emplace_back(s, f);
      }
      if (pool.empty()) {
        for (std::size_t t = 0; t < batch.size(); ++t) {
          if (t == s) continue;
          for (std::size_t f = 0; f < batch[t]->expressions.size(); ++f) pool.emplace_back(t, f);
        }
      }
      if (!pool.empty()) ns.other_expression = pool[rng.index(pool.size())];
      if (n_objects > 1) {
        std::size_t k = rng.index(n_objects - 1);
        if (k >= target) ++k;
        ns.other_object = k;
      }
      out.push_back(ns);
    }
  }
  return out;
}

double attribute_weight(double freq) { return 1.0 / std::sqrt(std::max(freq, 1.0)); }

AttributeLabelTable::AttributeLabelTable(std::vector<double> frequencies) : freq_(std::move(frequencies)) {
  for (double f : freq_) weights_.push_back(attribute_weight(f));
}

AttributeLabelTable AttributeLabelTable::from_scenes(const std::vector<PreparedScene>& scenes,
                                                     std::size_t attribute_count) {
  std::vector<double> freq(attribute_count, 0.0);
  for (const auto& scene : scenes) {
    for (const auto& e : scene.expressions) {
      if (e.attr_labels.size() != attribute_count) throw InputError("attribute label length mismatch");
      for (std::size_t j = 0; j < attribute_count; ++j) freq[j] += e.attr_labels[j];
    }
  }
  return AttributeLabelTable(std::move(freq));
}

Tensor attribute_loss(const Tensor& probs, const ExampleExpression& expr, const AttributeLabelTable& table,
                      double lambda_attr) {
  if (!expr.has_attribute) return Tensor::scalar(0.0);
  return ad::scale_shift(ad::weighted_bce(probs, expr.attr_labels, table.weights()), lambda_attr);
}

LossBreakdown total_loss(const std::vector<const PreparedScene*>& batch, const std::vector<NegativeSample>& negatives,
                         const ad::ParamStore& params, const TrainConfig& cfg, const AttributeLabelTable& table,
                         const ForwardMode& mode) {
  const Scorer scorer(params, cfg.ablation, mode, cfg.model.match_dropout);
  const bool attr_on = cfg.ablation.use_attr && cfg.lambda_attr > 0.0;

  std::vector<std::vector<ExpressionEncoding>> expressions(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (const auto& e : batch[s]->expressions) expressions[s].push_back(scorer.encode_expression(e));
  }
  std::map<std::pair<std::size_t, std::size_t>, ObjectEncoding> objects;
  auto object = [&](std::size_t s, std::size_t i) -> const ObjectEncoding& {
    auto it = objects.find({s, i});
    if (it == objects.end()) it = objects.emplace(std::pair{s, i}, scorer.encode_object(batch[s]->candidates, i)).first;
    return it->second;
  };
  std::map<std::pair<std::size_t, std::size_t>, Tensor> probs;

  auto where = [&](const NegativeSample& ns) {
    return " (scene " + std::to_string(batch[ns.scene]->scene_id) + ", expression " + std::to_string(ns.expression) +
           ")";
  };

  std::vector<Tensor> rank_terms, attr_terms;
  for (const auto& ns : negatives) {
    const ExampleExpression& expr = batch[ns.scene]->expressions[ns.expression];
    const ObjectEncoding& target = object(ns.scene, expr.target);
    const ExpressionEncoding& query = expressions[ns.scene][ns.expression];
    const Tensor pos = scorer.score(target, query).total;
    Tensor neg_expr, neg_obj;
    if (ns.other_expression) {
      const auto [os, oe] = *ns.other_expression;
      neg_expr = scorer.score(target, expressions[os][oe]).total;
    }
    if (ns.other_object) neg_obj = scorer.score(object(ns.scene, *ns.other_object), query).total;
    Tensor rank = ranking_loss(pos, neg_expr, neg_obj, cfg);
    if (!std::isfinite(rank.item())) throw NumericalError("non-finite ranking loss" + where(ns));
    rank_terms.push_back(rank);

    if (attr_on && expr.has_attribute) {
      auto key = std::pair{ns.scene, expr.target};
      auto it = probs.find(key);
      if (it == probs.end()) it = probs.emplace(key, scorer.attribute_probs(target)).first;
      Tensor attr = attribute_loss(it->second, expr, table, cfg.lambda_attr);
      if (!std::isfinite(attr.item())) throw NumericalError("non-finite attribute loss" + where(ns));
      attr_terms.push_back(attr);
    }
  }
  LossBreakdown out;
  out.ranking = ad::sum_scalars(rank_terms);
  out.attribute = ad::sum_scalars(attr_terms);
  out.total = ad::add(out.ranking, out.attribute);
  return out;
}

}  // namespace mattnet::training
