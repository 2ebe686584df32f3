#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mattnet/harness/evaluation.hpp"

namespace mattnet::harness {

/// Everything needed to explain one comprehension: word attention, module
/// weights, their products, per-candidate score breakdowns, the spatial
/// attention of the chosen object and its five most likely attributes.
nlohmann::json inspect_bundle(const PreparedScene& scene, const ExampleExpression& expr, const ad::ParamStore& params,
                              const AblationConfig& ablation, const std::vector<std::string>& attribute_names);

/// {"tokens", "attn": {"subj", "loc", "rel"}, "weights"}
nlohmann::json attention_dump(const std::vector<std::string>& tokens, const lang::LanguageOutput& language,
                              const ad::Tensor& weights);
/// {"object_id", "grid"} with the attention reshaped to g x g.
nlohmann::json spatial_dump(std::size_t object_id, const ad::Tensor& attention);

}  // namespace mattnet::harness
