#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mattnet/autodiff/param_store.hpp"

namespace mattnet::ad {

inline constexpr int kCheckpointFormatVersion = 1;

/// {"format_version":1, "params": {name: {"shape":[...], "values":[...]}}}
nlohmann::json checkpoint_to_json(const ParamStore& params);
ParamStore checkpoint_from_json(const nlohmann::json& doc);

/// Serialized text; doubles are printed with round-trip precision.
std::string dump_checkpoint(const ParamStore& params);
void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace mattnet::ad
