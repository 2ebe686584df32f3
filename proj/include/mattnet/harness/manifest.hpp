#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace mattnet::harness {

/// `git describe` of the source tree at build time.
std::string git_describe();

/// <dir>/manifest.json for a directory output, else <file>.manifest.json.
std::filesystem::path manifest_path(const std::filesystem::path& output);

/// {"command", "config", "seed", "git_describe"} next to `output`.
void write_manifest(const std::filesystem::path& output, const std::string& command, const nlohmann::json& config,
                    std::uint64_t seed);

}  // namespace mattnet::harness
