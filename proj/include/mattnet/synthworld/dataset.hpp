#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mattnet/synthworld/world.hpp"

namespace mattnet::synth {

struct Dataset {
  WorldSpec spec;
  std::vector<SyntheticScene> train;
  std::vector<SyntheticScene> val;
  std::vector<SyntheticScene> test;

  const std::vector<SyntheticScene>& split(const std::string& name) const;
};

/// Scene ids run 0..n_train-1, then val, then test, so splits are disjoint.
/// Each scene draws from its own stream derived from (spec.seed, scene_id).
Dataset build_dataset(const World& world, std::size_t n_train, std::size_t n_val, std::size_t n_test);

/// One dataset line. Grids are written only when `materialize` is set.
nlohmann::json scene_to_json(const World& world, const SyntheticScene& scene, bool materialize);
/// Validates names, boxes, ids and grid shapes; throws InputError.
SyntheticScene scene_from_json(const World& world, const nlohmann::json& doc);

void write_split(const World& world, const std::vector<SyntheticScene>& scenes, const std::filesystem::path& path,
                 bool materialize);
std::vector<SyntheticScene> read_split(const World& world, const std::filesystem::path& path);

/// Writes world.json, vocab.json and {train,val,test}.jsonl under `dir`.
void write_dataset(const World& world, const Dataset& data, const std::filesystem::path& dir, bool materialize);
/// Reads a directory written by write_dataset.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace mattnet::synth
