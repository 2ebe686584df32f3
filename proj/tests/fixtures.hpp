#pragma once

// Small synthetic scenes and model sizes shared by the training and harness tests.

#include <vector>

#include "mattnet/synthworld/dataset.hpp"
#include "mattnet/synthworld/expressions.hpp"
#include "mattnet/synthworld/prepare.hpp"
#include "mattnet/training/model.hpp"

namespace mattnet::testing {

inline synth::World small_world(std::uint64_t seed = 5) {
  synth::WorldSpec spec;
  spec.seed = seed;
  spec.grid_side = 3;
  return synth::make_world(spec);
}

inline training::ModelConfig small_model() {
  training::ModelConfig m;
  m.embed_dim = 6;
  m.hidden_dim = 5;
  m.attention_dim = 5;
  m.location_dim = 6;
  m.relation_dim = 6;
  m.match_hidden = 6;
  m.match_dim = 5;
  return m;
}

inline std::vector<training::PreparedScene> small_scenes(const synth::World& world, std::size_t n,
                                                         std::uint64_t first_id = 0) {
  std::vector<synth::SyntheticScene> raw;
  for (std::uint64_t id = first_id; id < first_id + n; ++id) {
    Rng rng(derive_seed({world.spec.seed, id}));
    auto s = synth::generate_scene(world, id, rng);
    synth::populate_expressions(world, s, rng);
    raw.push_back(std::move(s));
  }
  return synth::prepare_split(world, raw, synth::CandidateMode::groundtruth, 0.0);
}

/// A generated scene cut down to three objects and three expressions about them.
inline training::PreparedScene three_by_three(const synth::World& world) {
  for (std::uint64_t id = 0;; ++id) {
    Rng rng(derive_seed({world.spec.seed, id, 33}));
    auto s = synth::generate_scene(world, id, rng);
    if (s.objects.size() != 3) continue;
    synth::populate_expressions(world, s, rng);
    if (s.expressions.size() < 3) continue;
    s.expressions.resize(3);
    bool two_targets = s.expressions[0].target_id != s.expressions[1].target_id ||
                       s.expressions[0].target_id != s.expressions[2].target_id;
    if (!two_targets) continue;
    return synth::prepare_scene(world, s, synth::CandidateMode::groundtruth, 0.0);
  }
}

inline void randomize(ad::ParamStore& params, std::uint64_t seed, double bound) {
  Rng rng(seed);
  for (auto& [_, t] : params) {
    for (double& x : t.mutable_values()) x = rng.uniform(-bound, bound);
  }
}

}  // namespace mattnet::testing
