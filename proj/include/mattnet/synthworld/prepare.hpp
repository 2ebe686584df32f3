#pragma once

#include <vector>

#include "mattnet/synthworld/world.hpp"
#include "mattnet/training/example.hpp"

namespace mattnet::synth {

training::DataShape data_shape(const World& world);

/// Candidates for `mode` (jittered draws use the scene's jitter stream) plus
/// tokenized expressions, attribute flags and parser masks.
training::PreparedScene prepare_scene(const World& world, const SyntheticScene& scene, CandidateMode mode,
                                      double jitter);
std::vector<training::PreparedScene> prepare_split(const World& world, const std::vector<SyntheticScene>& scenes,
                                                   CandidateMode mode, double jitter);

}  // namespace mattnet::synth
