#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mattnet/language/language_net.hpp"
#include "mattnet/visual/scene.hpp"

namespace mattnet::training {

/// One referring expression ready for scoring.
struct ExampleExpression {
  lang::Expression expression;
  std::vector<std::string> tokens;
  std::size_t target = 0;  // index into the scene's objects
  std::string kind;
  std::vector<double> attr_labels;
  bool has_attribute = false;  // mentions at least one attribute word
  // Hard phrase masks from the template parser (parser mode only).
  std::array<std::vector<double>, lang::kModuleCount> parser_masks;
};

/// A scene with its candidate regions (in object order) and expressions.
struct PreparedScene {
  std::uint64_t scene_id = 0;
  visual::SceneContext candidates;
  std::vector<visual::Box> gold_boxes;  // true box of every object
  std::vector<ExampleExpression> expressions;
};

/// Sizes a model needs from the data.
struct DataShape {
  std::size_t vocab_size = 0;
  std::size_t max_length = 12;
  std::size_t feature_dim = 16;
  std::size_t grid_side = 7;
  std::size_t attribute_count = 11;
};

}  // namespace mattnet::training
