#pragma once

#include <cstddef>
#include <vector>

#include "mattnet/autodiff/tensor.hpp"
#include "mattnet/visual/geometry.hpp"

namespace mattnet::visual {

/// A candidate region with its two feature grids. Grids are stored cell-major,
/// [G x d]: row i is the d-dim feature of cell i (row-major over the g x g grid).
/// `grid_low` carries colour/part cues, `grid_high` category cues.
struct CandidateObject {
  Box box;
  int category = 0;
  ad::Tensor grid_low;
  ad::Tensor grid_high;
  ad::Tensor pooled_feature;  // mean of grid_high over cells

  std::size_t cells() const { return grid_high.rows(); }
  std::size_t feature_dim() const { return grid_high.cols(); }
};

/// Builds a candidate and its pooled feature. Throws DimensionError when the
/// grids are not both [cells x dim].
CandidateObject make_candidate(const Box& box, int category, std::vector<double> low, std::vector<double> high,
                               std::size_t cells, std::size_t dim);

struct SceneContext {
  double canvas_w = 0.0;
  double canvas_h = 0.0;
  std::vector<CandidateObject> objects;

  /// Throws InputError when empty, a box is degenerate or outside the canvas,
  /// or a pooled feature disagrees with its grid.
  void validate() const;
};

inline constexpr std::size_t kMaxNeighbors = 5;

/// Up to `k` other objects ordered by squared box-centre distance, ties by
/// ascending index. `same_category` restricts to the candidate's category.
std::vector<std::size_t> nearest_neighbors(const SceneContext& scene, std::size_t index, bool same_category,
                                           std::size_t k = kMaxNeighbors);

}  // namespace mattnet::visual
