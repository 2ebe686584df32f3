#include "mattnet/visual/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mattnet/autodiff/ops.hpp"
#include "mattnet/errors.hpp"

namespace mattnet::visual {

CandidateObject make_candidate(const Box& box, int category, std::vector<double> low, std::vector<double> high,
                               std::size_t cells, std::size_t dim) {
  if (low.size() != cells * dim || high.size() != cells * dim) {
    throw DimensionError("candidate grids must be " + std::to_string(cells) + "x" + std::to_string(dim));
  }
  CandidateObject obj;
  obj.box = box;
  obj.category = category;
  obj.grid_low = ad::Tensor::matrix(cells, dim, std::move(low));
  obj.grid_high = ad::Tensor::matrix(cells, dim, std::move(high));
  obj.pooled_feature = ad::mean_pool(obj.grid_high, 0);
  return obj;
}

void SceneContext::validate() const {
  if (objects.empty()) throw InputError("scene has no objects");
  if (!(canvas_w > 0.0 && canvas_h > 0.0)) throw InputError("scene canvas must have positive size");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    const Box& b = o.box;
    if (!b.valid() || b.x_tl < 0.0 || b.y_tl < 0.0 || b.x_br > canvas_w || b.y_br > canvas_h) {
      throw InputError("object " + std::to_string(i) + " box is degenerate or outside the canvas");
    }
    const auto recomputed = ad::mean_pool(o.grid_high, 0);
    for (std::size_t j = 0; j < recomputed.size(); ++j) {
      if (std::abs(recomputed[j] - o.pooled_feature[j]) > 1e-12) {
        throw InputError("object " + std::to_string(i) + " pooled feature disagrees with its grid");
      }
    }
  }
}

std::vector<std::size_t> nearest_neighbors(const SceneContext& scene, std::size_t index, bool same_category,
                                           std::size_t k) {
  const auto& self = scene.objects.at(index);
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t j = 0; j < scene.objects.size(); ++j) {
    if (j == index) continue;
    const auto& other = scene.objects[j];
    if (same_category && other.category != self.category) continue;
    const double dx = other.box.center_x() - self.box.center_x();
    const double dy = other.box.center_y() - self.box.center_y();
    ranked.emplace_back(dx * dx + dy * dy, j);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].second);
  return out;
}

}  // namespace mattnet::visual
