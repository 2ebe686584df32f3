#include "mattnet/visual/geometry.hpp"

#include <algorithm>
#include <string>

#include "mattnet/errors.hpp"

namespace mattnet::visual {

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw InputError("iou: degenerate (zero-area) box");
  const double iw = std::min(a.x_br, b.x_br) - std::max(a.x_tl, b.x_tl);
  const double ih = std::min(a.y_br, b.y_br) - std::max(a.y_tl, b.y_tl);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

Box clamp_to_canvas(const Box& b, double canvas_w, double canvas_h) {
  return {std::clamp(b.x_tl, 0.0, canvas_w), std::clamp(b.y_tl, 0.0, canvas_h), std::clamp(b.x_br, 0.0, canvas_w),
          std::clamp(b.y_br, 0.0, canvas_h)};
}

std::array<double, 5> absolute_location(const Box& b, double canvas_w, double canvas_h) {
  return {b.x_tl / canvas_w, b.y_tl / canvas_h, b.x_br / canvas_w, b.y_br / canvas_h,
          b.area() / (canvas_w * canvas_h)};
}

std::array<double, 5> relative_offset(const Box& self, const Box& other) {
  const double w = self.width(), h = self.height();
  return {(other.x_tl - self.x_tl) / w, (other.y_tl - self.y_tl) / h, (other.x_br - self.x_br) / w,
          (other.y_br - self.y_br) / h, other.area() / self.area()};
}

}  // namespace mattnet::visual
