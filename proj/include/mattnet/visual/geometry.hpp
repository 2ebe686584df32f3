#pragma once

#include <array>

namespace mattnet::visual {

/// Axis-aligned box in canvas pixels; (x_tl, y_tl) top-left, (x_br, y_br) bottom-right.
struct Box {
  double x_tl = 0.0;
  double y_tl = 0.0;
  double x_br = 0.0;
  double y_br = 0.0;

  double width() const { return x_br - x_tl; }
  double height() const { return y_br - y_tl; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_tl + x_br); }
  double center_y() const { return 0.5 * (y_tl + y_br); }
  bool valid() const { return x_br > x_tl && y_br > y_tl; }
  bool contains(double x, double y) const { return x >= x_tl && x < x_br && y >= y_tl && y < y_br; }

  bool operator==(const Box&) const = default;
};

/// Intersection over union; disjoint boxes give 0. Throws InputError for a
/// zero-area box.
double iou(const Box& a, const Box& b);

/// Clamps a box into [0, w] x [0, h].
Box clamp_to_canvas(const Box& b, double canvas_w, double canvas_h);

/// [x_tl/W, y_tl/H, x_br/W, y_br/H, w*h/(W*H)]
std::array<double, 5> absolute_location(const Box& b, double canvas_w, double canvas_h);

/// Offsets of `other` relative to `self`, normalized by self's size, plus the
/// area ratio: [(x_tl'-x_tl)/w, (y_tl'-y_tl)/h, (x_br'-x_br)/w, (y_br'-y_br)/h, w'h'/(wh)].
std::array<double, 5> relative_offset(const Box& self, const Box& other);

}  // namespace mattnet::visual
