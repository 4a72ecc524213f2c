#include "visforge/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "visforge/error.hpp"

namespace visforge {

namespace {

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

bool is_valid(const BBox& b) {
  return in_unit(b.x1) && in_unit(b.y1) && in_unit(b.x2) && in_unit(b.y2) && b.x2 > b.x1 &&
         b.y2 > b.y1 && b.area() > 0.0;
}

BBox make_bbox(double x1, double y1, double x2, double y2) {
  BBox b{x1, y1, x2, y2};
  if (!is_valid(b)) {
    throw Error(ErrorCode::DegenerateBox, "box is outside the unit square or has no area");
  }
  return b;
}

BBox clamp_bbox(const std::array<double, 4>& raw) {
  for (double v : raw) {
    if (std::isnan(v)) throw Error(ErrorCode::DegenerateBox, "box coordinate is NaN");
  }
  auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
  double ax = unit(raw[0]), ay = unit(raw[1]), bx = unit(raw[2]), by = unit(raw[3]);
  BBox b{std::min(ax, bx), std::min(ay, by), std::max(ax, bx), std::max(ay, by)};
  if (!(b.x2 > b.x1) || !(b.y2 > b.y1) || !(b.area() > 0.0)) {
    throw Error(ErrorCode::DegenerateBox, "clamped box has zero area");
  }
  return b;
}

bool bbox_contains(const BBox& outer, const BBox& inner) {
  return inner.x1 >= outer.x1 && inner.y1 >= outer.y1 && inner.x2 <= outer.x2 &&
         inner.y2 <= outer.y2;
}

double bbox_intersection_area(const BBox& a, const BBox& b) {
  double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double bbox_iou(const BBox& a, const BBox& b) {
  if (a == b) return 1.0;
  double inter = bbox_intersection_area(a, b);
  double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

void to_json(nlohmann::json& j, const BBox& b) { j = nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

void from_json(const nlohmann::json& j, BBox& b) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorCode::SchemaError, "bbox must be an array of four numbers");
  }
  std::array<double, 4> v{};
  for (size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::SchemaError, "bbox entries must be numbers");
    v[i] = j[i].get<double>();
  }
  b = make_bbox(v[0], v[1], v[2], v[3]);
}

}  // namespace visforge
