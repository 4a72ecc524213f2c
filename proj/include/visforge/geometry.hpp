#pragma once

#include <array>

#include <json.hpp>

namespace visforge {

// Axis-aligned box in normalized image coordinates, origin top-left.
// Construct through make_bbox() or clamp_bbox(); both enforce the invariants.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 1.0;
  double y2 = 1.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  bool operator==(const BBox&) const = default;
};

/// True when all coordinates lie in [0,1] and the area is strictly positive.
bool is_valid(const BBox& b);

/// Builds a box, throwing DegenerateBox when it is not valid as given.
BBox make_bbox(double x1, double y1, double x2, double y2);

/// Clamps arbitrary reals to the unit square and reorders swapped corners.
/// Throws DegenerateBox when the clamped box has zero area.
BBox clamp_bbox(const std::array<double, 4>& raw);

/// Boundary-inclusive containment of `inner` in `outer`.
bool bbox_contains(const BBox& outer, const BBox& inner);

double bbox_intersection_area(const BBox& a, const BBox& b);

/// Intersection over union, in [0,1].
double bbox_iou(const BBox& a, const BBox& b);

// Interchange form is the 4-array [x1,y1,x2,y2].
void to_json(nlohmann::json& j, const BBox& b);
void from_json(const nlohmann::json& j, BBox& b);

}  // namespace visforge
