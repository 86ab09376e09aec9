#pragma once

#include <span>

#include "afht/types.hpp"

namespace afht::geom {

// Shoelace signed area; positive for counter-clockwise order in a y-up frame.
double signed_area(std::span<const Point2> polygon);

// True if two closed segments intersect (including touching and collinear overlap).
bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d);

// True if two non-adjacent edges cross at a point interior to both. Zero-area
// bowties are caught here while collinear (degenerate) quads are not.
bool has_proper_crossing(std::span<const Point2> polygon);

// True if no pair of non-adjacent edges of the closed polygon intersect.
bool is_simple(std::span<const Point2> polygon);

// Even-odd point-in-polygon test; points on an edge count as inside.
bool contains(std::span<const Point2> polygon, Point2 p);

}  // namespace afht::geom
