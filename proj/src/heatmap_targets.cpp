#include "afht/heatmap_targets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "afht/error.hpp"
#include "afht/geometry.hpp"

namespace afht {

std::size_t RegionMask::count() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

Point2 polygon_centroid(const Quad& q, const std::string& label) {
  const double area = geom::signed_area(q);
  if (geom::has_proper_crossing(q))
    throw ValidationError((label.empty() ? std::string("polygon") : "clip '" + label + "'") +
                          ": self-intersecting quadrilateral");
  if (std::abs(area) < 1e-9) {
    Point2 mean;
    for (const Point2& p : q) {
      mean.x += p.x / 4.0;
      mean.y += p.y / 4.0;
    }
    return mean;
  }
  if (!geom::is_simple(q))
    throw ValidationError((label.empty() ? std::string("polygon") : "clip '" + label + "'") +
                          ": self-intersecting quadrilateral");
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Point2& a = q[i];
    const Point2& b = q[(i + 1) % q.size()];
    const double w = a.x * b.y - b.x * a.y;
    cx += (a.x + b.x) * w;
    cy += (a.y + b.y) * w;
  }
  return {cx / (6.0 * area), cy / (6.0 * area)};
}

double default_sigma(const Quad& q, double scale, double min_sigma) {
  const double area = std::abs(geom::signed_area(q));
  return std::max(min_sigma, scale * std::sqrt(area / std::numbers::pi));
}

TargetHeatmap gaussian_target(Point2 c, double sigma, int height, int width) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian_target: sigma must be > 0");
  if (height < 1 || width < 1) throw ParameterError("gaussian_target: empty grid");
  TargetHeatmap t{Grid(height, width), c, sigma};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double peak = 0.0;
  for (int y = 0; y < height; ++y) {
    const double dy = y - c.y;
    for (int x = 0; x < width; ++x) {
      const double dx = x - c.x;
      const double v = std::exp(-(dx * dx + dy * dy) * inv);
      t.values.at(y, x) = v;
      peak = std::max(peak, v);
    }
  }
  if (!(peak > 0.0)) throw NumericError("gaussian_target: centroid too far from the grid");
  for (double& v : t.values.values) v /= peak;
  return t;
}

RegionMask rasterize_polygon(const Quad& q, int height, int width) {
  if (height < 1 || width < 1) throw ParameterError("rasterize_polygon: empty grid");
  RegionMask m(height, width, MaskSource::kPolygon);
  if (std::abs(geom::signed_area(q)) < 1e-9) {
    m.empty = true;
    return m;
  }
  double x0 = q[0].x, x1 = q[0].x, y0 = q[0].y, y1 = q[0].y;
  for (const Point2& p : q) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const int xs = std::max(0, static_cast<int>(std::ceil(x0)));
  const int xe = std::min(width - 1, static_cast<int>(std::floor(x1)));
  const int ys = std::max(0, static_cast<int>(std::ceil(y0)));
  const int ye = std::min(height - 1, static_cast<int>(std::floor(y1)));
  for (int y = ys; y <= ye; ++y)
    for (int x = xs; x <= xe; ++x)
      if (geom::contains(q, {static_cast<double>(x), static_cast<double>(y)})) m.set(y, x);
  m.empty = m.count() == 0;
  return m;
}

TargetHeatmap mask_centroid_heatmap(const RegionMask& mask, double sigma) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        sx += x;
        sy += y;
        ++n;
      }
  if (n == 0) throw ValidationError("mask_centroid_heatmap: empty mask");
  return gaussian_target({sx / n, sy / n}, sigma, mask.height, mask.width);
}

TargetHeatmap polygon_heatmap(const Quad& q, double sigma, int height, int width) {
  return gaussian_target(polygon_centroid(q), sigma, height, width);
}

}  // namespace afht
