#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afht/types.hpp"

namespace afht {

struct TargetHeatmap {
  Grid values;  // peak-normalized, all entries in (0, 1]
  Point2 centroid;
  double sigma = 0.0;
};

enum class MaskSource { kPolygon, kThreshold };

struct RegionMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;  // row-major, 0 or 1
  MaskSource source = MaskSource::kPolygon;
  bool empty = false;

  RegionMask() = default;
  RegionMask(int h, int w, MaskSource src)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0), source(src) {}

  bool at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v = true) {
    values[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  std::size_t count() const;
};

// Area centroid of a simple quad; falls back to the vertex mean when the
// area is below 1e-9. Throws ValidationError for self-intersecting input,
// naming `label` when given.
Point2 polygon_centroid(const Quad& keypoints, const std::string& label = {});

// Half the equivalent-circle radius of the quad, scaled by `scale` / 0.5.
// Degenerate quads get `min_sigma`.
double default_sigma(const Quad& keypoints, double scale = 0.5, double min_sigma = 1.0);

// exp(-r^2 / 2 sigma^2) sampled at pixel centers (integer coordinates),
// divided by its maximum over the grid.
TargetHeatmap gaussian_target(Point2 centroid, double sigma, int height, int width);

// Pixel (x, y) is set iff its center (x, y) lies inside or on the polygon.
RegionMask rasterize_polygon(const Quad& keypoints, int height, int width);

// Gaussian at the mean coordinate of the set pixels.
TargetHeatmap mask_centroid_heatmap(const RegionMask& mask, double sigma);

// Heatmap for a predicted polygon (baseline conversion).
TargetHeatmap polygon_heatmap(const Quad& keypoints, double sigma, int height, int width);

}  // namespace afht
