#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afht/types.hpp"

namespace afht {

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // row-major RGB
};

// Heatmap in [0, 1] as an 8-bit binary PGM (value * 255, rounded, clamped).
void save_pgm(const Grid& heatmap, const std::string& path);
void save_ppm(const RgbImage& image, const std::string& path);

// Jet-like colormap for a value in [0, 1].
void colormap(double v, std::uint8_t rgb[3]);

// Colormapped heatmap blended over an RGB frame at the given alpha.
RgbImage overlay_heatmap(const std::uint8_t* frame_rgb, const Grid& heatmap, double alpha = 0.5);

// Raw grid: H and W as little-endian u32, then H*W little-endian f32 values.
void save_grid(const Grid& grid, const std::string& path);
Grid load_grid(const std::string& path);

}  // namespace afht
