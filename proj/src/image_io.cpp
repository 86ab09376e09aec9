#include "afht/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "afht/binary_io.hpp"
#include "afht/error.hpp"

namespace afht {
namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace

void save_pgm(const Grid& g, const std::string& path) {
  auto out = open_out(path);
  out << "P5\n" << g.width << ' ' << g.height << "\n255\n";
  for (double v : g.values) out.put(static_cast<char>(to_byte(v)));
}

void save_ppm(const RgbImage& img, const std::string& path) {
  auto out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

void colormap(double v, std::uint8_t rgb[3]) {
  v = std::clamp(v, 0.0, 1.0);
  const double r = std::clamp(1.5 - std::abs(4.0 * v - 3.0), 0.0, 1.0);
  const double g = std::clamp(1.5 - std::abs(4.0 * v - 2.0), 0.0, 1.0);
  const double b = std::clamp(1.5 - std::abs(4.0 * v - 1.0), 0.0, 1.0);
  rgb[0] = to_byte(r);
  rgb[1] = to_byte(g);
  rgb[2] = to_byte(b);
}

RgbImage overlay_heatmap(const std::uint8_t* frame, const Grid& hm, double alpha) {
  RgbImage img{hm.height, hm.width, std::vector<std::uint8_t>(hm.size() * 3)};
  for (std::size_t i = 0; i < hm.size(); ++i) {
    std::uint8_t c[3];
    colormap(hm.values[i], c);
    for (int k = 0; k < 3; ++k) {
      const double v = (1.0 - alpha) * frame[i * 3 + k] + alpha * c[k];
      img.data[i * 3 + k] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return img;
}

void save_grid(const Grid& g, const std::string& path) {
  auto out = open_out(path);
  binio::write_u32(out, static_cast<std::uint32_t>(g.height));
  binio::write_u32(out, static_cast<std::uint32_t>(g.width));
  for (double v : g.values) binio::write_f32(out, static_cast<float>(v));
}

Grid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const auto h = binio::read_u32(in);
  const auto w = binio::read_u32(in);
  if (h == 0 || w == 0 || h > 1u << 15 || w > 1u << 15) throw ValidationError("grid file " + path + ": bad shape");
  Grid g(static_cast<int>(h), static_cast<int>(w));
  for (double& v : g.values) v = binio::read_f32(in);
  return g;
}

}  // namespace afht
