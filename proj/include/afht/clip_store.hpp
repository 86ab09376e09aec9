#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace afht {

// Raw 8-bit RGB frames of one clip, laid out (T, H, W, 3).
struct ClipFrames {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  ClipFrames() = default;
  ClipFrames(int t, int h, int w)
      : frames(t), height(h), width(w), data(static_cast<std::size_t>(t) * h * w * 3, 0) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width * 3; }
  std::uint8_t* frame(int t) { return data.data() + t * frame_size(); }
  const std::uint8_t* frame(int t) const { return data.data() + t * frame_size(); }
};

// AFVC container: magic "AFVC", then T, H, W as little-endian u32, then
// T*H*W*3 bytes.
void save_clip(const ClipFrames& clip, const std::string& path);
ClipFrames load_clip(const std::string& path);

// Frame indices {t0 - (n-1)*stride, ..., t0 - stride, t0}; negative indices
// repeat frame 0.
std::vector<int> clip_window_indices(int t0, int n, int stride);

// Temporal window of real-valued frames in [0, 1], target frame last.
struct ClipWindow {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // (T, H, W, 3)
  int target_index = 0;        // source frame index of the final slot
  int stride = 1;
  std::vector<int> source_indices;

  double& at(int t, int y, int x, int c) {
    return pixels[((static_cast<std::size_t>(t) * height + y) * width + x) * 3 + c];
  }
  double at(int t, int y, int x, int c) const {
    return pixels[((static_cast<std::size_t>(t) * height + y) * width + x) * 3 + c];
  }
};

ClipWindow build_clip_window(const ClipFrames& clip, int t0, int n, int stride);

// Loads clip files on first use, resolving relative paths against a base
// directory. Paired clips that share a frame file are loaded once.
class ClipCache {
 public:
  explicit ClipCache(std::string base_dir = {}) : base_dir_(std::move(base_dir)) {}
  const ClipFrames& get(const std::string& frames_path);
  std::string resolve(const std::string& frames_path) const;
  const std::string& base_dir() const { return base_dir_; }

 private:
  std::string base_dir_;
  std::map<std::string, ClipFrames> clips_;
};

}  // namespace afht
