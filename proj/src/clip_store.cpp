#include "afht/clip_store.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "afht/binary_io.hpp"
#include "afht/error.hpp"

namespace afht {

void save_clip(const ClipFrames& clip, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write clip " + path);
  out.write("AFVC", 4);
  binio::write_u32(out, static_cast<std::uint32_t>(clip.frames));
  binio::write_u32(out, static_cast<std::uint32_t>(clip.height));
  binio::write_u32(out, static_cast<std::uint32_t>(clip.width));
  out.write(reinterpret_cast<const char*>(clip.data.data()),
            static_cast<std::streamsize>(clip.data.size()));
  if (!out) throw IoError("write failed for clip " + path);
}

ClipFrames load_clip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open clip " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "AFVC", 4) != 0)
    throw IoError("not an AFVC clip: " + path);
  const auto t = binio::read_u32(in);
  const auto h = binio::read_u32(in);
  const auto w = binio::read_u32(in);
  if (t == 0 || h == 0 || w == 0 || t > 100000 || h > 16384 || w > 16384)
    throw IoError("implausible clip header in " + path);
  ClipFrames clip(static_cast<int>(t), static_cast<int>(h), static_cast<int>(w));
  if (!in.read(reinterpret_cast<char*>(clip.data.data()), static_cast<std::streamsize>(clip.data.size())))
    throw IoError("truncated clip " + path);
  return clip;
}

std::vector<int> clip_window_indices(int t0, int n, int stride) {
  if (n < 1 || stride < 1) throw ParameterError("clip window needs N >= 1 and stride >= 1");
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) {
    const int t = t0 - (n - 1 - i) * stride;
    idx[i] = t < 0 ? 0 : t;
  }
  return idx;
}

ClipWindow build_clip_window(const ClipFrames& clip, int t0, int n, int stride) {
  if (t0 < 0 || t0 >= clip.frames)
    throw ParameterError("target frame " + std::to_string(t0) + " outside clip of " +
                         std::to_string(clip.frames) + " frames");
  ClipWindow w;
  w.frames = n;
  w.height = clip.height;
  w.width = clip.width;
  w.target_index = t0;
  w.stride = stride;
  w.source_indices = clip_window_indices(t0, n, stride);
  w.pixels.resize(static_cast<std::size_t>(n) * clip.frame_size());
  for (int i = 0; i < n; ++i) {
    const std::uint8_t* src = clip.frame(w.source_indices[i]);
    double* dst = w.pixels.data() + i * clip.frame_size();
    for (std::size_t k = 0; k < clip.frame_size(); ++k) dst[k] = src[k] / 255.0;
  }
  return w;
}

std::string ClipCache::resolve(const std::string& frames_path) const {
  std::filesystem::path p(frames_path);
  if (p.is_absolute() || base_dir_.empty()) return p.string();
  return (std::filesystem::path(base_dir_) / p).string();
}

const ClipFrames& ClipCache::get(const std::string& frames_path) {
  auto it = clips_.find(frames_path);
  if (it != clips_.end()) return it->second;
  return clips_.emplace(frames_path, load_clip(resolve(frames_path))).first->second;
}

}  // namespace afht
