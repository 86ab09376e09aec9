#include "afht/synthetic_gen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <stdexcept>

#include "afht/error.hpp"
#include "afht/heatmap_targets.hpp"
#include "afht/rng.hpp"

namespace afht {
namespace {

constexpr int kMaxLayoutAttempts = 1000;

struct Segment {
  Point2 a, b;  // tool frame: x forward, y along the normal
};

std::vector<Segment> tip_segments(const std::string& tool) {
  if (tool == "hook") return {{{0, 0}, {2, 0}}, {{2, 0}, {2, 2.5}}};
  if (tool == "grasper") return {{{0, -1.5}, {3, -2.5}}, {{0, 1.5}, {3, 2.5}}};
  if (tool == "scissors") return {{{0, -1}, {3.5, 1}}, {{0, 1}, {3.5, -1}}};
  if (tool == "clipper") return {{{0, -2}, {3, -2}}, {{0, 2}, {3, 2}}, {{3, -2}, {3, 2}}};
  throw ValidationError("unknown tool '" + tool + "'");
}

double segment_distance(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

Point2 to_image(Point2 origin, Point2 d, Point2 local) {
  const Point2 n{-d.y, d.x};
  return {origin.x + local.x * d.x + local.y * n.x, origin.y + local.x * d.y + local.y * n.y};
}

std::vector<std::string> actions_of(const std::string& tool) {
  std::vector<std::string> out;
  for (const auto& p : kToolActionPairs)
    if (tool == p.tool) out.emplace_back(p.action);
  return out;
}

bool quad_inside(const Quad& q, int h, int w) {
  return std::all_of(q.begin(), q.end(),
                     [&](Point2 p) { return p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1.0 && p.y <= h - 1.0; });
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

void check_scene(const SceneConfig& s) {
  if (s.height < 16 || s.width < 16) throw ParameterError("scene frames must be at least 16x16");
  if (s.frames < 2 || s.contact_frame < 1 || s.contact_frame >= s.frames)
    throw ParameterError("scene needs 1 <= contact_frame < frames");
  if (s.tools.empty() || s.tools.size() > 2) throw ParameterError("scene needs one or two tools");
  if (s.tools.size() == 2 && s.tools[0] == s.tools[1]) throw ParameterError("scene tools must be distinct classes");
  if (!(s.speed_min > 0.0 && s.speed_max >= s.speed_min)) throw ParameterError("bad speed range");
  if (!(s.blob_sigma_min > 0.0 && s.blob_sigma_max >= s.blob_sigma_min)) throw ParameterError("bad blob sigma range");
  for (const auto& t : s.tools)
    if (!s.palette.count(t)) throw ParameterError("no palette color for tool '" + t + "'");
}

}  // namespace

std::map<std::string, Rgb> default_tool_palette() {
  return {{"hook", {0.1, 0.85, 0.9}},
          {"grasper", {0.15, 0.85, 0.2}},
          {"scissors", {0.2, 0.3, 0.95}},
          {"clipper", {0.95, 0.9, 0.1}}};
}

Point2 action_offset(const std::string& action) {
  if (action == "dissect") return {9, 0};
  if (action == "grasp") return {7, -7};
  if (action == "clip") return {7, 7};
  if (action == "cut") return {12, 0};
  throw ValidationError("unknown action '" + action + "'");
}

Point2 tip_position(const ToolTrack& t, int frame, int contact_frame) {
  const double back = t.speed * (contact_frame - std::min(frame, contact_frame));
  return {t.endpoint.x - back * t.direction.x, t.endpoint.y - back * t.direction.y};
}

Quad affordance_quad(const ToolTrack& t, const std::string& action, double h) {
  const Point2 c = to_image(t.endpoint, t.direction, action_offset(action));
  return {to_image(c, t.direction, {-h, -h}), to_image(c, t.direction, {h, -h}), to_image(c, t.direction, {h, h}),
          to_image(c, t.direction, {-h, h})};
}

SceneLayout layout_scene(const SceneConfig& scene) {
  check_scene(scene);
  const double margin = 4.0;
  for (int attempt = 0; attempt < kMaxLayoutAttempts; ++attempt) {
    Rng rng(derive_seed(scene.seed, hash_string("layout"), attempt));
    SceneLayout lay;
    lay.attempts = attempt + 1;
    bool ok = true;
    for (const auto& tool : scene.tools) {
      ToolTrack t;
      t.tool = tool;
      t.endpoint = {rng.uniform(margin, scene.width - 1 - margin), rng.uniform(margin, scene.height - 1 - margin)};
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      t.direction = {std::cos(a), std::sin(a)};
      t.speed = rng.uniform(scene.speed_min, scene.speed_max);
      for (const auto& act : actions_of(tool))
        ok = ok && quad_inside(affordance_quad(t, act, scene.quad_half_size), scene.height, scene.width);
      lay.tracks.push_back(t);
    }
    if (ok && lay.tracks.size() == 2) {
      for (const auto& a1 : actions_of(lay.tracks[0].tool))
        for (const auto& a2 : actions_of(lay.tracks[1].tool)) {
          const Point2 c1 = polygon_centroid(affordance_quad(lay.tracks[0], a1, scene.quad_half_size));
          const Point2 c2 = polygon_centroid(affordance_quad(lay.tracks[1], a2, scene.quad_half_size));
          ok = ok && std::hypot(c1.x - c2.x, c1.y - c2.y) >= scene.min_separation;
        }
    }
    if (ok) return lay;
  }
  throw ValidationError("scene placement infeasible after " + std::to_string(kMaxLayoutAttempts) + " attempts");
}

ClipFrames render_scene(const SceneConfig& scene, const SceneLayout& layout) {
  const int H = scene.height, W = scene.width;
  std::vector<double> bg(static_cast<std::size_t>(H) * W * 3);
  {
    const double base[3] = {0.58, 0.22, 0.2};
    for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = base[i % 3];
    Rng rng(derive_seed(scene.seed, hash_string("blobs")));
    for (int b = 0; b < scene.blob_count; ++b) {
      const double cx = rng.uniform(0.0, W - 1.0), cy = rng.uniform(0.0, H - 1.0);
      const double s = rng.uniform(scene.blob_sigma_min, scene.blob_sigma_max);
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const double amp[3] = {sign * rng.uniform(0.08, 0.3), sign * rng.uniform(0.0, 0.12), sign * rng.uniform(0.0, 0.1)};
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double g = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * s * s));
          for (int c = 0; c < 3; ++c) bg[(static_cast<std::size_t>(y) * W + x) * 3 + c] += amp[c] * g;
        }
    }
  }
  ClipFrames clip(scene.frames, H, W);
  std::vector<double> img(bg.size());
  for (int t = 0; t < scene.frames; ++t) {
    img = bg;
    for (const auto& track : layout.tracks) {
      const Rgb col = scene.palette.at(track.tool);
      const Point2 tip = tip_position(track, t, scene.contact_frame);
      const Point2 d = track.direction;
      const Point2 shaft_end{tip.x - 80.0 * d.x, tip.y - 80.0 * d.y};
      std::vector<std::pair<Point2, Point2>> segs;
      for (const auto& s : tip_segments(track.tool)) segs.push_back({to_image(tip, d, s.a), to_image(tip, d, s.b)});
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const Point2 p{static_cast<double>(x), static_cast<double>(y)};
          double shade = 0.0;
          if (segment_distance(p, tip, shaft_end) <= 1.6) shade = 0.75;
          for (const auto& [a, b] : segs)
            if (segment_distance(p, a, b) <= 0.9) shade = 1.0;
          if (shade > 0.0) {
            double* px = &img[(static_cast<std::size_t>(y) * W + x) * 3];
            px[0] = shade * col.r;
            px[1] = shade * col.g;
            px[2] = shade * col.b;
          }
        }
    }
    Rng noise(derive_seed(scene.seed, hash_string("frame"), t));
    std::uint8_t* out = clip.frame(t);
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = to_byte(img[i] + scene.noise * noise.normal());
  }
  return clip;
}

GeneratedClip generate_clip(const SceneConfig& scene_in, const PromptTriplet& triplet) {
  if (!is_known_tool_action(triplet.tool, triplet.action))
    throw ValidationError("tool-action pair (" + triplet.tool + ", " + triplet.action + ") is not in the vocabulary");
  SceneConfig scene = scene_in;
  if (scene.tools.empty()) scene.tools = {triplet.tool};
  const SceneLayout layout = layout_scene(scene);
  const auto it = std::find_if(layout.tracks.begin(), layout.tracks.end(),
                               [&](const ToolTrack& t) { return t.tool == triplet.tool; });
  if (it == layout.tracks.end()) throw ValidationError("tool '" + triplet.tool + "' is not part of the scene");

  GeneratedClip out;
  out.frames = render_scene(scene, layout);
  AnnotationRecord& r = out.record;
  r.surgery = triplet.surgery;
  r.tool = triplet.tool;
  r.action = triplet.action;
  r.frame_count = scene.frames;
  r.frame_height = scene.height;
  r.frame_width = scene.width;
  r.pre_action_start = 0;
  r.pre_action_end = scene.contact_frame - 1;
  r.keypoints = affordance_quad(*it, triplet.action, scene.quad_half_size);
  r.clip_id = "clip";
  r.case_id = "case";
  r.frames_path = "clip.afvc";
  validate_record(r);
  return out;
}

std::array<int, 3> split_sizes(int n, const std::array<double, 3>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw ParameterError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("split ratios must sum to 1");
  if (n < 1) throw ParameterError("n_cases must be >= 1");
  std::array<int, 3> sizes{};
  std::array<double, 3> rem{};
  int used = 0;
  for (int i = 0; i < 3; ++i) {
    const double q = n * ratios[i];
    sizes[i] = static_cast<int>(std::floor(q + 1e-9));
    rem[i] = q - sizes[i];
    used += sizes[i];
  }
  while (used < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best] + 1e-12) best = i;
    ++sizes[best];
    rem[best] = -1.0;
    ++used;
  }
  for (int i = 0; i < 3; ++i)
    if (ratios[i] > 0.0 && sizes[i] == 0)
      throw ParameterError("n_cases = " + std::to_string(n) + " is too small to populate split '" +
                           to_string(static_cast<Split>(i)) + "'");
  return sizes;
}

std::vector<PromptTriplet> default_vocabulary() {
  std::vector<PromptTriplet> v;
  for (const auto& p : kToolActionPairs) v.push_back({"cholecystectomy", p.tool, p.action});
  return v;
}

std::vector<std::string> dataset_config_keys() {
  return {"n_cases",   "clips_per_case", "train_ratio",   "val_ratio",      "test_ratio", "two_tool_fraction",
          "seed",      "vocabulary",     "height",        "width",          "frames",     "contact_frame",
          "blob_count", "speed_min",     "speed_max",     "min_separation", "noise",      "quad_half_size"};
}

void apply_dataset_key_values(DatasetConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    try {
      std::size_t used = 0;
      auto as_int = [&] {
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(key);
        return v;
      };
      auto as_real = [&] {
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(key);
        return v;
      };
      if (key == "n_cases") cfg.n_cases = as_int();
      else if (key == "clips_per_case") cfg.clips_per_case = as_int();
      else if (key == "train_ratio") cfg.ratios[0] = as_real();
      else if (key == "val_ratio") cfg.ratios[1] = as_real();
      else if (key == "test_ratio") cfg.ratios[2] = as_real();
      else if (key == "two_tool_fraction") cfg.two_tool_fraction = as_real();
      else if (key == "seed") {
        cfg.seed = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(key);
      } else if (key == "vocabulary") cfg.vocabulary = load_vocabulary(value);
      else if (key == "height") cfg.scene.height = as_int();
      else if (key == "width") cfg.scene.width = as_int();
      else if (key == "frames") cfg.scene.frames = as_int();
      else if (key == "contact_frame") cfg.scene.contact_frame = as_int();
      else if (key == "blob_count") cfg.scene.blob_count = as_int();
      else if (key == "speed_min") cfg.scene.speed_min = as_real();
      else if (key == "speed_max") cfg.scene.speed_max = as_real();
      else if (key == "min_separation") cfg.scene.min_separation = as_real();
      else if (key == "noise") cfg.scene.noise = as_real();
      else if (key == "quad_half_size") cfg.scene.quad_half_size = as_real();
      else throw ParameterError("unknown dataset key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ParameterError("malformed value for '" + key + "': " + value);
    } catch (const std::out_of_range&) {
      throw ParameterError("value out of range for '" + key + "': " + value);
    }
  }
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
}

std::string padded(int v, int width = 3) {
  std::string s = std::to_string(v);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

}  // namespace

Manifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  if (cfg.clips_per_case < 1) throw ParameterError("clips_per_case must be >= 1");
  if (cfg.two_tool_fraction < 0.0 || cfg.two_tool_fraction > 1.0)
    throw ParameterError("two_tool_fraction must lie in [0, 1]");
  std::vector<PromptTriplet> vocab = cfg.vocabulary.empty() ? default_vocabulary() : cfg.vocabulary;
  for (const auto& t : vocab)
    if (!is_known_tool_action(t.tool, t.action))
      throw ValidationError("vocabulary pair (" + t.tool + ", " + t.action + ") is not a known tool-action pair");
  const auto sizes = split_sizes(cfg.n_cases, cfg.ratios);

  std::vector<int> order(cfg.n_cases);
  for (int i = 0; i < cfg.n_cases; ++i) order[i] = i;
  Rng split_rng(derive_seed(cfg.seed, hash_string("split")));
  shuffle(order, split_rng);
  std::vector<Split> case_split(cfg.n_cases);
  for (int i = 0; i < cfg.n_cases; ++i)
    case_split[order[i]] = i < sizes[0] ? Split::kTrain : (i < sizes[0] + sizes[1] ? Split::kVal : Split::kTest);

  std::vector<int> two_order(cfg.n_cases);
  for (int i = 0; i < cfg.n_cases; ++i) two_order[i] = i;
  Rng two_rng(derive_seed(cfg.seed, hash_string("two_tool")));
  shuffle(two_order, two_rng);
  const int n_two = static_cast<int>(std::lround(cfg.two_tool_fraction * cfg.n_cases));
  std::vector<bool> two_tool(cfg.n_cases, false);
  for (int i = 0; i < n_two; ++i) two_tool[two_order[i]] = true;

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "frames");
  Manifest m;
  m.base_dir = out_dir;
  m.vocabulary.insert(vocab.begin(), vocab.end());

  for (int c = 0; c < cfg.n_cases; ++c) {
    const std::string case_id = "case_" + padded(c);
    int emitted = 0;
    for (int s = 0; emitted < cfg.clips_per_case; ++s) {
      Rng pick(derive_seed(cfg.seed, hash_string("case"), c, s));
      std::vector<PromptTriplet> prompts{vocab[static_cast<std::size_t>(pick.uniform_int(0, vocab.size() - 1))]};
      if (two_tool[c]) {
        std::vector<PromptTriplet> others;
        for (const auto& t : vocab)
          if (t.tool != prompts[0].tool) others.push_back(t);
        if (others.empty()) throw ParameterError("two-tool scenes need at least two tool classes in the vocabulary");
        prompts.push_back(others[static_cast<std::size_t>(pick.uniform_int(0, others.size() - 1))]);
      }
      SceneConfig scene = cfg.scene;
      scene.seed = derive_seed(cfg.seed, hash_string("scene"), c, s);
      scene.tools.clear();
      for (const auto& p : prompts) scene.tools.push_back(p.tool);

      const std::string scene_id = case_id + "_s" + std::to_string(s);
      const std::string rel = "frames/" + scene_id + ".afvc";
      bool saved = false;
      for (const auto& p : prompts) {
        if (emitted >= cfg.clips_per_case) break;
        GeneratedClip g = generate_clip(scene, p);
        if (!saved) {
          save_clip(g.frames, (fs::path(out_dir) / rel).string());
          saved = true;
        }
        g.record.clip_id = scene_id + "_" + p.tool;
        g.record.case_id = case_id;
        g.record.split = case_split[c];
        g.record.frames_path = rel;
        m.records.push_back(std::move(g.record));
        ++emitted;
      }
    }
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.jsonl").string());
  save_vocabulary(vocab, (fs::path(out_dir) / "vocabulary.tsv").string());
  return m;
}

}  // namespace afht
