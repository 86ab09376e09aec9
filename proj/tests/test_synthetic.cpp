#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "afht/error.hpp"
#include "afht/heatmap_targets.hpp"
#include "afht/synthetic_gen.hpp"

using namespace afht;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SceneConfig short_scene(std::uint64_t seed) {
  SceneConfig s;
  s.frames = 16;
  s.contact_frame = 10;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("split sizes use largest remainders") {
  CHECK(split_sizes(20, {0.7, 0.1, 0.2}) == std::array<int, 3>{14, 2, 4});
  CHECK(split_sizes(20, {1, 0, 0}) == std::array<int, 3>{20, 0, 0});
  CHECK(split_sizes(10, {0.5, 0.25, 0.25}) == std::array<int, 3>{5, 3, 2});
  CHECK_THROWS_AS(split_sizes(20, {0.5, 0.1, 0.1}), ParameterError);
  CHECK_THROWS_AS(split_sizes(3, {0.9, 0.05, 0.05}), ParameterError);
}

TEST_CASE("scene generation is deterministic") {
  const SceneConfig s = short_scene(42);
  const PromptTriplet p{"cholecystectomy", "hook", "dissect"};
  const GeneratedClip a = generate_clip(s, p), b = generate_clip(s, p);
  CHECK(a.frames.data == b.frames.data);
  CHECK(a.record.same_fields(b.record));
  const GeneratedClip c = generate_clip(short_scene(43), p);
  CHECK(a.frames.data != c.frames.data);
}

TEST_CASE("affordance quad sits at the action offset from the tip endpoint") {
  for (const auto& [tool, action] : std::vector<std::pair<std::string, std::string>>{
           {"hook", "dissect"}, {"grasper", "grasp"}, {"clipper", "clip"}, {"scissors", "cut"}}) {
    SceneConfig s = short_scene(7);
    s.tools = {tool};
    const SceneLayout layout = layout_scene(s);
    REQUIRE(layout.tracks.size() == 1);
    const GeneratedClip g = generate_clip(s, {"cholecystectomy", tool, action});
    const Point2 c = polygon_centroid(g.record.keypoints);
    const Point2 e = layout.tracks[0].endpoint;
    const Point2 off = action_offset(action);
    CHECK(std::hypot(c.x - e.x, c.y - e.y) == doctest::Approx(std::hypot(off.x, off.y)).epsilon(1e-9));
    CHECK(tip_position(layout.tracks[0], s.contact_frame, s.contact_frame) == e);
    CHECK(tip_position(layout.tracks[0], s.frames - 1, s.contact_frame) == e);
    CHECK(g.record.pre_action_end == s.contact_frame - 1);
  }
}

TEST_CASE("two-tool scenes separate the per-tool targets and share frames") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneConfig s = short_scene(seed);
    s.tools = {"hook", "grasper"};
    const GeneratedClip a = generate_clip(s, {"cholecystectomy", "hook", "dissect"});
    const GeneratedClip b = generate_clip(s, {"cholecystectomy", "grasper", "grasp"});
    CHECK(a.frames.data == b.frames.data);
    const Point2 ca = polygon_centroid(a.record.keypoints), cb = polygon_centroid(b.record.keypoints);
    CHECK(std::hypot(ca.x - cb.x, ca.y - cb.y) >= 16.0);
  }
}

TEST_CASE("dataset regeneration is byte identical and every record is valid") {
  const fs::path root = fs::temp_directory_path() / "afht_synth_test";
  fs::remove_all(root);
  DatasetConfig cfg;
  cfg.n_cases = 6;
  cfg.ratios = {1, 0, 0};
  cfg.scene = short_scene(0);
  cfg.seed = 11;
  const Manifest a = generate_dataset(cfg, (root / "a").string());
  generate_dataset(cfg, (root / "b").string());
  CHECK(slurp(root / "a" / "manifest.jsonl") == slurp(root / "b" / "manifest.jsonl"));
  for (const auto& r : a.records) {
    CHECK(r.split == Split::kTrain);
    AnnotationRecord copy = r;
    CHECK_NOTHROW(validate_record(copy));
    CHECK(slurp(root / "a" / r.frames_path) == slurp(root / "b" / r.frames_path));
  }
  CHECK(a.records.size() == 12);
  fs::remove_all(root);
}

TEST_CASE("dataset keys") {
  DatasetConfig cfg;
  apply_dataset_key_values(cfg, {{"n_cases", "9"}, {"two_tool_fraction", "1"}, {"speed_max", "0.2"}});
  CHECK(cfg.n_cases == 9);
  CHECK(cfg.two_tool_fraction == 1.0);
  CHECK(cfg.scene.speed_max == 0.2);
  CHECK_THROWS_AS(apply_dataset_key_values(cfg, {{"bogus", "1"}}), ParameterError);
}
