#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "afht/clip_store.hpp"
#include "afht/data_model.hpp"
#include "afht/types.hpp"

namespace afht {

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

// Default sprite colors, one per tool class.
std::map<std::string, Rgb> default_tool_palette();

struct SceneConfig {
  int height = 64;
  int width = 64;
  int frames = 48;
  int contact_frame = 32;  // the tip reaches its endpoint here; pre-action ends one frame earlier
  // Tool classes present in the scene (1 or 2, distinct). Empty means the
  // prompt's tool alone.
  std::vector<std::string> tools;
  int blob_count = 7;
  double blob_sigma_min = 6.0;
  double blob_sigma_max = 14.0;
  double speed_min = 0.05;  // px / frame
  double speed_max = 0.15;
  double quad_half_size = 6.0;
  double min_separation = 16.0;  // between per-tool affordance centroids
  double noise = 0.01;           // per-pixel intensity noise
  std::map<std::string, Rgb> palette = default_tool_palette();
  std::uint64_t seed = 0;
};

// Tool-frame offset of the affordance center from the tip endpoint:
// x along the motion direction, y along its left normal.
Point2 action_offset(const std::string& action);

struct ToolTrack {
  std::string tool;
  Point2 endpoint;   // tip position from the contact frame on
  Point2 direction;  // unit motion direction
  double speed = 0.0;
};

// Sprite layout of a scene; depends only on the scene config.
struct SceneLayout {
  std::vector<ToolTrack> tracks;
  int attempts = 0;
};
SceneLayout layout_scene(const SceneConfig& scene);

Point2 tip_position(const ToolTrack& track, int frame, int contact_frame);
// Affordance quad of a track for a given action, corners counter-clockwise in
// image coordinates.
Quad affordance_quad(const ToolTrack& track, const std::string& action, double half_size);

struct GeneratedClip {
  ClipFrames frames;
  AnnotationRecord record;  // clip_id, case_id, split and frames_path left for the caller
};

// Renders the scene and annotates the prompt's tool. Rendering does not
// depend on the prompt, so prompts for different tools of one scene share
// identical frames.
GeneratedClip generate_clip(const SceneConfig& scene, const PromptTriplet& triplet);
ClipFrames render_scene(const SceneConfig& scene, const SceneLayout& layout);

// Largest-remainder apportionment of n items (ties to the earlier split).
std::array<int, 3> split_sizes(int n, const std::array<double, 3>& ratios);

struct DatasetConfig {
  int n_cases = 20;
  int clips_per_case = 2;
  std::array<double, 3> ratios{0.7, 0.1, 0.2};
  std::vector<PromptTriplet> vocabulary;  // empty means all six pairs on cholecystectomy
  double two_tool_fraction = 0.5;
  SceneConfig scene;  // template; seed and tools are set per scene
  std::uint64_t seed = 0;
};

std::vector<PromptTriplet> default_vocabulary();

// Flat key = value settings for dataset generation; `vocabulary` names a
// vocabulary file. Unknown keys throw ParameterError.
std::vector<std::string> dataset_config_keys();
void apply_dataset_key_values(DatasetConfig& cfg, const std::map<std::string, std::string>& kv);

// Writes frames/<scene>.afvc, manifest.jsonl and vocabulary.tsv under
// `out_dir` and returns the manifest.
Manifest generate_dataset(const DatasetConfig& cfg, const std::string& out_dir);

}  // namespace afht
