#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace afht {

enum class EncoderKind { kSwin, kConv };
enum class DecoderKind { kAdaLN, kCrossAttention };
enum class ConditionMode { kFull, kNoLanguage, kNoTool, kNoAction };

enum class Ablation {
  kNone,
  kNoLanguage,
  kNoTool,
  kNoAction,
  kNoHistory,
  kNoAugment,
  kXattnDecoder,
  kConvEncoder,
};

const char* to_string(Ablation a);
Ablation parse_ablation(const std::string& s);  // throws ParameterError
std::vector<std::string> ablation_names();

struct ModelConfig {
  int frame_height = 64;
  int frame_width = 64;
  int window_n = 8;  // frames per clip window, target frame last
  int stride = 8;

  EncoderKind encoder = EncoderKind::kSwin;
  int patch_t = 2;
  int patch_h = 4;
  int patch_w = 4;
  std::vector<int> enc_widths{32, 64};  // one entry per stage
  std::vector<int> enc_depths{2, 2};
  int win_t = 2;
  int win_h = 4;
  int win_w = 4;
  int enc_heads = 2;
  int mlp_ratio = 2;

  DecoderKind decoder = DecoderKind::kAdaLN;
  int dec_width = 64;
  int dec_depth = 2;
  int dec_heads = 2;
  bool adaln_gates = true;
  bool final_modulation = true;
  int xattn_tokens = 4;

  ConditionMode condition = ConditionMode::kFull;
  int token_dim = 32;
  int cond_hidden = 64;
  int cond_dim = 64;
  std::vector<std::string> surgeries{"cholecystectomy"};
  std::vector<std::string> tools{"clipper", "grasper", "hook", "scissors"};
  std::vector<std::string> actions{"clip", "cut", "dissect", "grasp"};

  double ln_eps = 1e-5;

  int stages() const { return static_cast<int>(enc_widths.size()); }
  int feature_dim() const { return enc_widths.back(); }
  // Spatial reduction between frame and feature grid.
  int spatial_reduction_h() const { return patch_h << (stages() - 1); }
  int spatial_reduction_w() const { return patch_w << (stages() - 1); }
  void validate() const;  // throws ConfigError
};

struct TrainConfig {
  double lr0 = 1e-4;
  double lr_min = 0.0;
  int epochs = 40;
  int max_steps = 0;  // 0: epochs * steps_per_epoch
  int batch = 8;
  double lambda_iou = 1.0;
  std::uint64_t seed = 0;
  std::set<std::string> augment{"hflip", "brightness", "crop"};
  Ablation ablation = Ablation::kNone;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool freeze_conditioning = false;
  bool freeze_encoder = false;
  bool freeze_decoder = false;
  int val_every = 1;  // epochs between validation passes, 0 disables
  double sigma_scale = 0.5;
  double min_sigma = 1.0;
  double tau = 0.5;
  bool all_components = false;

  void validate() const;  // throws ConfigError
};

// Applies an ablation preset; only the declared component changes.
void apply_ablation(Ablation a, ModelConfig& model, TrainConfig& train);

// Flat `key = value` text, `#` starts a comment. Keys are the struct field
// names; model and train keys share one namespace.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string read_text_file(const std::string& path);

// Sets one field; returns false if the key is unknown. Throws ParameterError
// for malformed values.
bool set_config_value(ModelConfig& m, TrainConfig& t, const std::string& key,
                      const std::string& value);
// Applies all pairs; unknown keys throw ParameterError.
void apply_key_values(ModelConfig& m, TrainConfig& t,
                      const std::map<std::string, std::string>& kv);

std::vector<std::string> model_config_keys();
std::vector<std::string> train_config_keys();
std::string to_key_values(const ModelConfig& m);
std::string to_key_values(const TrainConfig& t);

}  // namespace afht
