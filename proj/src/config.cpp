#include "afht/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "afht/error.hpp"

namespace afht {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& value) {
  throw ParameterError("invalid value '" + value + "' for '" + key + "'");
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v);
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) bad(key, v);
    return d;
  } catch (const std::logic_error&) {
    bad(key, v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, v);
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(to_int(key, s));
  if (out.empty()) bad(key, v);
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

#define AFHT_INT(obj, name) \
  Field{#name, [&] { return std::to_string(obj.name); }, [&](const std::string& v) { obj.name = to_int(#name, v); }}
#define AFHT_DBL(obj, name) \
  Field{#name, [&] { return fmt_double(obj.name); }, [&](const std::string& v) { obj.name = to_double(#name, v); }}
#define AFHT_BOOL(obj, name)                                          \
  Field{#name, [&] { return std::string(obj.name ? "true" : "false"); }, \
        [&](const std::string& v) { obj.name = to_bool(#name, v); }}
#define AFHT_STRS(obj, name) \
  Field{#name, [&] { return join(obj.name); }, [&](const std::string& v) { obj.name = split_list(v); }}
#define AFHT_INTS(obj, name) \
  Field{#name, [&] { return join_ints(obj.name); }, [&](const std::string& v) { obj.name = to_int_list(#name, v); }}

std::vector<Field> model_fields(ModelConfig& m) {
  return {
      AFHT_INT(m, frame_height),
      AFHT_INT(m, frame_width),
      AFHT_INT(m, window_n),
      AFHT_INT(m, stride),
      Field{"encoder", [&] { return std::string(m.encoder == EncoderKind::kSwin ? "swin" : "conv"); },
            [&](const std::string& v) {
              if (v == "swin") m.encoder = EncoderKind::kSwin;
              else if (v == "conv") m.encoder = EncoderKind::kConv;
              else bad("encoder", v);
            }},
      AFHT_INT(m, patch_t),
      AFHT_INT(m, patch_h),
      AFHT_INT(m, patch_w),
      AFHT_INTS(m, enc_widths),
      AFHT_INTS(m, enc_depths),
      AFHT_INT(m, win_t),
      AFHT_INT(m, win_h),
      AFHT_INT(m, win_w),
      AFHT_INT(m, enc_heads),
      AFHT_INT(m, mlp_ratio),
      Field{"decoder", [&] { return std::string(m.decoder == DecoderKind::kAdaLN ? "adaln" : "xattn"); },
            [&](const std::string& v) {
              if (v == "adaln") m.decoder = DecoderKind::kAdaLN;
              else if (v == "xattn") m.decoder = DecoderKind::kCrossAttention;
              else bad("decoder", v);
            }},
      AFHT_INT(m, dec_width),
      AFHT_INT(m, dec_depth),
      AFHT_INT(m, dec_heads),
      AFHT_BOOL(m, adaln_gates),
      AFHT_BOOL(m, final_modulation),
      AFHT_INT(m, xattn_tokens),
      Field{"condition",
            [&] {
              switch (m.condition) {
                case ConditionMode::kFull: return std::string("full");
                case ConditionMode::kNoLanguage: return std::string("no_language");
                case ConditionMode::kNoTool: return std::string("no_tool");
                case ConditionMode::kNoAction: return std::string("no_action");
              }
              return std::string("full");
            },
            [&](const std::string& v) {
              if (v == "full") m.condition = ConditionMode::kFull;
              else if (v == "no_language") m.condition = ConditionMode::kNoLanguage;
              else if (v == "no_tool") m.condition = ConditionMode::kNoTool;
              else if (v == "no_action") m.condition = ConditionMode::kNoAction;
              else bad("condition", v);
            }},
      AFHT_INT(m, token_dim),
      AFHT_INT(m, cond_hidden),
      AFHT_INT(m, cond_dim),
      AFHT_STRS(m, surgeries),
      AFHT_STRS(m, tools),
      AFHT_STRS(m, actions),
      AFHT_DBL(m, ln_eps),
  };
}

std::vector<Field> train_fields(TrainConfig& t) {
  return {
      AFHT_DBL(t, lr0),
      AFHT_DBL(t, lr_min),
      AFHT_INT(t, epochs),
      AFHT_INT(t, max_steps),
      AFHT_INT(t, batch),
      AFHT_DBL(t, lambda_iou),
      Field{"seed", [&] { return std::to_string(t.seed); },
            [&](const std::string& v) { t.seed = to_u64("seed", v); }},
      Field{"augment",
            [&] { return join(std::vector<std::string>(t.augment.begin(), t.augment.end())); },
            [&](const std::string& v) {
              std::set<std::string> flags;
              for (const auto& f : split_list(v)) {
                if (f == "none") continue;
                if (f != "hflip" && f != "brightness" && f != "crop") bad("augment", v);
                flags.insert(f);
              }
              t.augment = std::move(flags);
            }},
      Field{"ablation", [&] { return std::string(to_string(t.ablation)); },
            [&](const std::string& v) { t.ablation = parse_ablation(v); }},
      AFHT_DBL(t, weight_decay),
      AFHT_DBL(t, beta1),
      AFHT_DBL(t, beta2),
      AFHT_DBL(t, adam_eps),
      AFHT_BOOL(t, freeze_conditioning),
      AFHT_BOOL(t, freeze_encoder),
      AFHT_BOOL(t, freeze_decoder),
      AFHT_INT(t, val_every),
      AFHT_DBL(t, sigma_scale),
      AFHT_DBL(t, min_sigma),
      AFHT_DBL(t, tau),
      AFHT_BOOL(t, all_components),
  };
}

#undef AFHT_INT
#undef AFHT_DBL
#undef AFHT_BOOL
#undef AFHT_STRS
#undef AFHT_INTS

struct AblationName {
  Ablation value;
  const char* name;
};

constexpr AblationName kAblations[] = {
    {Ablation::kNone, "none"},
    {Ablation::kNoLanguage, "no_language"},
    {Ablation::kNoTool, "no_tool"},
    {Ablation::kNoAction, "no_action"},
    {Ablation::kNoHistory, "no_history"},
    {Ablation::kNoAugment, "no_augment"},
    {Ablation::kXattnDecoder, "xattn_decoder"},
    {Ablation::kConvEncoder, "conv_encoder"},
};

}  // namespace

const char* to_string(Ablation a) {
  for (const auto& e : kAblations)
    if (e.value == a) return e.name;
  return "none";
}

Ablation parse_ablation(const std::string& s) {
  for (const auto& e : kAblations)
    if (s == e.name) return e.value;
  std::string known;
  for (const auto& e : kAblations) known += std::string(known.empty() ? "" : ", ") + e.name;
  throw ParameterError("unknown ablation preset '" + s + "' (known: " + known + ")");
}

std::vector<std::string> ablation_names() {
  std::vector<std::string> out;
  for (const auto& e : kAblations) out.emplace_back(e.name);
  return out;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (frame_height < 1 || frame_width < 1) fail("frame size must be positive");
  if (window_n < 1 || stride < 1) fail("window_n and stride must be >= 1");
  if (patch_t < 1 || patch_h < 1 || patch_w < 1) fail("patch sizes must be >= 1");
  if (enc_widths.empty() || enc_widths.size() != enc_depths.size())
    fail("enc_widths and enc_depths must have the same non-zero length");
  if (frame_height % spatial_reduction_h() != 0 || frame_width % spatial_reduction_w() != 0)
    fail("frame size must be divisible by patch size times the stage reductions");
  for (int w : enc_widths)
    if (w < 1 || w % enc_heads != 0) fail("encoder widths must be divisible by enc_heads");
  for (int d : enc_depths)
    if (d < 0) fail("encoder depths must be >= 0");
  if (win_t < 1 || win_h < 1 || win_w < 1) fail("window sizes must be >= 1");
  if (dec_width < 1 || dec_width % dec_heads != 0) fail("dec_width must be divisible by dec_heads");
  if (dec_depth < 0) fail("dec_depth must be >= 0");
  if (token_dim < 1 || cond_hidden < 1 || cond_dim < 1) fail("conditioning sizes must be >= 1");
  if (xattn_tokens < 1) fail("xattn_tokens must be >= 1");
  if (surgeries.empty() || tools.empty() || actions.empty()) fail("vocabulary lists must be non-empty");
  if (!(ln_eps > 0.0)) fail("ln_eps must be > 0");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(lr0 > lr_min && lr_min >= 0.0)) fail("require lr0 > lr_min >= 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (batch < 1) fail("batch must be >= 1");
  if (lambda_iou < 0.0) fail("lambda_iou must be >= 0");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (!(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0, 1)");
  if (!(sigma_scale > 0.0) || !(min_sigma > 0.0)) fail("sigma parameters must be > 0");
}

void apply_ablation(Ablation a, ModelConfig& m, TrainConfig& t) {
  t.ablation = a;
  switch (a) {
    case Ablation::kNone: break;
    case Ablation::kNoLanguage: m.condition = ConditionMode::kNoLanguage; break;
    case Ablation::kNoTool: m.condition = ConditionMode::kNoTool; break;
    case Ablation::kNoAction: m.condition = ConditionMode::kNoAction; break;
    case Ablation::kNoHistory: m.window_n = 1; break;
    case Ablation::kNoAugment: t.augment.clear(); break;
    case Ablation::kXattnDecoder: m.decoder = DecoderKind::kCrossAttention; break;
    case Ablation::kConvEncoder: m.encoder = EncoderKind::kConv; break;
  }
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParameterError("config line " + std::to_string(line_no) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool set_config_value(ModelConfig& m, TrainConfig& t, const std::string& key,
                      const std::string& value) {
  for (auto& f : model_fields(m))
    if (key == f.key) {
      f.set(value);
      return true;
    }
  for (auto& f : train_fields(t))
    if (key == f.key) {
      f.set(value);
      return true;
    }
  return false;
}

void apply_key_values(ModelConfig& m, TrainConfig& t, const std::map<std::string, std::string>& kv) {
  // The ablation preset is applied first so explicit keys can still refine it.
  if (auto it = kv.find("ablation"); it != kv.end()) apply_ablation(parse_ablation(it->second), m, t);
  for (const auto& [k, v] : kv) {
    if (k == "ablation") continue;
    if (!set_config_value(m, t, k, v)) throw ParameterError("unknown config key '" + k + "'");
  }
}

std::vector<std::string> model_config_keys() {
  ModelConfig m;
  std::vector<std::string> out;
  for (auto& f : model_fields(m)) out.emplace_back(f.key);
  return out;
}

std::vector<std::string> train_config_keys() {
  TrainConfig t;
  std::vector<std::string> out;
  for (auto& f : train_fields(t)) out.emplace_back(f.key);
  return out;
}

std::string to_key_values(const ModelConfig& m) {
  ModelConfig copy = m;
  std::string s;
  for (auto& f : model_fields(copy)) s += std::string(f.key) + " = " + f.get() + "\n";
  return s;
}

std::string to_key_values(const TrainConfig& t) {
  TrainConfig copy = t;
  std::string s;
  for (auto& f : train_fields(copy)) s += std::string(f.key) + " = " + f.get() + "\n";
  return s;
}

}  // namespace afht
