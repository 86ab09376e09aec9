#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>

#include "afht/adaln_decoder.hpp"
#include "afht/conditioning.hpp"
#include "afht/config.hpp"
#include "afht/error.hpp"
#include "afht/model.hpp"
#include "afht/objectives.hpp"
#include "afht/video_encoder.hpp"
#include "grad_check.hpp"

using namespace afht;
using namespace afht::testing;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

ClipWindow random_clip(int t, int h, int w, Rng& rng) {
  ClipWindow c;
  c.frames = t;
  c.height = h;
  c.width = w;
  c.pixels = random_values(static_cast<std::size_t>(t) * h * w * 3, rng, 0.0, 1.0);
  c.target_index = t - 1;
  return c;
}

ModelConfig tiny_config() {
  ModelConfig m;
  m.frame_height = 16;
  m.frame_width = 16;
  m.window_n = 4;
  m.stride = 1;
  m.enc_widths = {8, 16};
  m.enc_depths = {2, 2};
  m.win_t = 2;
  m.win_h = 2;
  m.win_w = 2;
  m.dec_width = 8;
  m.token_dim = 8;
  m.cond_hidden = 16;
  m.cond_dim = 16;
  return m;
}

}  // namespace

// ---------------------------------------------------------------- objectives

TEST_CASE("bce analytic values") {
  const Grid z(4, 4, 0.0), t(4, 4, 0.5);
  CHECK(std::abs(bce_with_logits(z, t) - std::log(2.0)) < 1e-9);
  Grid zs(4, 4), ts(4, 4);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    ts.values[i] = i % 3 == 0 ? 1.0 : 0.0;
    zs.values[i] = ts.values[i] > 0 ? 40.0 : -40.0;
  }
  CHECK(bce_with_logits(zs, ts) < 1e-12);
  Grid bad(4, 4, 1.5);
  CHECK_THROWS_AS(bce_with_logits(z, bad), ValidationError);
}

TEST_CASE("bce matches the naive per-pixel formula") {
  Rng rng(1);
  Grid z(16, 16), t(16, 16);
  z.values = random_values(256, rng, -4, 4);
  t.values = random_values(256, rng, 0, 1);
  double oracle = 0;
  for (std::size_t i = 0; i < 256; ++i) {
    const double p = sigmoid(z.values[i]);
    oracle -= t.values[i] * std::log(p) + (1 - t.values[i]) * std::log(1 - p);
  }
  oracle /= 256;
  CHECK(std::abs(bce_with_logits(z, t) - oracle) < 1e-9);
}

TEST_CASE("bce is bounded below by the target entropy") {
  Rng rng(2);
  for (int k = 0; k < 20; ++k) {
    Grid z(6, 6), t(6, 6), zt(6, 6);
    z.values = random_values(36, rng, -5, 5);
    t.values = random_values(36, rng, 0.01, 0.99);
    for (std::size_t i = 0; i < 36; ++i) zt.values[i] = std::log(t.values[i] / (1 - t.values[i]));
    CHECK(bce_with_logits(z, t) >= bce_with_logits(zt, t) - 1e-12);
  }
}

TEST_CASE("soft iou values") {
  Grid b(8, 8);
  for (std::size_t i = 0; i < b.size(); ++i) b.values[i] = i % 5 == 0 ? 1.0 : 0.0;
  CHECK(soft_iou(b, b) == 1.0);
  CHECK(soft_iou(Grid(8, 8, 0.0), b) == 0.0);
  CHECK_THROWS_AS(soft_iou(b, Grid(8, 8, 0.0)), ValidationError);

  Rng rng(3);
  Grid p(8, 8), t(8, 8);
  p.values = random_values(64, rng, 0, 1);
  t.values = random_values(64, rng, 0, 1);
  double num = 0, den = 0, tt = 0, t2 = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    num += p.values[i] * t.values[i];
    den += p.values[i] + t.values[i] - p.values[i] * t.values[i];
    tt += t.values[i] * t.values[i];
    t2 += 2 * t.values[i] - t.values[i] * t.values[i];
  }
  CHECK(std::abs(soft_iou(p, t) - num / den) < 1e-12);
  CHECK(std::abs(soft_iou(p, t) - soft_iou(t, p)) < 1e-15);
  // Non-binary self-overlap stays below one.
  CHECK(std::abs(soft_iou(t, t) - tt / t2) < 1e-12);
  CHECK(soft_iou(t, t) < 1.0);
}

TEST_CASE("losses are invariant under a common pixel permutation") {
  Rng rng(4);
  Grid z(6, 6), t(6, 6);
  z.values = random_values(36, rng, -3, 3);
  t.values = random_values(36, rng, 0, 1);
  std::vector<int> perm(36);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 35; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  Grid zp(6, 6), tp(6, 6);
  for (int i = 0; i < 36; ++i) {
    zp.values[i] = z.values[perm[i]];
    tp.values[i] = t.values[perm[i]];
  }
  CHECK(bce_with_logits(zp, tp) == doctest::Approx(bce_with_logits(z, t)).epsilon(1e-13));
  const LossBreakdown a = total_loss(z, t, 1.0), b = total_loss(zp, tp, 1.0);
  CHECK(a.total == doctest::Approx(b.total).epsilon(1e-13));
}

TEST_CASE("total loss composition") {
  Rng rng(5);
  Grid z(6, 6), t(6, 6);
  z.values = random_values(36, rng, -3, 3);
  t.values = random_values(36, rng, 0, 1);
  const LossBreakdown zero = total_loss(z, t, 0.0);
  CHECK(zero.total == zero.bce);
  const LossBreakdown two = total_loss(z, t, 2.0);
  CHECK(two.total == doctest::Approx(two.bce + 2.0 * two.soft_iou_loss).epsilon(1e-14));

  Grid zs(6, 6), ts(6, 6);
  for (std::size_t i = 0; i < 36; ++i) {
    ts.values[i] = i % 2 ? 1.0 : 0.0;
    zs.values[i] = ts.values[i] > 0 ? 40.0 : -40.0;
  }
  CHECK(total_loss(zs, ts, 1.0).total < 1e-6);
}

TEST_CASE("total loss gradient on a 6x6 grid matches finite differences") {
  Rng rng(6);
  auto z = random_leaf(36, 1, rng);
  auto t = std::make_shared<std::vector<double>>(random_values(36, rng, 0, 1));
  const auto r = check_gradients({z}, [&] { return total_loss(z, t, 1.0).total; }, 1.0, rng);
  CHECK(r.max_rel < 1e-5);
  CHECK(r.checked >= 36);
}

// -------------------------------------------------------------- conditioning

TEST_CASE("prompt template") {
  const PromptTriplet hook{"cholecystectomy", "hook", "dissect"};
  CHECK(render_prompt(hook) ==
        "surgery: cholecystectomy; tool: hook; action: dissect; objective: predict the safe tissue "
        "interaction region.");
  CHECK(render_prompt(hook) == render_prompt(hook));
  CHECK(render_prompt({"cholecystectomy", "clipper", "clip"}) != render_prompt({"cholecystectomy", "scissors", "cut"}));
  CHECK_THROWS_AS(render_prompt({"cholecystectomy", "", "cut"}), ParameterError);
}

TEST_CASE("condition vectors") {
  ModelConfig cfg;
  nn::ParamSet params;
  Rng rng(0);
  TableConditionEncoder enc(cfg, params, rng);
  CHECK(enc.dim() == cfg.cond_dim);

  std::vector<std::vector<double>> vecs;
  for (const auto& p : kToolActionPairs) {
    const auto v = enc.encode({"cholecystectomy", p.tool, p.action});
    CHECK(v->rows == 1);
    CHECK(v->cols == cfg.cond_dim);
    CHECK(v->value == enc.encode({"cholecystectomy", p.tool, p.action})->value);
    vecs.push_back(v->value);
  }
  for (std::size_t i = 0; i < vecs.size(); ++i)
    for (std::size_t j = i + 1; j < vecs.size(); ++j) CHECK(vecs[i] != vecs[j]);

  try {
    enc.encode({"cholecystectomy", "laser", "dissect"});
    FAIL("expected an unknown-token error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("hook") != std::string::npos);
  }

  for (double& w : params.get("cond.fc2.w")->value) w = 0.0;
  const auto zero = enc.encode({"cholecystectomy", "hook", "dissect"});
  for (double v : zero->value) CHECK(v == 0.0);
}

TEST_CASE("condition ablations null the declared slot") {
  ModelConfig cfg;
  cfg.condition = ConditionMode::kNoTool;
  nn::ParamSet params;
  Rng rng(0);
  TableConditionEncoder no_tool(cfg, params, rng);
  CHECK(no_tool.encode({"cholecystectomy", "hook", "dissect"})->value ==
        no_tool.encode({"cholecystectomy", "scissors", "dissect"})->value);
  CHECK(no_tool.encode({"cholecystectomy", "scissors", "cut"})->value !=
        no_tool.encode({"cholecystectomy", "scissors", "dissect"})->value);

  cfg.condition = ConditionMode::kNoLanguage;
  nn::ParamSet p2;
  Rng rng2(0);
  TableConditionEncoder none(cfg, p2, rng2);
  CHECK(none.encode({"cholecystectomy", "hook", "dissect"})->value ==
        none.encode({"cholecystectomy", "clipper", "clip"})->value);
}

TEST_CASE("condition gradients with respect to the tables match finite differences") {
  ModelConfig cfg;
  cfg.token_dim = 6;
  cfg.cond_hidden = 10;
  cfg.cond_dim = 7;
  nn::ParamSet params;
  Rng rng(1);
  TableConditionEncoder enc(cfg, params, rng);
  randomize(params, rng, 0.5);
  const auto f = [&] { return project(enc.encode({"cholecystectomy", "grasper", "grasp"}), 21); };
  const auto r = check_gradients(leaves_of(params), f, 1.0, rng);
  CHECK(r.max_rel < 1e-5);
}

// --------------------------------------------------------------- encoder

TEST_CASE("clip window indices") {
  CHECK(clip_window_indices(0, 4, 8) == std::vector<int>{0, 0, 0, 0});
  CHECK(clip_window_indices(24, 4, 8) == std::vector<int>{0, 8, 16, 24});
  std::vector<int> oracle;
  for (int k = 3; k >= 0; --k) oracle.push_back(std::max(0, 20 - 8 * k));
  CHECK(clip_window_indices(20, 4, 8) == oracle);
  CHECK_THROWS_AS(clip_window_indices(5, 0, 8), ParameterError);
  CHECK_THROWS_AS(clip_window_indices(5, 4, 0), ParameterError);
}

TEST_CASE("window partition is a bijection with a consistent shift mask") {
  for (const Grid3 g : {Grid3{2, 4, 4}, Grid3{4, 8, 8}, Grid3{1, 4, 8}}) {
    for (bool shifted : {false, true}) {
      const WindowLayout L = make_window_layout(g, {2, 4, 4}, shifted);
      REQUIRE(static_cast<int>(L.partition->size()) == g.count());
      std::vector<int> seen(g.count(), 0);
      for (int p = 0; p < g.count(); ++p) {
        ++seen[(*L.partition)[p]];
        CHECK((*L.inverse)[(*L.partition)[p]] == p);
      }
      CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
      CHECK(L.num_windows * L.window_size == g.count());
      if (!shifted) CHECK(L.mask == nullptr);
    }
  }
  // Shifted partition of a row of 8 tokens with window 4: the second window
  // holds the wrapped tokens 6, 7, 0, 1, and the two halves must not mix.
  const WindowLayout L = make_window_layout({1, 1, 8}, {1, 1, 4}, true);
  CHECK(std::vector<int>(L.partition->begin() + 4, L.partition->end()) == std::vector<int>{6, 7, 0, 1});
  REQUIRE(L.mask);
  CHECK((*L.mask)[(1 * 4 + 0) * 4 + 1] == 1);
  CHECK((*L.mask)[(1 * 4 + 1) * 4 + 2] == 0);
  CHECK((*L.mask)[(0 * 4 + 0) * 4 + 3] == 1);
}

TEST_CASE("shift then unshift restores the token grid") {
  Rng rng(7);
  const Grid3 g{4, 4, 8};
  auto x = nn::constant(g.count(), 3, random_values(g.count() * 3, rng, -1, 1));
  const WindowLayout L = make_window_layout(g, {2, 2, 4}, true);
  auto back = nn::gather_rows(nn::gather_rows(x, L.partition), L.inverse);
  CHECK(back->value == x->value);
}

TEST_CASE("one window covering all tokens equals full attention") {
  Rng rng(8);
  const int dim = 6, heads = 2, n = 8;
  nn::ParamSet params;
  WindowAttention att(dim, heads, {2, 2, 2}, params, rng, "a.");
  randomize(params, rng, 0.5);
  const WindowLayout L = make_window_layout({2, 2, 2}, {2, 2, 2}, false);
  auto x = nn::constant(n, dim, random_values(n * dim, rng, -1, 1));
  std::vector<double> weights;
  const auto out = att.attend(x, L, &weights);

  const auto& W = params.get("a.qkv.w")->value;
  const auto& B = params.get("a.qkv.b")->value;
  const auto& P = params.get("a.proj.w")->value;
  const auto& PB = params.get("a.proj.b")->value;
  const auto& bias = params.get("a.bias")->value;
  std::vector<double> qkv(n * 3 * dim);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3 * dim; ++c) {
      double s = B[c];
      for (int k = 0; k < dim; ++k) s += x->value[i * dim + k] * W[k * 3 * dim + c];
      qkv[i * 3 * dim + c] = s;
    }
  const int dh = dim / heads;
  std::vector<double> a(n * dim, 0.0);
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < n; ++i) {
      std::vector<double> logit(n);
      double mx = -1e300;
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int k = 0; k < dh; ++k) s += qkv[i * 3 * dim + h * dh + k] * qkv[j * 3 * dim + dim + h * dh + k];
        logit[j] = s / std::sqrt(double(dh)) + bias[h * n * n + i * n + j];
        mx = std::max(mx, logit[j]);
      }
      double z = 0;
      for (double& l : logit) z += (l = std::exp(l - mx));
      double row = 0;
      for (int j = 0; j < n; ++j) {
        const double p = logit[j] / z;
        row += weights[(h * n + i) * n + j];
        CHECK(std::abs(weights[(h * n + i) * n + j] - p) < 1e-12);
        for (int k = 0; k < dh; ++k) a[i * dim + h * dh + k] += p * qkv[j * 3 * dim + 2 * dim + h * dh + k];
      }
      CHECK(std::abs(row - 1.0) < 1e-6);
    }
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < dim; ++c) {
      double s = PB[c];
      for (int k = 0; k < dim; ++k) s += a[i * dim + k] * P[k * dim + c];
      CHECK(std::abs(out->value[i * dim + c] - s) < 1e-12);
    }
}

TEST_CASE("identical tokens attend uniformly and a zero value path is the identity") {
  Rng rng(9);
  const int dim = 4;
  nn::ParamSet params;
  WindowAttention att(dim, 2, {1, 2, 2}, params, rng, "a.");
  for (double& b : params.get("a.bias")->value) b = 0.0;
  const WindowLayout L = make_window_layout({1, 4, 4}, {1, 2, 2}, false);
  const auto row = random_values(dim, rng, -1, 1);
  std::vector<double> same;
  for (int i = 0; i < 16; ++i) same.insert(same.end(), row.begin(), row.end());
  std::vector<double> w;
  att.attend(nn::constant(16, dim, same), L, &w);
  for (double p : w) CHECK(std::abs(p - 0.25) < 1e-12);

  auto& W = params.get("a.qkv.w")->value;
  for (int k = 0; k < dim; ++k)
    for (int c = 2 * dim; c < 3 * dim; ++c) W[k * 3 * dim + c] = 0.0;
  auto x = nn::constant(16, dim, random_values(16 * dim, rng, -1, 1));
  CHECK(att.forward(x, L)->value == x->value);
}

TEST_CASE("masked pairs receive no attention under a shifted layout") {
  Rng rng(10);
  nn::ParamSet params;
  WindowAttention att(4, 1, {1, 2, 4}, params, rng, "a.");
  const WindowLayout L = make_window_layout({1, 4, 8}, {1, 2, 4}, true);
  REQUIRE(L.mask);
  std::vector<double> w;
  att.attend(nn::constant(32, 4, random_values(128, rng, -1, 1)), L, &w);
  const int ws = L.window_size;
  for (int g = 0; g < L.num_windows; ++g)
    for (int i = 0; i < ws; ++i) {
      double row = 0;
      for (int j = 0; j < ws; ++j) {
        const std::size_t k = (static_cast<std::size_t>(g) * ws + i) * ws + j;
        if (!(*L.mask)[k]) CHECK(w[k] == 0.0);
        row += w[k];
      }
      CHECK(std::abs(row - 1.0) < 1e-6);
    }
}

TEST_CASE("encoder output shape") {
  ModelConfig cfg;
  cfg.window_n = 16;
  nn::ParamSet params;
  Rng rng(0);
  SwinVideoEncoder enc(cfg, params, rng);
  Rng data(1);
  const FeatureMap f = enc.encode(random_clip(16, 64, 64, data));
  CHECK(f.channels == 64);
  CHECK(f.height == 8);
  CHECK(f.width == 8);
  CHECK(f.tokens->rows == 64);
  CHECK(nn::all_finite(f.tokens));
}

TEST_CASE("single-frame clip ignores temporal shifting") {
  ModelConfig cfg = tiny_config();
  cfg.window_n = 1;
  cfg.patch_t = 1;
  nn::ParamSet pa, pb;
  Rng ra(3), rb(3);
  SwinVideoEncoder a(cfg, pa, ra), b(cfg, pb, rb);
  b.set_shift_axes({false, true, true});
  Rng data(2);
  const ClipWindow clip = random_clip(1, 16, 16, data);
  CHECK(a.encode(clip).tokens->value == b.encode(clip).tokens->value);
}

TEST_CASE("encoder is deterministic and conv preset matches its output contract") {
  ModelConfig cfg = tiny_config();
  Rng data(4);
  const ClipWindow clip = random_clip(4, 16, 16, data);
  nn::ParamSet p1;
  Rng r1(5);
  SwinVideoEncoder swin(cfg, p1, r1);
  const FeatureMap a = swin.encode(clip);
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<double> spacer(rep * 3 + 1);
    CHECK(a.tokens->value == swin.encode(clip).tokens->value);
  }

  cfg.encoder = EncoderKind::kConv;
  nn::ParamSet p2;
  Rng r2(5);
  ConvVideoEncoder conv(cfg, p2, r2);
  const FeatureMap b = conv.encode(clip);
  CHECK(b.channels == a.channels);
  CHECK(b.height == a.height);
  CHECK(b.width == a.width);
}

// --------------------------------------------------------------- decoder

TEST_CASE("zero-initialized decoder blocks are the identity and the head predicts one half") {
  const ModelConfig cfg = tiny_config();
  AffordanceModel model(cfg, 17);
  Rng data(6);
  const ClipWindow clip = random_clip(4, 16, 16, data);
  const FeatureMap f = model.video_encoder().encode(clip);
  const auto cond = model.condition_encoder().encode({"cholecystectomy", "hook", "dissect"});
  CHECK(model.decoder().blocks_forward(f, cond)->value == model.decoder().embed_tokens(f)->value);
  const Grid p = model.predict(clip, {"cholecystectomy", "clipper", "clip"});
  CHECK(p.height == 16);
  CHECK(p.width == 16);
  for (double v : p.values) CHECK(v == 0.5);
}

TEST_CASE("trained-looking decoder responds to the condition") {
  const ModelConfig cfg = tiny_config();
  AffordanceModel model(cfg, 18);
  Rng rng(7);
  randomize(model.params(), rng, 0.3);
  const ClipWindow clip = random_clip(4, 16, 16, rng);
  const Grid a = model.predict(clip, {"cholecystectomy", "hook", "dissect"});
  const Grid b = model.predict(clip, {"cholecystectomy", "grasper", "dissect"});
  CHECK(a.values != b.values);
}

TEST_CASE("modulate with zero shift and scale is a plain layer norm") {
  Rng rng(8);
  auto x = nn::constant(3, 5, random_values(15, rng, -2, 2));
  auto z = nn::constant(1, 5, std::vector<double>(5, 0.0));
  const auto y = modulate(x, z, z, 1e-5);
  for (int r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (int c = 0; c < 5; ++c) m += x->at(r, c) / 5;
    for (int c = 0; c < 5; ++c) v += (x->at(r, c) - m) * (x->at(r, c) - m) / 5;
    for (int c = 0; c < 5; ++c) CHECK(std::abs(y->at(r, c) - (x->at(r, c) - m) / std::sqrt(v + 1e-5)) < 1e-12);
  }
}

// ---------------------------------------------------------------- config

TEST_CASE("config key-value round trip") {
  ModelConfig m;
  TrainConfig t;
  m.enc_widths = {16, 24, 48};
  m.enc_depths = {1, 2, 1};
  m.decoder = DecoderKind::kCrossAttention;
  t.lr0 = 3.5e-4;
  t.augment = {"crop"};
  t.ablation = Ablation::kNoTool;
  ModelConfig m2;
  TrainConfig t2;
  apply_key_values(m2, t2, parse_key_values(to_key_values(m) + "\n" + to_key_values(t)));
  CHECK(to_key_values(m2) == to_key_values(m));
  CHECK(to_key_values(t2) == to_key_values(t));
  CHECK_THROWS_AS(apply_key_values(m2, t2, {{"no_such_key", "1"}}), ParameterError);
  CHECK_THROWS_AS(apply_key_values(m2, t2, {{"lr0", "fast"}}), ParameterError);
}

TEST_CASE("ablation presets change only their component") {
  const ModelConfig base_m;
  const TrainConfig base_t;
  for (const auto& name : ablation_names()) {
    ModelConfig m = base_m;
    TrainConfig t = base_t;
    const Ablation a = parse_ablation(name);
    apply_ablation(a, m, t);
    CHECK(t.ablation == a);
    ModelConfig expect_m = base_m;
    TrainConfig expect_t = base_t;
    expect_t.ablation = a;
    switch (a) {
      case Ablation::kNone: break;
      case Ablation::kNoLanguage: expect_m.condition = ConditionMode::kNoLanguage; break;
      case Ablation::kNoTool: expect_m.condition = ConditionMode::kNoTool; break;
      case Ablation::kNoAction: expect_m.condition = ConditionMode::kNoAction; break;
      case Ablation::kNoHistory: expect_m.window_n = 1; break;
      case Ablation::kNoAugment: expect_t.augment.clear(); break;
      case Ablation::kXattnDecoder: expect_m.decoder = DecoderKind::kCrossAttention; break;
      case Ablation::kConvEncoder: expect_m.encoder = EncoderKind::kConv; break;
    }
    CHECK_MESSAGE(to_key_values(m) == to_key_values(expect_m), name);
    CHECK_MESSAGE(to_key_values(t) == to_key_values(expect_t), name);
  }
  CHECK_THROWS_AS(parse_ablation("no_such"), ParameterError);
}
