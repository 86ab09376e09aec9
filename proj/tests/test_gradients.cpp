#include <doctest.h>

#include <memory>

#include "afht/adaln_decoder.hpp"
#include "afht/model.hpp"
#include "afht/objectives.hpp"
#include "afht/video_encoder.hpp"
#include "grad_check.hpp"

using namespace afht;
using namespace afht::testing;

namespace {

TargetPtr random_target(std::size_t n, Rng& rng) {
  auto t = std::make_shared<std::vector<double>>(n);
  for (double& v : *t) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("elementwise and reduction ops match finite differences") {
  Rng rng(11);
  auto a = random_leaf(3, 4, rng);
  auto b = random_leaf(3, 4, rng);
  auto row = random_leaf(1, 4, rng);
  auto f = [&] {
    auto x = nn::add(nn::mul(nn::gelu(a), nn::silu(b)), nn::sigmoid(nn::sub(a, b)));
    x = nn::mul_row(nn::add_row(x, row), row);
    x = nn::add_scalar(nn::scale(nn::relu(nn::add_scalar(x, 0.3)), 1.7), -0.2);
    return project(nn::layer_norm(x, 1e-5), 5);
  };
  const auto r = check_gradients({a, b, row}, f, 1.0, rng);
  CHECK(r.max_rel < 1e-5);
}

TEST_CASE("matmul, linear, gather, reshape, slicing and concat match finite differences") {
  Rng rng(12);
  auto x = random_leaf(5, 3, rng);
  auto w = random_leaf(3, 6, rng);
  auto bias = random_leaf(1, 6, rng);
  auto w2 = random_leaf(6, 2, rng);
  auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{4, 0, -1, 2, 2, 1});
  auto f = [&] {
    auto y = nn::linear(x, w, bias);
    auto g = nn::gather_rows(y, idx);
    auto c = nn::concat_cols({nn::slice_cols(g, 1, 3), nn::slice_cols(g, 0, 2)});
    auto m = nn::matmul(nn::reshape(nn::slice_cols(c, 0, 4), 4, 6), w2);
    return nn::add(nn::sum_all(nn::mean_consecutive_rows(m, 2)), nn::mean_all(y));
  };
  const auto r = check_gradients({x, w, bias, w2}, f, 1.0, rng);
  CHECK(r.max_rel < 1e-5);
}

TEST_CASE("masked attention with bias matches finite differences") {
  Rng rng(13);
  const nn::AttentionShape s{2, 2, 3, 3};
  auto q = random_leaf(6, 4, rng);
  auto k = random_leaf(6, 4, rng);
  auto v = random_leaf(6, 4, rng);
  auto bias = random_leaf(2, 9, rng, 0.5);
  auto mask = std::make_shared<const std::vector<std::uint8_t>>(
      std::vector<std::uint8_t>{1, 1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
  auto f = [&] { return project(nn::attention(q, k, v, s, bias, mask), 7); };
  const auto r = check_gradients({q, k, v, bias}, f, 1.0, rng);
  CHECK(r.max_rel < 1e-5);
}

TEST_CASE("bilinear resize matches finite differences") {
  Rng rng(14);
  auto x = random_leaf(9, 2, rng);
  auto f = [&] { return project(nn::bilinear_resize(x, 3, 3, 7, 5), 3); };
  CHECK(check_gradients({x}, f, 1.0, rng).max_rel < 1e-5);
}

TEST_CASE("bce_with_logits gradient matches finite differences") {
  Rng rng(15);
  auto z = random_leaf(1, 50, rng, 3.0);
  auto t = random_target(50, rng);
  auto f = [&] { return bce_with_logits_loss(z, t); };
  CHECK(check_gradients({z}, f, 1.0, rng).max_rel < 1e-4);

  // The closed-form span gradient agrees with the graph op.
  std::vector<double> g(50);
  bce_with_logits_grad(z->value, *t, g);
  for (int i = 0; i < 50; ++i) CHECK(g[i] == doctest::Approx(z->grad[i]).epsilon(1e-12));
}

TEST_CASE("soft_iou gradient matches finite differences") {
  Rng rng(16);
  std::vector<double> p0(40);
  for (double& v : p0) v = rng.uniform(0.05, 0.95);
  auto p = nn::leaf(1, 40, p0, true);
  auto t = random_target(40, rng);
  auto f = [&] { return soft_iou_loss(p, t); };
  CHECK(check_gradients({p}, f, 1.0, rng).max_rel < 1e-4);

  std::vector<double> g(40);
  soft_iou_grad(p->value, *t, g);
  for (int i = 0; i < 40; ++i) CHECK(-g[i] == doctest::Approx(p->grad[i]).epsilon(1e-10));
}

TEST_CASE("modulate gradient matches finite differences") {
  Rng rng(17);
  auto x = random_leaf(6, 8, rng);
  auto gamma = random_leaf(1, 8, rng, 0.3);
  auto beta = random_leaf(1, 8, rng, 0.3);
  auto f = [&] { return project(modulate(x, gamma, beta, 1e-5), 9); };
  CHECK(check_gradients({x, gamma, beta}, f, 1.0, rng).max_rel < 1e-4);
}

TEST_CASE("one adaLN block matches finite differences") {
  ModelConfig cfg;
  cfg.dec_width = 16;
  cfg.dec_heads = 2;
  cfg.dec_depth = 1;
  cfg.cond_dim = 12;
  nn::ParamSet params;
  Rng init(1);
  AdaLNDecoder dec(cfg, 16, 3, 3, params, init);
  Rng rng(18);
  randomize(params, rng, 0.3);
  auto x = random_leaf(9, 16, rng);
  auto cond = random_leaf(1, 12, rng);
  auto leaves = leaves_of(params);
  leaves.push_back(x);
  leaves.push_back(cond);
  auto f = [&] { return project(dec.block(0, x, cond), 21); };
  const auto r = check_gradients(leaves, f, 0.05, rng);
  INFO("checked " << r.checked);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("one shifted window-attention block matches finite differences") {
  nn::ParamSet params;
  Rng init(2);
  WindowAttention attn(8, 2, {2, 2, 2}, params, init, "attn.");
  Rng rng(19);
  randomize(params, rng, 0.3);
  const WindowLayout layout = make_window_layout({2, 4, 4}, {2, 2, 2}, true);
  REQUIRE(layout.mask != nullptr);
  auto x = random_leaf(32, 8, rng);
  auto leaves = leaves_of(params);
  leaves.push_back(x);
  auto f = [&] { return project(attn.forward(x, layout), 23); };
  const auto r = check_gradients(leaves, f, 0.05, rng);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("cross-attention decoder matches finite differences") {
  ModelConfig cfg;
  cfg.decoder = DecoderKind::kCrossAttention;
  cfg.dec_width = 8;
  cfg.dec_heads = 2;
  cfg.dec_depth = 1;
  cfg.cond_dim = 6;
  cfg.xattn_tokens = 2;
  nn::ParamSet params;
  Rng init(3);
  CrossAttentionDecoder dec(cfg, 8, 2, 2, params, init);
  Rng rng(20);
  randomize(params, rng, 0.3);
  FeatureMap fm{random_leaf(4, 8, rng), 8, 2, 2};
  auto cond = random_leaf(1, 6, rng);
  auto leaves = leaves_of(params);
  leaves.push_back(cond);
  auto f = [&] { return project(dec.forward(fm, cond, 8, 8), 29); };
  CHECK(check_gradients(leaves, f, 0.05, rng).max_rel < 1e-4);
}

TEST_CASE("full tiny model loss matches finite differences") {
  ModelConfig cfg;
  cfg.frame_height = 16;
  cfg.frame_width = 16;
  cfg.window_n = 4;
  cfg.stride = 1;
  cfg.enc_widths = {8};
  cfg.enc_depths = {2};
  cfg.win_t = 2;
  cfg.win_h = 2;
  cfg.win_w = 2;
  cfg.dec_width = 8;
  cfg.dec_depth = 2;
  cfg.token_dim = 4;
  cfg.cond_hidden = 8;
  cfg.cond_dim = 8;
  AffordanceModel model(cfg, 5);
  Rng rng(21);
  randomize(model.params(), rng, 0.2);

  ClipFrames frames(4, 16, 16);
  for (auto& b : frames.data) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  const ClipWindow clip = build_clip_window(frames, 3, 4, 1);
  const PromptTriplet trip{"cholecystectomy", "hook", "dissect"};
  auto target = random_target(256, rng);
  auto f = [&] { return total_loss(model.forward_logits(clip, trip), target, 1.0).total; };
  const auto r = check_gradients(leaves_of(model.params()), f, 0.01, rng);
  INFO("checked " << r.checked);
  CHECK(r.max_rel < 1e-4);
}
