#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "afht/error.hpp"
#include "afht/metrics_eval.hpp"
#include "oracles.hpp"

using namespace afht;
using namespace afht::testing;

namespace {

RegionMask single(int h, int w, int x, int y) {
  RegionMask m(h, w, MaskSource::kThreshold);
  m.set(y, x);
  return m;
}

RegionMask shifted(const RegionMask& m, int dx, int dy) {
  RegionMask out(m.height, m.width, m.source);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x)) out.set(y + dy, x + dx);
  return out;
}

}  // namespace

TEST_CASE("soft dice") {
  Grid b(8, 8);
  for (std::size_t i = 0; i < b.size(); ++i) b.values[i] = i % 3 == 0;
  CHECK(soft_dice(b, b) == 1.0);
  Grid c(8, 8);
  for (std::size_t i = 0; i < c.size(); ++i) c.values[i] = i % 3 == 1;
  CHECK(soft_dice(b, c) == 0.0);
  bool flagged = false;
  CHECK(soft_dice(Grid(4, 4), Grid(4, 4), &flagged) == 1.0);
  CHECK(flagged);

  const TargetHeatmap t = gaussian_target({31, 30}, 3.0, 64, 64);
  double s1 = 0, s2 = 0;
  for (double v : t.values.values) {
    s1 += v;
    s2 += v * v;
  }
  const double d = soft_dice(t.values, t.values);
  CHECK(std::abs(d - s2 / s1) < 1e-12);
  CHECK(d < 1.0);
}

TEST_CASE("thresholded gaussian is a disc of the analytic radius") {
  const double sigma = 4.0;
  const TargetHeatmap t = gaussian_target({32, 32}, sigma, 64, 64);
  const RegionResult r = heatmap_to_region(t.values, 0.5);
  const double radius = sigma * std::sqrt(2.0 * std::log(2.0));
  double far = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (r.mask.at(y, x)) far = std::max(far, std::hypot(x - 32.0, y - 32.0));
  CHECK(std::abs(far - radius) <= 1.0);
  CHECK(r.secondary_components == 0);
}

TEST_CASE("largest component is kept and the rest counted") {
  Grid g(32, 32, 0.0);
  for (int y = 2; y < 12; ++y)
    for (int x = 2; x < 12; ++x) g.at(y, x) = 0.8;  // 100 px
  for (int y = 20; y < 22; ++y)
    for (int x = 20; x < 25; ++x) g.at(y, x) = 1.0;  // 10 px, holds the maximum
  const RegionResult r = heatmap_to_region(g, 0.5);
  CHECK(r.mask.count() == 100);
  CHECK(r.secondary_components == 1);
  CHECK(heatmap_to_region(g, 0.5, true).mask.count() == 110);
  CHECK_THROWS_AS(heatmap_to_region(g, 0.0), ParameterError);
  CHECK_THROWS_AS(heatmap_to_region(g, 1.0), ParameterError);
  CHECK_THROWS_AS(heatmap_to_region(Grid(4, 4, 0.0), 0.5), ValidationError);
}

TEST_CASE("all-components threshold matches a per-pixel comparison") {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    Grid g(24, 24);
    for (double& v : g.values) v = rng.uniform();
    const double tau = rng.uniform(0.2, 0.8);
    double mx = 0;
    for (double v : g.values) mx = std::max(mx, v);
    const RegionMask m = heatmap_to_region(g, tau, true).mask;
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) CHECK(m.at(y, x) == (g.at(y, x) >= tau * mx));
  }
}

TEST_CASE("pck thresholds") {
  Grid g(64, 64, 0.0);
  g.at(20, 30) = 1.0;
  CHECK(pck_at(g, {30, 20}, 1e-9, 64, 64) == 1);
  CHECK(pck_at(g, {30, 24}, 0.05, 64, 64) == 1);  // 4 px < 4.525
  CHECK(pck_at(g, {30, 25}, 0.05, 64, 64) == 0);  // 5 px
  Rng rng(4);
  int hits = 0, oracle = 0;
  for (int k = 0; k < 100; ++k) {
    Grid h(64, 64);
    for (double& v : h.values) v = std::floor(rng.uniform() * 50);  // ties are common
    const Point2 c{rng.uniform(0, 63), rng.uniform(0, 63)};
    hits += pck_at(h, c, 0.1, 64, 64);
    oracle += brute_pck(h, c, 0.1);
    CHECK(pck_at(h, c, 0.05, 64, 64) <= pck_at(h, c, 0.1, 64, 64));
  }
  CHECK(hits == oracle);
}

TEST_CASE("surface distances on single pixels") {
  const RegionMask a = single(8, 8, 0, 0), b = single(8, 8, 3, 4);
  CHECK(hausdorff_px(a, b) == 5.0);
  CHECK(assd_px(a, b) == 5.0);
  CHECK(hausdorff_px(a, a) == 0.0);
  CHECK(assd_px(a, a) == 0.0);
  CHECK_THROWS_AS(hausdorff_px(a, RegionMask(8, 8, MaskSource::kThreshold)), ValidationError);
}

TEST_CASE("surface distances match the all-pairs oracle, are symmetric and translation invariant") {
  Rng rng(5);
  for (int k = 0; k < 40; ++k) {
    const RegionMask a = random_blob_mask(32, 32, rng), b = random_blob_mask(32, 32, rng);
    const SurfaceDistances s = surface_distances(a, b);
    const BruteDistances o = brute_surface(a, b);
    CHECK(std::abs(s.hausdorff - o.hd) < 1e-9);
    CHECK(std::abs(s.assd - o.assd) < 1e-9);
    const SurfaceDistances r = surface_distances(b, a);
    CHECK(r.hausdorff == s.hausdorff);
    CHECK(r.assd == s.assd);
    CHECK(s.hausdorff >= s.assd);
  }
  // Interior masks shifted together.
  RegionMask a(40, 40, MaskSource::kThreshold), b(40, 40, MaskSource::kThreshold);
  for (int y = 5; y < 15; ++y)
    for (int x = 6; x < 13; ++x) a.set(y, x);
  for (int y = 10; y < 20; ++y)
    for (int x = 3; x < 9; ++x)
      if ((x + y) % 5) b.set(y, x);
  const SurfaceDistances s0 = surface_distances(a, b);
  const SurfaceDistances s1 = surface_distances(shifted(a, 7, 11), shifted(b, 7, 11));
  CHECK(s0.hausdorff == s1.hausdorff);
  CHECK(s0.assd == doctest::Approx(s1.assd).epsilon(1e-14));
}

TEST_CASE("evaluation frames cover the earlier half") {
  CHECK(evaluation_frames(0, 14) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(evaluation_frames(10, 10) == std::vector<int>{10});
  CHECK(evaluation_frames(0, 31) == std::vector<int>{0, 2, 4, 6, 9, 11, 13, 15});
  CHECK(evaluation_frames(4, 8) == std::vector<int>{4, 5, 6});
  for (int s = 0; s < 10; ++s)
    for (int e = s; e < 60; ++e) {
      const auto f = evaluation_frames(s, e);
      CHECK(f.front() == s);
      CHECK(f.back() == s + (e - s) / 2);
      CHECK(f.size() <= 8);
      CHECK(std::is_sorted(f.begin(), f.end()));
    }
}

TEST_CASE("report round trip and re-aggregation from the file") {
  MetricsReport rep;
  Rng rng(6);
  for (int i = 0; i < 12; ++i) {
    MetricsRow r;
    r.clip_id = "clip_" + std::to_string(i / 3);
    r.frame = i;
    r.dice = rng.uniform();
    r.pck01 = rng.bernoulli(0.6);
    r.pck005 = r.pck01 > 0 && rng.bernoulli(0.5);
    r.hd_px = rng.uniform(2, 20);
    r.assd_px = rng.uniform(0.5, 2);
    r.boundary_valid = i != 5;
    if (!r.boundary_valid) r.note = "empty_prediction";
    rep.rows.push_back(r);
  }
  rep.aggregate = aggregate_rows(rep.rows);
  rep.skipped = 1;
  const auto path = (std::filesystem::temp_directory_path() / "afht_report_test.tsv").string();
  save_report(rep, path);

  // Independent parse of the TSV.
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  double dice = 0, pck01 = 0, hd = 0;
  int rows = 0, brows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id, hd_s, assd_s;
    int frame;
    double d, p5, p1;
    ls >> id >> frame >> d >> p5 >> p1 >> hd_s >> assd_s;
    dice += d;
    pck01 += p1;
    ++rows;
    if (hd_s != "nan") {
      hd += std::stod(hd_s);
      ++brows;
    }
  }
  CHECK(rows == 12);
  CHECK(brows == 11);
  CHECK(std::abs(dice / rows - rep.aggregate.dice) < 1e-12);
  CHECK(std::abs(pck01 / rows - rep.aggregate.pck01) < 1e-12);
  CHECK(std::abs(hd / brows - rep.aggregate.hd_px) < 1e-12);

  const MetricsReport back = load_report(path);
  REQUIRE(back.rows.size() == rep.rows.size());
  CHECK(back.skipped == 1);
  CHECK(back.aggregate.dice == rep.aggregate.dice);
  CHECK(back.aggregate.assd_px == rep.aggregate.assd_px);
  CHECK(back.rows[5].boundary_valid == false);
  CHECK(back.rows[7].hd_px == rep.rows[7].hd_px);
  std::filesystem::remove(path);
}

TEST_CASE("comparison table column order") {
  MetricsAggregate a;
  a.dice = 0.25;
  a.pck01 = 0.5;
  const std::string t = format_table({{"none", a}});
  const auto p = [&](const char* s) { return t.find(s); };
  CHECK(p("DICE") < p("PCK@0.05"));
  CHECK(p("PCK@0.05") < p("PCK@0.1"));
  CHECK(p("PCK@0.1") < p("HD"));
  CHECK(p("HD") < p("ASSD"));
  CHECK(t.find("none") != std::string::npos);
}

TEST_CASE("prediction rows flag empty predictions and degenerate annotations") {
  AnnotationRecord rec;
  rec.clip_id = "c";
  rec.frame_height = rec.frame_width = 32;
  rec.keypoints = {Point2{10, 10}, Point2{20, 10}, Point2{20, 20}, Point2{10, 20}};
  Grid zero(32, 32, 0.0);
  const MetricsRow r = evaluate_prediction(zero, rec, 0, {});
  CHECK_FALSE(r.boundary_valid);
  CHECK(r.note == "empty_prediction");

  const TargetHeatmap t = gaussian_target({15, 15}, 3.0, 32, 32);
  const MetricsRow good = evaluate_prediction(t.values, rec, 0, {});
  CHECK(good.boundary_valid);
  CHECK(good.pck005 == 1);
  CHECK(good.hd_px >= good.assd_px);

  rec.keypoints = {Point2{1, 1}, Point2{2, 2}, Point2{3, 3}, Point2{4, 4}};
  const MetricsRow deg = evaluate_prediction(t.values, rec, 0, {});
  CHECK_FALSE(deg.boundary_valid);
  CHECK(deg.note == "degenerate_annotation");
}
