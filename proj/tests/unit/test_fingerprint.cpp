#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>

#include "advbiom/fingerprint/trainer.hpp"
#include "advbiom/nn/batch.hpp"
#include "advbiom/nn/ops.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace advbiom;
using namespace advbiom::fingerprint;
using namespace testutil;
using nn::Shape;
using nn::Tensor;
using nn::Var;
namespace fs = std::filesystem;
using Point = std::array<double, 2>;

namespace {

constexpr double kPi = std::numbers::pi;

bool same(std::span<const double> a, std::span<const double> b) { return std::ranges::equal(a, b); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advbiom_fp_" + name);
  fs::remove_all(p);
  return p;
}

Tensor random_tensor(Shape s, Rng& rng, double lo, double hi) {
  Tensor t(std::move(s));
  for (auto& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

FingerprintSynthConfig small_synth() {
  FingerprintSynthConfig c;
  c.size = 32;
  c.minutiae = 4;
  c.min_separation = 8;
  c.border = 4;
  c.core_clearance = 6;
  return c;
}

FpTrainConfig tiny_fp_config() {
  FpTrainConfig c;
  c.disp_net = {2, 1, 0.1};
  c.dist_net = {2};
  c.distortion = {5, 2.0, 1.0, 3.0};
  c.discriminator = {1, 2, 2, 2};
  c.displacement.d = 4.0;
  c.batch_size = 2;
  c.steps = 4;
  c.seed = 23;
  c.learning_rate = 1e-3;
  c.weights = {0.05, 1e-3, 10.0};
  return c;
}

std::vector<NormalizedImage> tiny_prints(int n) {
  std::vector<NormalizedImage> out;
  for (int k = 0; k < n; ++k) out.push_back(synth_fingerprint(100 + k, small_synth()).image);
  return out;
}

}  // namespace

TEST_CASE("synthetic fingerprints are deterministic and honour the requested class") {
  const FingerprintSynthConfig cfg;
  const auto a = synth_fingerprint(5, cfg), b = synth_fingerprint(5, cfg);
  CHECK(same(a.image.values(), b.image.values()));
  CHECK(a.minutiae == b.minutiae);
  CHECK_FALSE(same(a.image.values(), synth_fingerprint(6, cfg).image.values()));
  for (auto t : {FingerprintType::left_loop, FingerprintType::right_loop, FingerprintType::whorl,
                 FingerprintType::arch, FingerprintType::tented_arch}) {
    CHECK(sample_fingerprint_identity(9, cfg, t).type == t);
  }
  CHECK(a.image.channels() == 1);
  for (double v : a.image.values()) CHECK((v >= -1.0 && v <= 1.0));
  for (const auto& m : a.minutiae) {
    CHECK((m.i >= 0 && m.i <= cfg.size - 1 && m.j >= 0 && m.j <= cfg.size - 1));
    CHECK((m.theta >= 0 && m.theta < 2 * kPi));
  }
}

TEST_CASE("minutiae lists round-trip through JSON") {
  const fs::path dir = scratch("json");
  fs::create_directories(dir);
  const std::vector<MinutiaPoint> pts{{3.5, 7.25, 1.0}, {40, 2, 6.1}};
  save_minutiae(dir / "m.json", pts);
  CHECK(load_minutiae(dir / "m.json") == pts);
}

TEST_CASE("fingerprint dataset layout") {
  const fs::path root = scratch("dataset");
  const auto man = synth_fingerprint_dataset(root, 3, 2, 4, small_synth());
  CHECK(man.entries.size() == 6);
  CHECK(man.identities().size() == 3);
  CHECK(load_fingerprint_types(root).size() == 3);
  for (const auto& e : man.entries) {
    fs::path m = man.absolute(e);
    CHECK(fs::exists(m.replace_extension(".json")));
  }
}

TEST_CASE("render then detect recovers isolated minutiae") {
  const std::vector<MinutiaPoint> pts{{10, 12, 0.3}, {30, 40, 2.0}, {50, 20, 5.9}, {20, 52, kPi}};
  const MinutiaeMap h = render_minutiae_map(pts, 64, 64);
  h.validate();
  const auto found = detect_minutiae(h);
  const auto m = match_minutiae(pts, found, 2.0, kPi / 12);
  CHECK(m.matched == 4);
  CHECK(found.size() == 4);
}

TEST_CASE("symmetric channel neighbours put theta on the channel centre") {
  for (int c = 0; c < 12; ++c) {
    MinutiaeMap h(9, 9);
    h.at(4, 4, c) = 0.9;
    h.at(4, 4, (c + 11) % 12) = 0.35;
    h.at(4, 4, (c + 1) % 12) = 0.35;
    const auto found = detect_minutiae(h);
    REQUIRE(found.size() == 1);
    CHECK(found[0].theta == c * (kPi / 6));
  }
  CHECK(parabola_vertex_offset(0.5, 0.5, 0.5) == 0.0);
}

TEST_CASE("asymmetric neighbours: theta at the vertex of the fitted parabola") {
  MinutiaeMap h(9, 9);
  h.at(4, 4, 2) = 0.2;
  h.at(4, 4, 3) = 0.8;
  h.at(4, 4, 4) = 0.4;
  const auto found = detect_minutiae(h);
  REQUIRE(found.size() == 1);
  // Oracle: Lagrange parabola through (-1, 0.2), (0, 0.8), (1, 0.4), scanned densely.
  auto p = [](double t) { return 0.2 * t * (t - 1) / 2 - 0.8 * (t + 1) * (t - 1) + 0.4 * t * (t + 1) / 2; };
  double best_t = -1, best = -1e9;
  for (int k = 0; k <= 2000000; ++k) {
    const double t = -1.0 + k * 1e-6;
    if (p(t) > best) best = p(t), best_t = t;
  }
  CHECK(found[0].theta == doctest::Approx((3 + best_t) * kPi / 6).epsilon(1e-5));
  CHECK(found[0].i == 4);
  CHECK(found[0].j == 4);
}

TEST_CASE("nothing above the threshold gives no detections") {
  MinutiaeMap h(16, 16);
  for (auto& v : h.values()) v = 0.2;
  CHECK(detect_minutiae(h, 0.2).empty());
}

TEST_CASE("detection ties go to the earlier cell") {
  MinutiaeMap h(9, 9);
  h.at(4, 4, 5) = 0.7;
  h.at(4, 5, 5) = 0.7;
  const auto found = detect_minutiae(h);
  REQUIRE(found.size() == 1);
  CHECK(found[0].j == 4);
}

TEST_CASE("target maps") {
  const std::vector<MinutiaPoint> pts{{20, 30, 1.2}, {44, 50, 4.0}};
  SUBCASE("d = 0 renders the probe points") {
    Rng rng(1);
    const MinutiaeMap t = build_target_map(pts, {0.0}, 64, 64, rng);
    CHECK(same(t.values(), render_minutiae_map(pts, 64, 64).values()));
  }
  SUBCASE("d = 20 moves a point by L1 distance 20") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const MinutiaPoint p{48, 48, 0.7};
      const auto found = detect_minutiae(build_target_map({p}, {20.0}, 96, 96, rng));
      REQUIRE(found.size() == 1);
      CHECK(std::abs(found[0].i - p.i) + std::abs(found[0].j - p.j) == doctest::Approx(20).epsilon(0.1));
    }
  }
  SUBCASE("seeded twice gives identical maps") {
    Rng a(7), b(7);
    CHECK(same(build_target_map(pts, {}, 64, 64, a).values(), build_target_map(pts, {}, 64, 64, b).values()));
  }
  SUBCASE("displaced points stay in bounds") {
    Rng rng(3);
    const std::vector<MinutiaPoint> edge{{0, 0, 0}, {63, 63, 1}};
    for (const auto& q : displace_minutiae(edge, {20}, 64, 64, rng)) {
      CHECK((q.i >= 0 && q.i <= 63 && q.j >= 0 && q.j <= 63));
    }
  }
}

TEST_CASE("minutiae map losses") {
  Tensor a({1, 12, 4, 4});
  Tensor b = a;
  for (int k : {0, 17, 90, 191}) b[k] = 0.5;
  CHECK(mmap_sim_loss(Var(a), Var(a)).item() == 0.0);
  CHECK(mmap_sim_loss(Var(a), Var(b)).item() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(mmap_dis_loss(Var(a), Var(b)).item() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(std::isfinite(mmap_dis_loss(Var(a), Var(a)).item()));
  CHECK(mmap_dis_loss(Var(a), Var(a)).item() == doctest::Approx(1e6));

  SUBCASE("dis strictly decreases as the maps move apart") {
    Rng rng(4);
    const Tensor probe = random_tensor({2, 12, 6, 6}, rng, 0, 1), dir = random_tensor({2, 12, 6, 6}, rng, 0, 1);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 40; ++k) {
      Tensor pred = probe;
      for (std::size_t q = 0; q < pred.size(); ++q) pred[q] += 0.05 * k * dir[q];
      const double v = mmap_dis_loss(Var(pred), Var(probe)).item();
      CHECK(v < prev);
      prev = v;
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(mmap_sim_loss(Var(Tensor({1, 12, 4, 4})), Var(Tensor({1, 12, 4, 5}))), ShapeError);
  }
}

TEST_CASE("pixel loss") {
  Rng rng(8);
  const Tensor x = random_tensor({2, 1, 5, 5}, rng, -1, 1);
  CHECK(pixel_loss(Var(x), Var(x), Var(x)).item() == 0.0);
  Tensor shifted = x;
  for (auto& v : shifted.values()) v += 0.1;
  CHECK(pixel_loss(Var(x), Var(x), Var(shifted)).item() == doctest::Approx(0.1).epsilon(1e-12));

  const Tensor d = random_tensor({2, 1, 5, 5}, rng, -1, 1), a = random_tensor({2, 1, 5, 5}, rng, -1, 1);
  double s1 = 0, s2 = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    s1 += std::abs(x[k] - d[k]);
    s2 += std::abs(x[k] - a[k]);
  }
  const double oracle = s1 / x.size() + s2 / x.size();
  CHECK(std::abs(pixel_loss(Var(x), Var(d), Var(a)).item() - oracle) < 1e-12);
}

TEST_CASE("tps: zero displacements are the identity") {
  const auto pts = grid_control_points(16, 32, 32, 4);
  const NormalizedImage img = smooth_image(32, 32);
  const Var x(nn::stack_images(std::vector<const FloatImage*>{&img}));
  const Var out = tps_warp(x, points_var(pts), Var(Tensor({1, 16, 2})));
  double worst = 0;
  for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, std::abs(out.value()[k] - x.value()[k]));
  CHECK(worst <= 1e-6);
}

TEST_CASE("tps: equal displacements translate the image") {
  const auto pts = grid_control_points(16, 32, 32, 4);
  const NormalizedImage img = smooth_image(32, 32);
  const Var x(nn::stack_images(std::vector<const FloatImage*>{&img}));
  for (Point t : {Point{1.5, -2.25}, Point{-0.4, 0.7}}) {
    Tensor disp({1, 16, 2});
    for (int k = 0; k < 16; ++k) disp[2 * k] = t[0], disp[2 * k + 1] = t[1];
    const Var out = tps_warp(x, points_var(pts), Var(disp));
    double worst = 0;
    for (int i = 4; i < 28; ++i)
      for (int j = 4; j < 28; ++j) {
        const double want = bilinear(img, i - t[0], j - t[1]);
        worst = std::max(worst, std::abs(out.value()[i * 32 + j] - want));
      }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("tps: single displaced point matches a brute-force linear solve") {
  const auto pts = grid_control_points(16, 41, 41, 5);
  std::vector<Point> disp(16, Point{0, 0});
  disp[6] = {2.0, -1.5};
  const int c = 16;
  std::vector<std::vector<double>> l(c + 3, std::vector<double>(c + 3, 0.0));
  for (int a = 0; a < c; ++a) {
    for (int b = 0; b < c; ++b) {
      const double r = std::hypot(pts[a][0] - pts[b][0], pts[a][1] - pts[b][1]);
      l[a][b] = r > 0 ? r * r * std::log(r) : 0.0;
    }
    l[a][a] += kTpsRidge;
    l[a][c] = l[c][a] = 1;
    l[a][c + 1] = l[c + 1][a] = pts[a][0];
    l[a][c + 2] = l[c + 2][a] = pts[a][1];
  }
  std::array<std::vector<double>, 2> coef;
  for (int axis = 0; axis < 2; ++axis) {
    std::vector<double> rhs(c + 3, 0.0);
    for (int k = 0; k < c; ++k) rhs[k] = disp[k][axis];
    coef[axis] = solve_dense(l, rhs);
  }
  const auto field = tps_displacement_field(pts, disp, 41, 41);
  const Var grid = tps_sampling_grid(points_var(pts), points_var(disp), 41, 41);
  Rng rng(11);
  double worst = 0;
  for (int s = 0; s < 100; ++s) {
    const int i = uniform_int(rng, 0, 40), j = uniform_int(rng, 0, 40);
    for (int axis = 0; axis < 2; ++axis) {
      double f = coef[axis][c] + coef[axis][c + 1] * i + coef[axis][c + 2] * j;
      for (int k = 0; k < c; ++k) {
        const double r = std::hypot(i - pts[k][0], j - pts[k][1]);
        f += coef[axis][k] * (r > 0 ? r * r * std::log(r) : 0.0);
      }
      worst = std::max(worst, std::abs(field[i * 41 + j][axis] - f));
      const double g = grid.value()[(i * 41 + j) * 2 + (1 - axis)];
      worst = std::max(worst, std::abs(g - ((axis == 0 ? i : j) - f)));
    }
  }
  CHECK(worst <= 1e-6);
  // Interpolation: the displaced control point moves by exactly its displacement.
  const auto at = field[static_cast<int>(pts[6][0]) * 41 + static_cast<int>(pts[6][1])];
  CHECK(at[0] == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(at[1] == doctest::Approx(-1.5).epsilon(1e-5));
}

TEST_CASE("tps warp gradients match finite differences") {
  Rng rng(12);
  const NormalizedImage img = smooth_image(24, 24);
  const Var x(nn::stack_images(std::vector<const FloatImage*>{&img}));
  auto base = grid_control_points(9, 24, 24, 3);
  for (auto& p : base) p[0] += uniform(rng, -1, 1), p[1] += uniform(rng, -1, 1);
  const Var pts = points_var(base, true);
  const Var disp(random_tensor({1, 9, 2}, rng, -2, 2), true);
  const Tensor weights = random_tensor({1, 1, 24, 24}, rng, -1, 1);
  auto loss = [&] { return nn::sum(nn::mul(tps_warp(x, pts, disp), Var(weights))); };
  CHECK(testutil::grad_check(loss, disp, 10, 1, 1e-6).max_rel_err < 1e-3);
  CHECK(testutil::grad_check(loss, pts, 10, 2, 1e-6).max_rel_err < 1e-3);
}

TEST_CASE("degenerate control points fall back to a regularized solve") {
  const std::vector<Point> line{{2, 2}, {5, 5}, {9, 9}};
  CHECK(control_points_degenerate(line));
  CHECK_FALSE(control_points_degenerate(grid_control_points(4, 20, 20, 2)));
  const auto field = tps_displacement_field(line, {Point{1, 0}, Point{1, 0}, Point{1, 0}}, 12, 12);
  for (const auto& f : field) CHECK((std::isfinite(f[0]) && std::isfinite(f[1])));
}

TEST_CASE("smooth field evaluation is differentiable in the points") {
  Rng rng(14);
  const std::vector<SmoothField> fields{SmoothField::sample(rng, 32, 32), SmoothField::sample(rng, 32, 32)};
  const Var pts(random_tensor({2, 5, 2}, rng, 2, 30), true);
  const Tensor weights = random_tensor({2, 5, 2}, rng, -1, 1);
  auto loss = [&] { return nn::sum(nn::mul(evaluate_fields(fields, pts, 2.0), Var(weights))); };
  CHECK(testutil::grad_check(loss, pts, 0, 3, 1e-6).max_rel_err < 1e-3);

  double ss = 0;
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) {
      const auto v = fields[0].at(i, j);
      ss += v[0] * v[0] + v[1] * v[1];
    }
  CHECK(std::sqrt(ss / (32 * 32)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("distortion module") {
  const DistortionConfig dc{16, 2.0, 1.0, 4.0};
  const DistortionNet g({4}, dc, 32, 32, 5);
  Rng rng(2);
  const Var x(random_tensor({2, 1, 32, 32}, rng, -1, 1));
  const Var h(random_tensor({2, 12, 32, 32}, rng, 0, 1));
  std::vector<SmoothField> fields{SmoothField::sample(rng, 32, 32), SmoothField::sample(rng, 32, 32)};
  const ControlPointSet cps = dist_forward(g, x, h, fields);
  CHECK(cps.points.shape() == Shape{2, 16, 2});
  for (double v : cps.points.value().values()) CHECK((v >= 0 && v <= 31));
  double mag = 0;
  for (std::size_t k = 0; k < cps.displacements.size(); k += 2) {
    mag += std::hypot(cps.displacements.value()[k], cps.displacements.value()[k + 1]);
  }
  CHECK(mag > 0);

  const DistortionNet flat({4}, {16, 0.0, 1.0, 4.0}, 32, 32, 5);
  const ControlPointSet zero = dist_forward(flat, x, h, fields);
  for (double v : zero.displacements.value().values()) CHECK(v == 0.0);
  const Var warped = tps_warp(x, zero.points, zero.displacements);
  double worst = 0;
  for (std::size_t k = 0; k < x.size(); ++k) worst = std::max(worst, std::abs(warped.value()[k] - x.value()[k]));
  CHECK(worst <= 1e-6);

  CHECK_THROWS_AS(DistortionNet({4}, {2, 2.0, 1.0, 4.0}, 32, 32, 5), std::invalid_argument);
  CHECK_THROWS_AS(g.forward(x, Var(Tensor({2, 11, 32, 32}))), ShapeError);
}

TEST_CASE("displacement module") {
  const DisplacementNet g({4, 1, 0.1}, 3), g2({4, 1, 0.1}, 3);
  Rng rng(6);
  const Var x(random_tensor({2, 1, 16, 16}, rng, -1, 1));
  const Var h(random_tensor({2, 12, 16, 16}, rng, 0, 1));
  const Var out = g.forward(x, h);
  CHECK(out.shape() == x.shape());
  CHECK(same(out.value().values(), g2.forward(x, h).value().values()));
  for (double v : out.value().values()) CHECK((v >= -1 && v <= 1));
  CHECK_THROWS_AS(g.forward(x, Var(Tensor({2, 12, 16, 8}))), ShapeError);
  CHECK_THROWS_AS(g.forward(Var(Tensor({2, 1, 18, 16})), Var(Tensor({2, 12, 18, 16}))), ShapeError);
}

TEST_CASE("extractor output contract") {
  const MinutiaeExtractor e({4, 1}, 9);
  Rng rng(10);
  for (int k = 0; k < 50; ++k) {
    NormalizedImage im({16, 16, 1});
    for (auto& v : im.values()) v = uniform(rng, -1, 1);
    const MinutiaeMap m = extract_minutiae_map(e, im);
    for (double v : m.values()) CHECK(v >= 0);
  }
  CHECK_THROWS_AS(extract_minutiae_map(e, NormalizedImage({16, 16, 3})), std::invalid_argument);
}

TEST_CASE("extractor save and load") {
  const fs::path dir = scratch("extractor");
  fs::create_directories(dir);
  ExtractorTrainConfig cfg;
  cfg.arch = {4, 1};
  cfg.synth = small_synth();
  cfg.steps = 3;
  cfg.batch_size = 2;
  cfg.seed = 4;
  const auto a = train_minutiae_extractor(cfg);
  const auto b = train_minutiae_extractor(cfg);
  save_extractor(dir / "e.ckpt", *a);
  const auto c = load_extractor(dir / "e.ckpt");
  const NormalizedImage probe = synth_fingerprint(3, small_synth()).image;
  const auto ma = extract_minutiae_map(*a, probe);
  CHECK(same(ma.values(), extract_minutiae_map(*b, probe).values()));
  CHECK(same(ma.values(), extract_minutiae_map(*c, probe).values()));
}

TEST_CASE("total objective is the weighted sum of its terms") {
  Rng rng(15);
  const Var gan = nn::mean(Var(Tensor({1}, std::vector<double>{0.37})));
  const Var ht(random_tensor({2, 12, 8, 8}, rng, 0, 1)), hp(random_tensor({2, 12, 8, 8}, rng, 0, 1)),
      hb(random_tensor({2, 12, 8, 8}, rng, 0, 1));
  const Var x(random_tensor({2, 1, 8, 8}, rng, -1, 1)), xd(random_tensor({2, 1, 8, 8}, rng, -1, 1)),
      xa(random_tensor({2, 1, 8, 8}, rng, -1, 1));
  const FpLossWeights w{0.05, 500000, 1000};
  const FpLossTerms t = fp_generator_loss(gan, ht, hp, hb, x, xd, xa, w);

  double sim = 0, dis = 0, pix1 = 0, pix2 = 0;
  for (int s = 0; s < 2; ++s) {
    double l1s = 0, l1d = 0;
    for (int k = 0; k < 12 * 64; ++k) {
      const std::size_t o = s * 12 * 64 + k;
      l1s += std::abs(ht.value()[o] - hp.value()[o]);
      l1d += std::abs(hp.value()[o] - hb.value()[o]);
    }
    sim += l1s / 2;
    dis += 1.0 / (l1d + 1e-6) / 2;
  }
  for (std::size_t k = 0; k < x.size(); ++k) {
    pix1 += std::abs(x.value()[k] - xd.value()[k]) / x.size();
    pix2 += std::abs(x.value()[k] - xa.value()[k]) / x.size();
  }
  const double want = 0.37 + 0.05 * sim + 500000 * dis + 1000 * (pix1 + pix2);
  CHECK(std::abs(t.total.item() - want) <= 1e-6 * std::abs(want));
  CHECK(t.mmap_sim.item() >= 0);
  CHECK(t.mmap_dis.item() >= 0);
  CHECK(t.pixel.item() >= 0);
}

TEST_CASE("fingerprint training is deterministic and resumable") {
  const auto prints = tiny_prints(4);
  const MinutiaeExtractor e({4, 1}, 2);
  FpTrainConfig cfg = tiny_fp_config();
  const auto a = train_fp(prints, e, cfg);
  const auto b = train_fp(prints, e, cfg);
  REQUIRE(a.trace.size() == 4);
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].total == b.trace[k].total);
    CHECK(a.trace[k].d_loss == b.trace[k].d_loss);
    CHECK(std::isfinite(a.trace[k].total));
  }

  const fs::path dir = scratch("train");
  cfg.out_dir = dir;
  cfg.checkpoint_every = 2;
  cfg.steps = 2;
  train_fp(prints, e, cfg);
  REQUIRE(fs::exists(fp_checkpoint_path(dir, 2)));
  cfg.steps = 4;
  const auto resumed = train_fp(prints, e, cfg, fp_checkpoint_path(dir, 2));
  REQUIRE(resumed.trace.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(resumed.trace[k].total == a.trace[k].total);
  CHECK(same(resumed.g_disp->params().param("out.weight").value().values(),
             a.g_disp->params().param("out.weight").value().values()));

  std::ifstream log(dir / "train_log.csv");
  std::string line;
  int rows = 0;
  std::getline(log, line);
  CHECK(line == "step,L,L_gan,L_mmap_sim,L_mmap_dis,L_pixel,L_D");
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 4);

  REQUIRE(fs::exists(dir / "fp_attack.ckpt"));
  const FpAttack attack = load_fp_attack(dir / "fp_attack.ckpt");
  const auto r1 = attack_fingerprint(attack, e, prints[0], 5);
  const auto r2 = attack_fingerprint(attack, e, prints[0], 5);
  CHECK(same(r1.x_adv.values(), r2.x_adv.values()));
  CHECK(r1.control_points.size() == 5);
  for (double v : r1.x_adv.values()) CHECK((v >= -1 && v <= 1));
}

TEST_CASE("fingerprint training validation") {
  const MinutiaeExtractor e({4, 1}, 2);
  FpTrainConfig cfg = tiny_fp_config();
  CHECK_THROWS_AS(train_fp({}, e, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_fp({NormalizedImage({32, 32, 3})}, e, cfg), std::invalid_argument);
  CHECK_THROWS_AS(train_fp({NormalizedImage({30, 32, 1})}, e, cfg), ShapeError);
  cfg.weights.lambda_pixel = 0;
  CHECK_THROWS_AS(train_fp(tiny_prints(1), e, cfg), std::invalid_argument);
}
