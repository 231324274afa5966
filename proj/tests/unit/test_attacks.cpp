#include <doctest.h>

#include <cmath>

#include "advbiom/attacks/grad_attacks.hpp"
#include "advbiom/nn/batch.hpp"

using namespace advbiom;
using namespace advbiom::attacks;
using matcher::ToyEmbedder;
using nn::Tensor;
using nn::Var;

namespace {

// Embedding (1, mean(x)) / norm: the cosine with a (0, 1) target grows with every pixel.
class MeanMatcher : public matcher::Matcher {
 public:
  std::string name() const override { return "mean"; }
  ImageShape input_shape() const override { return {8, 8, 1}; }
  int embedding_dim() const override { return 2; }
  Var embed_batch(const Var& x) const override {
    const int n = x.dim(0);
    const Var s = nn::reshape(nn::mean_per_sample(x), {n, 1});
    return nn::l2_normalize_rows(nn::concat1(Var(Tensor({n, 1}, 1.0)), s));
  }
};

// Ignores its input entirely.
class ConstantMatcher : public MeanMatcher {
 public:
  Var embed_batch(const Var& x) const override { return Var(Tensor({x.dim(0), 2}, std::sqrt(0.5))); }
};

matcher::ToyEmbedderConfig arch() {
  matcher::ToyEmbedderConfig c;
  c.image_size = 16;
  c.base_width = 4;
  c.embedding_dim = 16;
  return c;
}

NormalizedImage random_image(ImageShape s, Rng& rng, double amp = 0.95) {
  NormalizedImage im(s);
  for (auto& v : im.values()) v = uniform(rng, -amp, amp);
  return im;
}

}  // namespace

TEST_CASE("fgsm adds +epsilon where the gradient is positive everywhere") {
  MeanMatcher m;
  Rng rng(1);
  const auto x = random_image(m.input_shape(), rng, 0.5);
  const NormalizedImage target({8, 8, 1}, 0.5);
  const auto r = fgsm_attack(m, x, {0.06, 1e-3, 0}, {AttackMode::impersonation, &target});
  CHECK_FALSE(r.zero_gradient);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r.x_adv.values()[i] == x.values()[i] + 0.06);
  CHECK(r.score_after > r.score_before);
  CHECK_THROWS(fgsm_attack(m, x, {0.06, 1e-3, 0}, {AttackMode::impersonation, nullptr}));
}

TEST_CASE("fgsm with a vanishing gradient returns x and flags it") {
  ConstantMatcher m;
  Rng rng(2);
  const auto x = random_image(m.input_shape(), rng);
  const auto r = fgsm_attack(m, x, {0.06, 1e-3, 0});
  CHECK(r.zero_gradient);
  CHECK(r.linf == 0.0);
}

TEST_CASE("fgsm perturbs every unclipped pixel by exactly epsilon") {
  ToyEmbedder m(arch(), 4);
  Rng rng(3);
  for (int probe = 0; probe < 10; ++probe) {
    auto x = random_image(m.input_shape(), rng, 1.0);
    const double eps = 0.06;
    const auto r = fgsm_attack(m, x, {eps, 1e-3, static_cast<std::uint64_t>(probe)});
    CHECK_FALSE(r.zero_gradient);
    r.x_adv.validate();
    int exact = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double before = x.values()[i], after = r.x_adv.values()[i];
      const double d = std::abs(after - before);
      if (after == 1.0 || after == -1.0) {
        CHECK(d <= eps + 1e-12);  // clipped
      } else if (d != 0.0) {
        CHECK(std::abs(d - eps) <= 1e-12);
        ++exact;
      }
    }
    CHECK(exact > static_cast<int>(x.size()) / 2);
    CHECK(r.score_after < r.score_before);
  }
}

TEST_CASE("pgd stays inside the epsilon ball at every iterate") {
  ToyEmbedder m(arch(), 5);
  Rng rng(4);
  const double eps = 0.06;
  PgdConfig cfg;
  cfg.epsilon = eps;
  cfg.step_size = 0.01;
  cfg.max_iters = 20;
  for (int probe = 0; probe < 50; ++probe) {
    const auto x = random_image(m.input_shape(), rng, 1.0);
    int seen = 0;
    double worst = 0.0;
    const auto r = pgd_attack(m, x, cfg, {}, [&](int, const NormalizedImage& it) {
      ++seen;
      worst = std::max(worst, linf_distance(it, x));
      it.validate();
    });
    CHECK(seen == 20);
    CHECK(worst <= eps + 1e-6);
    CHECK(r.linf <= eps + 1e-6);
    r.x_adv.validate();
  }
}

TEST_CASE("pgd with one full step is fgsm") {
  ToyEmbedder m(arch(), 6);
  Rng rng(5);
  const auto x = random_image(m.input_shape(), rng);
  PgdConfig p;
  p.epsilon = p.step_size = 0.05;
  p.max_iters = 1;
  p.seed = 9;
  const auto a = pgd_attack(m, x, p);
  const auto b = fgsm_attack(m, x, {0.05, p.probe_radius, 9});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(a.x_adv.values()[i] == b.x_adv.values()[i]);
  CHECK(a.score_after == b.score_after);
}

TEST_CASE("pgd keeps the best iterate and is deterministic") {
  ToyEmbedder m(arch(), 7);
  Rng rng(6);
  const auto x = random_image(m.input_shape(), rng);
  PgdConfig p;
  p.epsilon = 0.06;
  p.step_size = 0.02;
  p.max_iters = 15;
  std::vector<double> losses;
  auto r = pgd_attack(m, x, p, {}, [&](int, const NormalizedImage& it) {
    losses.push_back(1.0 - matcher::match_score(m, x, it));
  });
  CHECK(r.loss == doctest::Approx(*std::max_element(losses.begin(), losses.end())).epsilon(1e-12));
  CHECK(r.loss >= losses.front() - 1e-12);
  auto again = pgd_attack(m, x, p);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r.x_adv.values()[i] == again.x_adv.values()[i]);

  // an easy threshold stops after the first step
  p.success_threshold = 2.0;
  auto early = pgd_attack(m, x, p);
  CHECK(early.reached_threshold);
  CHECK(early.iterations == 1);
  // an impossible one runs to the end and reports failure
  p.success_threshold = -2.0;
  p.random_restarts = 1;
  auto exhausted = pgd_attack(m, x, p);
  CHECK_FALSE(exhausted.reached_threshold);
  CHECK(exhausted.iterations == 30);

  p.step_size = 0.1;
  CHECK_THROWS(pgd_attack(m, x, p));
}

TEST_CASE("pgd impersonation raises the target score") {
  ToyEmbedder m(arch(), 8);
  Rng rng(7);
  int improved = 0;
  for (int k = 0; k < 10; ++k) {
    const auto x = random_image(m.input_shape(), rng);
    const auto y = random_image(m.input_shape(), rng);
    PgdConfig p;
    p.epsilon = 0.1;
    p.step_size = 0.02;
    p.max_iters = 10;
    const auto r = pgd_attack(m, x, p, {AttackMode::impersonation, &y});
    improved += r.score_after > r.score_before;
  }
  CHECK(improved == 10);
}

TEST_CASE("clamp_compose with a zero mask is the identity") {
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    const auto x = random_image({16, 16, 3}, rng, 1.0);
    const auto out = clamp_compose(x, AdversarialMask(x.shape()));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.values()[i] == x.values()[i]);
  }
}
