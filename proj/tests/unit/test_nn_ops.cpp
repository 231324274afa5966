#include <doctest.h>

#include <cmath>
#include <source_location>

#include "advbiom/nn/checkpoint.hpp"
#include "advbiom/nn/layers.hpp"
#include "advbiom/nn/optim.hpp"
#include "gradcheck.hpp"

using namespace advbiom;
using namespace advbiom::nn;

namespace {

Var random_leaf(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * normal(rng);
  return Var::parameter(std::move(t));
}

// Fixed random projection turns any tensor-valued op into a scalar loss.
Var project(const Var& y, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "projection"));
  Tensor w(y.shape());
  for (auto& v : w.values()) v = normal(rng);
  return sum(mul(y, Var(w)));
}

void check(const std::function<Var()>& f, const Var& x, double tol = 1e-6,
           std::source_location loc = std::source_location::current()) {
  auto res = testutil::grad_check(f, x, 40, 7);
  INFO("line " << loc.line() << " rel err " << res.max_rel_err);
  CHECK(res.max_rel_err < tol);
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  Rng rng(1);
  Var a = random_leaf({3, 4}, rng);
  Var b = random_leaf({3, 4}, rng);
  Tensor pos(a.shape());
  for (auto& v : pos.values()) v = uniform(rng, 0.5, 2.0);
  Var p = Var::parameter(pos);

  check([&] { return project(a + b, 1); }, a);
  check([&] { return project(a - b, 2); }, b);
  check([&] { return project(a * b, 3); }, a);
  check([&] { return project(square(a) * 0.5 + 1.0, 4); }, a);
  check([&] { return project(abs(a), 5); }, a);
  check([&] { return project(sqrt(p), 6); }, p);
  check([&] { return project(log(p), 7); }, p);
  check([&] { return project(reciprocal(p), 8); }, p);
  check([&] { return project(tanh(a), 9); }, a);
  check([&] { return project(sigmoid(a), 10); }, a);
  check([&] { return project(relu(a), 11); }, a);
  check([&] { return project(leaky_relu(a, 0.2), 12); }, a);
  check([&] { return project(log_sigmoid(a), 13); }, a);
  check([&] { return project(clamp(a, -0.5, 0.5), 14); }, a);
  check([&] { return project(clamp_min(a, 0.1), 15); }, a);
}

TEST_CASE("log_sigmoid stays finite for large logits") {
  Var x(Tensor({2}, std::vector<double>{-800.0, 800.0}));
  Var y = log_sigmoid(x);
  CHECK(y.value()[0] == doctest::Approx(-800.0));
  CHECK(y.value()[1] == doctest::Approx(0.0));
}

TEST_CASE("reductions and shape ops match finite differences") {
  Rng rng(2);
  Var a = random_leaf({3, 2, 2, 2}, rng);
  Var b = random_leaf({3, 3, 2, 2}, rng);
  check([&] { return sum(a); }, a);
  check([&] { return mean(square(a)); }, a);
  check([&] { return project(sum_per_sample(a), 1); }, a);
  check([&] { return project(mean_per_sample(a), 2); }, a);
  check([&] { return project(l2_norm_per_sample(a), 3); }, a);
  check([&] { return project(reshape(a, {6, 4}), 4); }, a);
  check([&] { return project(concat1(a, b), 5); }, a);
  check([&] { return project(concat1(a, b), 5); }, b);
  check([&] { return project(slice1(b, 1, 2), 6); }, b);
}

TEST_CASE("dense ops match finite differences") {
  Rng rng(3);
  Var a = random_leaf({3, 4}, rng);
  Var w = random_leaf({5, 4}, rng);
  Var bias = random_leaf({5}, rng);
  Var m = random_leaf({4, 2}, rng);
  Var ba = random_leaf({2, 3, 4}, rng);
  Var bb = random_leaf({2, 4, 2}, rng);
  check([&] { return project(matmul(a, m), 1); }, a);
  check([&] { return project(matmul(a, m), 1); }, m);
  check([&] { return project(batched_matmul(ba, bb), 2); }, ba);
  check([&] { return project(batched_matmul(ba, bb), 2); }, bb);
  check([&] { return project(linear(a, w, bias), 3); }, a);
  check([&] { return project(linear(a, w, bias), 3); }, w);
  check([&] { return project(linear(a, w, bias), 3); }, bias);
  check([&] { return project(l2_normalize_rows(a), 4); }, a);
  Var c = random_leaf({3, 4}, rng);
  check([&] { return project(rowwise_dot(a, c), 5); }, a);
  check([&] { return cross_entropy(a, {0, 3, 1}); }, a);
}

TEST_CASE("conv and normalization ops match finite differences") {
  Rng rng(4);
  Var x = random_leaf({2, 3, 7, 6}, rng);
  Var w = random_leaf({4, 3, 3, 3}, rng, 0.3);
  Var b = random_leaf({4}, rng);
  for (int stride : {1, 2}) {
    check([&] { return project(conv2d(x, w, b, stride, 1), 1); }, x);
    check([&] { return project(conv2d(x, w, b, stride, 1), 1); }, w);
    check([&] { return project(conv2d(x, w, b, stride, 1), 1); }, b);
  }
  check([&] { return project(upsample_nearest2x(x), 2); }, x);
  check([&] { return project(global_avg_pool(x), 3); }, x);

  Var gamma = random_leaf({3}, rng);
  Var beta = random_leaf({3}, rng);
  check([&] { return project(instance_norm(x, gamma, beta), 4); }, x, 1e-5);
  check([&] { return project(instance_norm(x, gamma, beta), 4); }, gamma);
  check([&] { return project(instance_norm(x, gamma, beta), 4); }, beta);

  Tensor rm({3}), rv({3}, 1.0);
  auto bn = [&](bool training) {
    return project(batch_norm(x, gamma, beta, rm, rv, training), 5);
  };
  check([&] { return bn(true); }, x, 1e-5);
  check([&] { return bn(true); }, gamma);
  check([&] { return bn(false); }, x);
}

TEST_CASE("conv2d agrees with a direct loop") {
  Rng rng(5);
  Var x = random_leaf({1, 2, 5, 5}, rng);
  Var w = random_leaf({3, 2, 3, 3}, rng);
  Var b = random_leaf({3}, rng);
  Var y = conv2d(x, w, b, 2, 1);
  REQUIRE(y.shape() == Shape{1, 3, 3, 3});
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = b.value()[o];
        for (int c = 0; c < 2; ++c)
          for (int ki = 0; ki < 3; ++ki)
            for (int kj = 0; kj < 3; ++kj) {
              const int ii = i * 2 - 1 + ki, jj = j * 2 - 1 + kj;
              if (ii < 0 || jj < 0 || ii >= 5 || jj >= 5) continue;
              acc += w.value()[((o * 2 + c) * 3 + ki) * 3 + kj] * x.value()[(c * 5 + ii) * 5 + jj];
            }
        CHECK(y.value()[(o * 3 + i) * 3 + j] == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("grid_sample matches finite differences and interpolates") {
  Rng rng(6);
  Var img = random_leaf({1, 2, 5, 6}, rng);
  Tensor g({1, 3, 4, 2});
  for (std::size_t i = 0; i < g.size(); i += 2) {
    g[i] = uniform(rng, 0.2, 4.8);
    g[i + 1] = uniform(rng, 0.2, 3.8);
  }
  Var grid = Var::parameter(g);
  check([&] { return project(grid_sample(img, grid), 1); }, img);
  check([&] { return project(grid_sample(img, grid), 1); }, grid, 1e-5);

  // Integer coordinates reproduce pixels exactly.
  Tensor ig({1, 1, 1, 2}, std::vector<double>{3.0, 2.0});
  Var out = grid_sample(img, Var(ig));
  CHECK(out.value()[0] == img.value()[2 * 6 + 3]);
}

TEST_CASE("no-grad guard skips graph recording") {
  Rng rng(7);
  Var a = random_leaf({2, 2}, rng);
  NoGradGuard guard;
  Var y = square(a);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("adam state survives a checkpoint round trip") {
  Rng rng(8);
  ParameterSet ps;
  Linear lin(ps, "fc", 3, 2, rng);
  Adam opt(ps, {});
  Var x = random_leaf({4, 3}, rng);
  auto train_step = [&] {
    ps.zero_grad();
    mean(square(lin(x))).backward();
    opt.step();
  };
  train_step();

  Checkpoint ck;
  export_parameters(ps, "net.", ck.arrays);
  for (auto& [k, v] : opt.state()) ck.arrays["opt." + k] = v;
  ck.meta["step"] = opt.step_count();
  const auto path = std::filesystem::temp_directory_path() / "advbiom_ckpt_test.bin";
  save_checkpoint(path, ck);

  train_step();
  const Tensor expected = ps.param("fc.weight").value();

  Checkpoint loaded = load_checkpoint(path);
  import_parameters(ps, "net.", loaded.arrays);
  std::map<std::string, Tensor> st;
  for (auto& [k, v] : loaded.arrays)
    if (k.rfind("opt.", 0) == 0) st[k.substr(4)] = v;
  opt.load_state(st, loaded.meta["step"].get<long>());
  train_step();
  const Tensor& got = ps.param("fc.weight").value();
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expected[i]);
  std::filesystem::remove(path);
}
