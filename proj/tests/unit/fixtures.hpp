#pragma once

// Small matchers, images and configs shared by the unit tests and the acceptance run.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "advbiom/advgen/networks.hpp"
#include "advbiom/core/random.hpp"
#include "advbiom/matcher/matcher.hpp"
#include "advbiom/nn/batch.hpp"
#include "advbiom/nn/ops.hpp"

namespace testutil {

// Embeds an image as its own normalized pixel vector, so cosines are hand-computable.
class FlattenMatcher : public advbiom::matcher::Matcher {
 public:
  explicit FlattenMatcher(advbiom::ImageShape s) : s_(s) {}
  std::string name() const override { return "flatten"; }
  advbiom::ImageShape input_shape() const override { return s_; }
  int embedding_dim() const override { return static_cast<int>(s_.size()); }
  advbiom::nn::Var embed_batch(const advbiom::nn::Var& x) const override {
    return advbiom::nn::l2_normalize_rows(advbiom::nn::reshape(x, {x.dim(0), embedding_dim()}));
  }

 private:
  advbiom::ImageShape s_;
};

// Fixed random projection; smooth everywhere, cheap enough for finite differences.
class ProjectionMatcher : public advbiom::matcher::Matcher {
 public:
  ProjectionMatcher(advbiom::ImageShape s, int dim, std::uint64_t seed)
      : s_(s), w_({dim, static_cast<int>(s.size())}) {
    advbiom::Rng rng(seed);
    for (auto& v : w_.values()) v = advbiom::normal(rng);
  }
  std::string name() const override { return "projection"; }
  advbiom::ImageShape input_shape() const override { return s_; }
  int embedding_dim() const override { return w_.shape()[0]; }
  advbiom::nn::Var embed_batch(const advbiom::nn::Var& x) const override {
    namespace nn = advbiom::nn;
    const nn::Var flat = nn::reshape(x, {x.dim(0), static_cast<int>(s_.size())});
    return nn::l2_normalize_rows(nn::linear(flat, nn::Var(w_), nn::Var()));
  }

 private:
  advbiom::ImageShape s_;
  advbiom::nn::Tensor w_;
};

inline advbiom::NormalizedImage random_image(advbiom::ImageShape s, advbiom::Rng& rng, double amp = 0.9) {
  advbiom::NormalizedImage im(s);
  for (auto& v : im.values()) v = advbiom::uniform(rng, -amp, amp);
  return im;
}

inline advbiom::nn::Var batch_of(const std::vector<advbiom::NormalizedImage>& v, bool grad = false) {
  return advbiom::nn::Var(advbiom::nn::stack_images(v), grad);
}

inline advbiom::advgen::GeneratorConfig mini_generator(
    advbiom::attacks::AttackMode mode = advbiom::attacks::AttackMode::obfuscation) {
  advbiom::advgen::GeneratorConfig c;
  c.mode = mode;
  c.base_width = 2;
  c.res_blocks = 1;
  c.output_gain = 0.3;
  return c;
}

inline advbiom::advgen::DiscriminatorConfig mini_discriminator() {
  advbiom::advgen::DiscriminatorConfig c;
  c.base_width = 2;
  c.layers = 2;
  c.strided_layers = 2;
  return c;
}

// Dense Gaussian elimination with partial pivoting; kept apart from the library solver.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  return x;
}

// Bilinear sample with border clamp at (row, col).
inline double bilinear(const advbiom::FloatImage& im, double r, double c) {
  r = std::clamp(r, 0.0, im.height() - 1.0);
  c = std::clamp(c, 0.0, im.width() - 1.0);
  const int r0 = std::min(static_cast<int>(std::floor(r)), im.height() - 2);
  const int c0 = std::min(static_cast<int>(std::floor(c)), im.width() - 2);
  const double fr = r - r0, fc = c - c0;
  return (1 - fr) * (1 - fc) * im.at(r0, c0, 0) + (1 - fr) * fc * im.at(r0, c0 + 1, 0) +
         fr * (1 - fc) * im.at(r0 + 1, c0, 0) + fr * fc * im.at(r0 + 1, c0 + 1, 0);
}

inline advbiom::NormalizedImage smooth_image(int h, int w) {
  advbiom::NormalizedImage im({h, w, 1});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) im.at(i, j, 0) = 0.8 * std::sin(0.31 * i + 0.17 * j) * std::cos(0.23 * j - 0.05 * i);
  return im;
}

inline advbiom::nn::Var points_var(const std::vector<std::array<double, 2>>& pts, bool grad = false) {
  advbiom::nn::Tensor t({1, static_cast<int>(pts.size()), 2});
  for (std::size_t k = 0; k < pts.size(); ++k) {
    t[2 * k] = pts[k][0];
    t[2 * k + 1] = pts[k][1];
  }
  return advbiom::nn::Var(t, grad);
}

}  // namespace testutil
