#include "advbiom/fingerprint/tps.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "advbiom/core/image.hpp"
#include "advbiom/nn/ops.hpp"

namespace advbiom::fingerprint {

using nn::Node;
using nn::Tensor;
using nn::Var;
using Point = std::array<double, 2>;

namespace {

constexpr double kTwoPi = 2 * std::numbers::pi;

Tensor* grad_of(Node& n, std::size_t i) {
  Node& in = *n.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

// (2 log r + 1), the radial factor of d/dp U(|p - q|) = (2 log r + 1) (p - q).
double kernel_slope(double r) { return r > 0.0 ? 2.0 * std::log(r) + 1.0 : 0.0; }

struct Solved {
  Eigen::MatrixXd points;  // c x 2
  Eigen::MatrixXd coeffs;  // (c + 3) x 2: radial weights, then affine terms
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
};

Solved solve_tps(const std::vector<Point>& pts, const Eigen::MatrixXd& disp) {
  const int c = static_cast<int>(pts.size());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(c + 3, c + 3);
  for (int a = 0; a < c; ++a) {
    for (int b = 0; b < c; ++b) {
      l(a, b) = tps_kernel(std::hypot(pts[a][0] - pts[b][0], pts[a][1] - pts[b][1]));
    }
    l(a, a) += kTpsRidge;
    l(a, c) = l(c, a) = 1.0;
    l(a, c + 1) = l(c + 1, a) = pts[a][0];
    l(a, c + 2) = l(c + 2, a) = pts[a][1];
  }
  if (control_points_degenerate(pts)) {
    std::fprintf(stderr, "warning: tps control points are degenerate; using a regularized solve\n");
    for (int k = c; k < c + 3; ++k) l(k, k) = -kTpsRidge;
  }
  Solved s;
  s.points.resize(c, 2);
  for (int a = 0; a < c; ++a) s.points.row(a) << pts[a][0], pts[a][1];
  s.lu.compute(l);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(c + 3, 2);
  rhs.topRows(c) = disp;
  s.coeffs = s.lu.solve(rhs);
  return s;
}

std::array<double, 2> eval_tps(const Solved& s, double i, double j) {
  const int c = static_cast<int>(s.points.rows());
  double fi = s.coeffs(c, 0) + s.coeffs(c + 1, 0) * i + s.coeffs(c + 2, 0) * j;
  double fj = s.coeffs(c, 1) + s.coeffs(c + 1, 1) * i + s.coeffs(c + 2, 1) * j;
  for (int k = 0; k < c; ++k) {
    const double u = tps_kernel(std::hypot(i - s.points(k, 0), j - s.points(k, 1)));
    fi += s.coeffs(k, 0) * u;
    fj += s.coeffs(k, 1) * u;
  }
  return {fi, fj};
}

void require_points(const Var& v, const char* what) {
  if (v.value().rank() != 3 || v.dim(2) != 2) {
    throw ShapeError(std::string(what) + ": expected [N, c, 2], got " + nn::to_string(v.shape()));
  }
}

}  // namespace

double tps_kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

bool control_points_degenerate(const std::vector<Point>& points) {
  if (points.size() < 3) return true;
  Eigen::MatrixXd q(points.size(), 3);
  for (std::size_t k = 0; k < points.size(); ++k) q.row(k) << 1.0, points[k][0], points[k][1];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(q);
  lu.setThreshold(1e-9);
  return lu.rank() < 3;
}

Var tps_sampling_grid(const Var& points, const Var& displacements, int height, int width) {
  require_points(points, "tps_sampling_grid");
  require_points(displacements, "tps_sampling_grid");
  if (points.shape() != displacements.shape()) throw ShapeError("tps_sampling_grid: points/displacements differ");
  const int n = points.dim(0), c = points.dim(1);
  if (c < 1 || height < 1 || width < 1) throw std::invalid_argument("tps_sampling_grid: empty input");

  auto solved = std::make_shared<std::vector<Solved>>();
  Tensor grid({n, height, width, 2});
  for (int s = 0; s < n; ++s) {
    std::vector<Point> pts(c);
    Eigen::MatrixXd disp(c, 2);
    for (int k = 0; k < c; ++k) {
      const std::size_t o = (static_cast<std::size_t>(s) * c + k) * 2;
      pts[k] = {points.value()[o], points.value()[o + 1]};
      disp.row(k) << displacements.value()[o], displacements.value()[o + 1];
    }
    solved->push_back(solve_tps(pts, disp));
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        const auto f = eval_tps(solved->back(), i, j);
        const std::size_t o = ((static_cast<std::size_t>(s) * height + i) * width + j) * 2;
        grid[o] = j - f[1];
        grid[o + 1] = i - f[0];
      }
  }

  return nn::make_result(std::move(grid), {points, displacements}, [=](Node& node) {
    Tensor* gp = grad_of(node, 0);
    Tensor* gd = grad_of(node, 1);
    for (int s = 0; s < n; ++s) {
      const Solved& sv = (*solved)[s];
      const Eigen::MatrixXd& m = sv.coeffs;
      Eigen::MatrixXd gm = Eigen::MatrixXd::Zero(c + 3, 2);
      Eigen::MatrixXd gpts = Eigen::MatrixXd::Zero(c, 2);
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) {
          const std::size_t o = ((static_cast<std::size_t>(s) * height + i) * width + j) * 2;
          // grid = (j - f_j, i - f_i)
          const double gfi = -node.grad[o + 1], gfj = -node.grad[o];
          if (gfi == 0.0 && gfj == 0.0) continue;
          gm(c, 0) += gfi;
          gm(c, 1) += gfj;
          gm(c + 1, 0) += gfi * i;
          gm(c + 1, 1) += gfj * i;
          gm(c + 2, 0) += gfi * j;
          gm(c + 2, 1) += gfj * j;
          for (int k = 0; k < c; ++k) {
            const double di = sv.points(k, 0) - i, dj = sv.points(k, 1) - j;
            const double r = std::hypot(di, dj);
            const double u = tps_kernel(r);
            gm(k, 0) += gfi * u;
            gm(k, 1) += gfj * u;
            if (gp) {
              const double gb = gfi * m(k, 0) + gfj * m(k, 1);
              const double slope = kernel_slope(r);
              gpts(k, 0) += gb * slope * di;
              gpts(k, 1) += gb * slope * dj;
            }
          }
        }
      // coeffs = L^-1 [D; 0] with L symmetric
      const Eigen::MatrixXd z = sv.lu.solve(gm);
      if (gd) {
        for (int k = 0; k < c; ++k) {
          const std::size_t o = (static_cast<std::size_t>(s) * c + k) * 2;
          (*gd)[o] += z(k, 0);
          (*gd)[o + 1] += z(k, 1);
        }
      }
      if (gp) {
        const Eigen::MatrixXd gl = -z * m.transpose();
        for (int a = 0; a < c; ++a) {
          for (int b = 0; b < c; ++b) {
            if (a == b) continue;
            const double di = sv.points(a, 0) - sv.points(b, 0), dj = sv.points(a, 1) - sv.points(b, 1);
            const double w = (gl(a, b) + gl(b, a)) * kernel_slope(std::hypot(di, dj));
            gpts(a, 0) += w * di;
            gpts(a, 1) += w * dj;
          }
          gpts(a, 0) += gl(a, c + 1) + gl(c + 1, a);
          gpts(a, 1) += gl(a, c + 2) + gl(c + 2, a);
        }
        for (int k = 0; k < c; ++k) {
          const std::size_t o = (static_cast<std::size_t>(s) * c + k) * 2;
          (*gp)[o] += gpts(k, 0);
          (*gp)[o + 1] += gpts(k, 1);
        }
      }
    }
  });
}

Var tps_warp(const Var& x, const Var& points, const Var& displacements) {
  if (x.value().rank() != 4) throw ShapeError("tps_warp: expected [N, C, H, W], got " + nn::to_string(x.shape()));
  if (points.value().rank() != 3 || points.dim(0) != x.dim(0)) throw ShapeError("tps_warp: batch sizes differ");
  return nn::grid_sample(x, tps_sampling_grid(points, displacements, x.dim(2), x.dim(3)));
}

std::vector<Point> tps_displacement_field(const std::vector<Point>& points, const std::vector<Point>& displacements,
                                          int height, int width) {
  if (points.size() != displacements.size() || points.empty()) {
    throw std::invalid_argument("tps_displacement_field: need matching, non-empty point lists");
  }
  Eigen::MatrixXd disp(points.size(), 2);
  for (std::size_t k = 0; k < points.size(); ++k) disp.row(k) << displacements[k][0], displacements[k][1];
  const Solved s = solve_tps(points, disp);
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(height) * width);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) out.push_back(eval_tps(s, i, j));
  return out;
}

std::vector<Point> grid_control_points(int count, int height, int width, double margin) {
  if (count < 1) throw std::invalid_argument("grid_control_points: count must be positive");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  const int rows = (count + cols - 1) / cols;
  auto spread = [](int k, int n, double lo, double hi) { return n == 1 ? (lo + hi) / 2 : lo + (hi - lo) * k / (n - 1); };
  std::vector<Point> out;
  for (int r = 0; r < rows; ++r)
    for (int q = 0; q < cols && static_cast<int>(out.size()) < count; ++q)
      out.push_back({spread(r, rows, margin, height - 1 - margin), spread(q, cols, margin, width - 1 - margin)});
  return out;
}

SmoothField SmoothField::sample(Rng& rng, int height, int width, int waves, double max_cycles) {
  SmoothField f;
  for (auto& comp : f.components) {
    for (int w = 0; w < waves; ++w) {
      const double dir = uniform(rng, 0.0, kTwoPi), cycles = uniform(rng, 0.3, max_cycles);
      comp.push_back({cycles * std::cos(dir) / height, cycles * std::sin(dir) / width, uniform(rng, 0.0, kTwoPi),
                      uniform(rng, 0.5, 1.0)});
    }
  }
  double ms = 0.0;
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) {
      const auto v = f.at(i, j);
      ms += v[0] * v[0] + v[1] * v[1];
    }
  const double norm = std::sqrt(ms / (static_cast<double>(height) * width));
  if (norm > 0)
    for (auto& comp : f.components)
      for (auto& w : comp) w.amplitude /= norm;
  return f;
}

std::array<double, 2> SmoothField::at(double i, double j) const {
  std::array<double, 2> v{0.0, 0.0};
  for (int c = 0; c < 2; ++c)
    for (const Wave& w : components[c]) v[c] += w.amplitude * std::sin(kTwoPi * (w.ki * i + w.kj * j) + w.phase);
  return v;
}

std::array<std::array<double, 2>, 2> SmoothField::jacobian(double i, double j) const {
  std::array<std::array<double, 2>, 2> jac{};
  for (int c = 0; c < 2; ++c)
    for (const Wave& w : components[c]) {
      const double d = w.amplitude * kTwoPi * std::cos(kTwoPi * (w.ki * i + w.kj * j) + w.phase);
      jac[c][0] += d * w.ki;
      jac[c][1] += d * w.kj;
    }
  return jac;
}

Var evaluate_fields(const std::vector<SmoothField>& fields, const Var& points, double scale) {
  require_points(points, "evaluate_fields");
  const int n = points.dim(0), c = points.dim(1);
  if (static_cast<int>(fields.size()) != n) throw std::invalid_argument("evaluate_fields: one field per sample");
  Tensor out({n, c, 2});
  for (int s = 0; s < n; ++s)
    for (int k = 0; k < c; ++k) {
      const std::size_t o = (static_cast<std::size_t>(s) * c + k) * 2;
      const auto v = fields[s].at(points.value()[o], points.value()[o + 1]);
      out[o] = scale * v[0];
      out[o + 1] = scale * v[1];
    }
  return nn::make_result(std::move(out), {points}, [fields, n, c, scale](Node& node) {
    Tensor* gp = grad_of(node, 0);
    if (!gp) return;
    const Tensor& pv = node.inputs[0]->value;
    for (int s = 0; s < n; ++s)
      for (int k = 0; k < c; ++k) {
        const std::size_t o = (static_cast<std::size_t>(s) * c + k) * 2;
        const auto jac = fields[s].jacobian(pv[o], pv[o + 1]);
        for (int a = 0; a < 2; ++a) (*gp)[o + a] += scale * (jac[0][a] * node.grad[o] + jac[1][a] * node.grad[o + 1]);
      }
  });
}

}  // namespace advbiom::fingerprint
