#include "advbiom/nn/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "advbiom/core/image.hpp"

namespace advbiom::nn {

namespace {

Tensor* grad_of(Node& n, std::size_t i) {
  Node& in = *n.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(a.shape()));
  }
}

template <class F, class D>
Var unary(const Var& a, F f, D d) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_result(std::move(out), {a}, [d](Node& n) {
    Tensor* g = grad_of(n, 0);
    if (!g) return;
    const Tensor& xin = n.inputs[0]->value;
    for (std::size_t i = 0; i < xin.size(); ++i) (*g)[i] += n.grad[i] * d(xin[i], n.value[i]);
  });
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t sample_count(const Var& a) {
  if (a.value().rank() == 0) throw ShapeError("per-sample op on rank-0 tensor");
  return static_cast<std::size_t>(a.dim(0));
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.accumulate(b.value());
  return make_result(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* g = grad_of(n, k)) g->accumulate(n.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    if (Tensor* g = grad_of(n, 0)) g->accumulate(n.grad);
    if (Tensor* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& n) {
    const Tensor& av = n.inputs[0]->value;
    const Tensor& bv = n.inputs[1]->value;
    if (Tensor* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * bv[i];
    }
    if (Tensor* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i] * av[i];
    }
  });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var abs(const Var& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var sqrt(const Var& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var reciprocal(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Var log_sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return -softplus(-x); }, [](double x, double) { return stable_sigmoid(-x); });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var clamp_min(const Var& a, double lo) {
  return unary(
      a, [lo](double x) { return std::max(x, lo); }, [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return make_result(Tensor::scalar(s), {a}, [](Node& n) {
    if (Tensor* g = grad_of(n, 0)) {
      const double go = n.grad[0];
      for (auto& v : g->values()) v += go;
    }
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sum_per_sample(const Var& a) {
  const std::size_t n = sample_count(a);
  const std::size_t per = n ? a.size() / n : 0;
  Tensor out({static_cast<int>(n)});
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += a.value()[s * per + i];
    out[s] = acc;
  }
  return make_result(std::move(out), {a}, [n, per](Node& node) {
    if (Tensor* g = grad_of(node, 0)) {
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < per; ++i) (*g)[s * per + i] += node.grad[s];
    }
  });
}

Var mean_per_sample(const Var& a) {
  const std::size_t n = sample_count(a);
  if (n == 0 || a.size() == 0) throw ShapeError("mean_per_sample of empty tensor");
  return mul_scalar(sum_per_sample(a), static_cast<double>(n) / static_cast<double>(a.size()));
}

Var l2_norm_per_sample(const Var& a) {
  const std::size_t n = sample_count(a);
  const std::size_t per = n ? a.size() / n : 0;
  Tensor out({static_cast<int>(n)});
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double v = a.value()[s * per + i];
      acc += v * v;
    }
    out[s] = std::sqrt(acc);
  }
  return make_result(std::move(out), {a}, [n, per](Node& node) {
    Tensor* g = grad_of(node, 0);
    if (!g) return;
    const Tensor& x = node.inputs[0]->value;
    for (std::size_t s = 0; s < n; ++s) {
      const double norm = node.value[s];
      if (norm <= 0.0) continue;  // subgradient 0 at the origin
      const double scale = node.grad[s] / norm;
      for (std::size_t i = 0; i < per; ++i) (*g)[s * per + i] += scale * x[s * per + i];
    }
  });
}

// ---------------------------------------------------------------- shape

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, [](Node& n) {
    if (Tensor* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
    }
  });
}

Var concat1(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() || sa[0] != sb[0] ||
      !std::equal(sa.begin() + 2, sa.end(), sb.begin() + 2)) {
    throw ShapeError("concat1: incompatible " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t n = sa[0];
  const std::size_t inner = numel(Shape(sa.begin() + 2, sa.end()));
  const std::size_t ka = sa[1] * inner, kb = sb[1] * inner;
  Shape so = sa;
  so[1] = sa[1] + sb[1];
  Tensor out(so);
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.value().data() + s * ka, ka, out.data() + s * (ka + kb));
    std::copy_n(b.value().data() + s * kb, kb, out.data() + s * (ka + kb) + ka);
  }
  return make_result(std::move(out), {a, b}, [n, ka, kb](Node& node) {
    if (Tensor* g = grad_of(node, 0)) {
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < ka; ++i) (*g)[s * ka + i] += node.grad[s * (ka + kb) + i];
    }
    if (Tensor* g = grad_of(node, 1)) {
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < kb; ++i) (*g)[s * kb + i] += node.grad[s * (ka + kb) + ka + i];
    }
  });
}

Var slice1(const Var& a, int start, int len) {
  const Shape& sa = a.shape();
  if (sa.size() < 2 || start < 0 || len <= 0 || start + len > sa[1]) {
    throw ShapeError("slice1: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") of " + to_string(sa));
  }
  const std::size_t n = sa[0];
  const std::size_t inner = numel(Shape(sa.begin() + 2, sa.end()));
  const std::size_t full = sa[1] * inner, part = len * inner, off = start * inner;
  Shape so = sa;
  so[1] = len;
  Tensor out(so);
  for (std::size_t s = 0; s < n; ++s)
    std::copy_n(a.value().data() + s * full + off, part, out.data() + s * part);
  return make_result(std::move(out), {a}, [n, full, part, off](Node& node) {
    if (Tensor* g = grad_of(node, 0)) {
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < part; ++i) (*g)[s * full + off + i] += node.grad[s * part + i];
    }
  });
}

// ---------------------------------------------------------------- dense

namespace {

// C[M,N] (+)= op(A) op(B), row-major.
void gemm(bool ta, bool tb, int m, int n, int k, const double* a, const double* b, double* c,
          double beta) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, 1.0, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor out({m, n});
  gemm(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), 0.0);
  return make_result(std::move(out), {a, b}, [m, n, k](Node& node) {
    const Tensor& av = node.inputs[0]->value;
    const Tensor& bv = node.inputs[1]->value;
    if (Tensor* g = grad_of(node, 0)) gemm(false, true, m, k, n, node.grad.data(), bv.data(), g->data(), 1.0);
    if (Tensor* g = grad_of(node, 1)) gemm(true, false, k, n, m, av.data(), node.grad.data(), g->data(), 1.0);
  });
}

Var batched_matmul(const Var& a, const Var& b) {
  require_rank(a, 3, "batched_matmul");
  require_rank(b, 3, "batched_matmul");
  const int batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw ShapeError("batched_matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor out({batch, m, n});
  for (int s = 0; s < batch; ++s) {
    gemm(false, false, m, n, k, a.value().data() + s * m * k, b.value().data() + s * k * n,
         out.data() + s * m * n, 0.0);
  }
  return make_result(std::move(out), {a, b}, [batch, m, n, k](Node& node) {
    const Tensor& av = node.inputs[0]->value;
    const Tensor& bv = node.inputs[1]->value;
    Tensor* ga = grad_of(node, 0);
    Tensor* gb = grad_of(node, 1);
    for (int s = 0; s < batch; ++s) {
      const double* go = node.grad.data() + s * m * n;
      if (ga) gemm(false, true, m, k, n, go, bv.data() + s * k * n, ga->data() + s * m * k, 1.0);
      if (gb) gemm(true, false, k, n, m, av.data() + s * m * k, go, gb->data() + s * k * n, 1.0);
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const int n = x.dim(0), k = x.dim(1), m = weight.dim(0);
  if (weight.dim(1) != k) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " weight " + to_string(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.size() != static_cast<std::size_t>(m))) {
    throw ShapeError("linear: bias " + to_string(bias.shape()));
  }
  Tensor out({n, m});
  gemm(false, true, n, m, k, x.value().data(), weight.value().data(), out.data(), 0.0);
  if (has_bias) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) out[i * m + j] += bias.value()[j];
  }
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [n, m, k, has_bias](Node& node) {
    const Tensor& xv = node.inputs[0]->value;
    const Tensor& wv = node.inputs[1]->value;
    if (Tensor* g = grad_of(node, 0)) gemm(false, false, n, k, m, node.grad.data(), wv.data(), g->data(), 1.0);
    if (Tensor* g = grad_of(node, 1)) gemm(true, false, m, k, n, node.grad.data(), xv.data(), g->data(), 1.0);
    if (has_bias) {
      if (Tensor* g = grad_of(node, 2)) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) (*g)[j] += node.grad[i * m + j];
      }
    }
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  require_rank(a, 2, "l2_normalize_rows");
  const int n = a.dim(0), d = a.dim(1);
  Tensor out(a.shape());
  auto norms = std::make_shared<std::vector<double>>(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += a.value()[i * d + j] * a.value()[i * d + j];
    const double norm = std::max(std::sqrt(s), eps);
    (*norms)[i] = norm;
    for (int j = 0; j < d; ++j) out[i * d + j] = a.value()[i * d + j] / norm;
  }
  return make_result(std::move(out), {a}, [n, d, norms](Node& node) {
    Tensor* g = grad_of(node, 0);
    if (!g) return;
    // d(x/|x|) = (I - u u^T) / |x|
    for (int i = 0; i < n; ++i) {
      const double* u = node.value.data() + i * d;
      const double* go = node.grad.data() + i * d;
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += go[j] * u[j];
      for (int j = 0; j < d; ++j) (*g)[i * d + j] += (go[j] - dot * u[j]) / (*norms)[i];
    }
  });
}

Var rowwise_dot(const Var& a, const Var& b) {
  require_same_shape(a, b, "rowwise_dot");
  require_rank(a, 2, "rowwise_dot");
  const int n = a.dim(0), d = a.dim(1);
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += a.value()[i * d + j] * b.value()[i * d + j];
    out[i] = s;
  }
  return make_result(std::move(out), {a, b}, [n, d](Node& node) {
    const Tensor& av = node.inputs[0]->value;
    const Tensor& bv = node.inputs[1]->value;
    if (Tensor* g = grad_of(node, 0)) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) (*g)[i * d + j] += node.grad[i] * bv[i * d + j];
    }
    if (Tensor* g = grad_of(node, 1)) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) (*g)[i * d + j] += node.grad[i] * av[i * d + j];
    }
  });
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
  require_rank(logits, 2, "cross_entropy");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n || n == 0) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     to_string(logits.shape()));
  }
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * k);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw std::out_of_range("cross_entropy: label out of range");
    const double* row = logits.value().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (int j = 0; j < k; ++j) (*probs)[i * k + j] = std::exp(row[j] - mx) / z;
    loss -= row[labels[i]] - mx - std::log(z);
  }
  return make_result(Tensor::scalar(loss / n), {logits}, [n, k, probs, labels](Node& node) {
    Tensor* g = grad_of(node, 0);
    if (!g) return;
    const double scale = node.grad[0] / n;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) {
        const double target = j == labels[i] ? 1.0 : 0.0;
        (*g)[i * k + j] += scale * ((*probs)[i * k + j] - target);
      }
    }
  });
}

// ---------------------------------------------------------------- convolutional

namespace {

struct ConvGeometry {
  int n, c, h, w, o, k, stride, pad, ho, wo;
  int col_rows() const { return c * k * k; }
  int col_cols() const { return ho * wo; }
};

// One sample's patches as a [C*k*k, Ho*Wo] matrix.
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const int cols = g.col_cols();
  for (int ci = 0; ci < g.c; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        double* dst = col + static_cast<std::size_t>((ci * g.k + ki) * g.k + kj) * cols;
        for (int oi = 0; oi < g.ho; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          double* row = dst + oi * g.wo;
          if (ii < 0 || ii >= g.h) {
            std::fill_n(row, g.wo, 0.0);
            continue;
          }
          const double* src = plane + ii * g.w;
          for (int oj = 0; oj < g.wo; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            row[oj] = (jj >= 0 && jj < g.w) ? src[jj] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* dx) {
  const int cols = g.col_cols();
  for (int ci = 0; ci < g.c; ++ci) {
    double* plane = dx + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj) {
        const double* src = col + static_cast<std::size_t>((ci * g.k + ki) * g.k + kj) * cols;
        for (int oi = 0; oi < g.ho; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.h) continue;
          double* row = plane + ii * g.w;
          const double* s = src + oi * g.wo;
          for (int oj = 0; oj < g.wo; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            if (jj >= 0 && jj < g.w) row[jj] += s[oj];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (weight.dim(1) != g.c || weight.dim(3) != g.k) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " weight " + to_string(weight.shape()));
  }
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: empty output for " + to_string(x.shape()));
  const bool has_bias = bias.defined();

  // Patches are rebuilt per sample (and again in backward) so the buffer stays cache-sized.
  const std::size_t in_stride = static_cast<std::size_t>(g.c) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.o) * g.col_cols();
  std::vector<double> col(static_cast<std::size_t>(g.col_rows()) * g.col_cols());
  Tensor out({g.n, g.o, g.ho, g.wo});
  const int hw = g.col_cols();
  for (int s = 0; s < g.n; ++s) {
    const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    const double* patches = x.value().data() + s * in_stride;
    if (!pointwise) {
      im2col(g, patches, col.data());
      patches = col.data();
    }
    double* dst = out.data() + s * out_stride;
    gemm(false, false, g.o, hw, g.col_rows(), weight.value().data(), patches, dst, 0.0);
    if (has_bias)
      for (int oc = 0; oc < g.o; ++oc) {
        const double b = bias.value()[oc];
        for (int p = 0; p < hw; ++p) dst[oc * hw + p] += b;
      }
  }

  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(std::move(out), std::move(inputs), [g, has_bias, in_stride, out_stride](Node& node) {
    const int hw = g.col_cols();
    const bool pointwise = g.k == 1 && g.stride == 1 && g.pad == 0;
    const Tensor& xv = node.inputs[0]->value;
    const Tensor& wv = node.inputs[1]->value;
    Tensor* gw = grad_of(node, 1);
    Tensor* gx = grad_of(node, 0);
    Tensor* gb = has_bias ? grad_of(node, 2) : nullptr;
    std::vector<double> col(pointwise ? 0 : static_cast<std::size_t>(g.col_rows()) * hw);
    std::vector<double> dcol(gx && !pointwise ? static_cast<std::size_t>(g.col_rows()) * hw : 0);
    for (int s = 0; s < g.n; ++s) {
      const double* dy = node.grad.data() + s * out_stride;
      if (gw) {
        const double* patches = xv.data() + s * in_stride;
        if (!pointwise) {
          im2col(g, patches, col.data());
          patches = col.data();
        }
        gemm(false, true, g.o, g.col_rows(), hw, dy, patches, gw->data(), 1.0);
      }
      if (gb)
        for (int oc = 0; oc < g.o; ++oc) {
          double acc = 0.0;
          for (int p = 0; p < hw; ++p) acc += dy[oc * hw + p];
          (*gb)[oc] += acc;
        }
      if (gx) {
        if (pointwise) {
          gemm(true, false, g.col_rows(), hw, g.o, wv.data(), dy, gx->data() + s * in_stride, 1.0);
        } else {
          gemm(true, false, g.col_rows(), hw, g.o, wv.data(), dy, dcol.data(), 0.0);
          col2im(g, dcol.data(), gx->data() + s * in_stride);
        }
      }
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  require_rank(x, 4, "upsample_nearest2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  const std::size_t planes = static_cast<std::size_t>(n) * c;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.value().data() + p * h * w;
    double* dst = out.data() + p * 4 * h * w;
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
  }
  return make_result(std::move(out), {x}, [planes, h, w](Node& node) {
    Tensor* g = grad_of(node, 0);
    if (!g) return;
    for (std::size_t p = 0; p < planes; ++p) {
      const double* src = node.grad.data() + p * 4 * h * w;
      double* dst = g->data() + p * h * w;
      for (int i = 0; i < 2 * h; ++i)
        for (int j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
    }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 4, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1);
  const int hw = x.dim(2) * x.dim(3);
  Tensor out({n, c});
  for (int p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (int i = 0; i < hw; ++i) s += x.value()[static_cast<std::size_t>(p) * hw + i];
    out[p] = s / hw;
  }
  return make_result(std::move(out), {x}, [n, c, hw](Node& node) {
    Tensor* g = grad_of(node, 0);
    if (!g) return;
    for (int p = 0; p < n * c; ++p)
      for (int i = 0; i < hw; ++i) (*g)[static_cast<std::size_t>(p) * hw + i] += node.grad[p] / hw;
  });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_rank(x, 4, "instance_norm");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("instance_norm: affine parameters must have " + std::to_string(c) + " entries");
  }
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * c);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * hw;
      double mu = 0.0;
      for (int i = 0; i < hw; ++i) mu += x.value()[base + i];
      mu /= hw;
      double var = 0.0;
      for (int i = 0; i < hw; ++i) {
        const double d = x.value()[base + i] - mu;
        var += d * d;
      }
      var /= hw;
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[s * c + ch] = is;
      for (int i = 0; i < hw; ++i) {
        const double xh = (x.value()[base + i] - mu) * is;
        (*xhat)[base + i] = xh;
        out[base + i] = gamma.value()[ch] * xh + beta.value()[ch];
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, [n, c, hw, xhat, inv_std](Node& node) {
    Tensor* gx = grad_of(node, 0);
    Tensor* gg = grad_of(node, 1);
    Tensor* gb = grad_of(node, 2);
    const Tensor& gam = node.inputs[1]->value;
    for (int s = 0; s < n; ++s) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * hw;
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int i = 0; i < hw; ++i) {
          sum_dy += node.grad[base + i];
          sum_dy_xh += node.grad[base + i] * (*xhat)[base + i];
        }
        if (gg) (*gg)[ch] += sum_dy_xh;
        if (gb) (*gb)[ch] += sum_dy;
        if (gx) {
          const double k = gam[ch] * (*inv_std)[s * c + ch];
          const double m_dy = sum_dy / hw, m_dy_xh = sum_dy_xh / hw;
          for (int i = 0; i < hw; ++i) {
            (*gx)[base + i] += k * (node.grad[base + i] - m_dy - (*xhat)[base + i] * m_dy_xh);
          }
        }
      }
    }
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum, double eps) {
  require_rank(x, 4, "batch_norm");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c) ||
      running_mean.size() != static_cast<std::size_t>(c) || running_var.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm: parameters must have " + std::to_string(c) + " entries");
  }
  const std::size_t count = static_cast<std::size_t>(n) * hw;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(c);
  for (int ch = 0; ch < c; ++ch) {
    double mu, var;
    if (training) {
      mu = 0.0;
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < hw; ++i) mu += x.value()[(static_cast<std::size_t>(s) * c + ch) * hw + i];
      mu /= count;
      var = 0.0;
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < hw; ++i) {
          const double d = x.value()[(static_cast<std::size_t>(s) * c + ch) * hw + i] - mu;
          var += d * d;
        }
      var /= count;
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * unbiased;
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[ch] = is;
    for (int s = 0; s < n; ++s) {
      for (int i = 0; i < hw; ++i) {
        const std::size_t idx = (static_cast<std::size_t>(s) * c + ch) * hw + i;
        const double xh = (x.value()[idx] - mu) * is;
        (*xhat)[idx] = xh;
        out[idx] = gamma.value()[ch] * xh + beta.value()[ch];
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [n, c, hw, count, xhat, inv_std, training](Node& node) {
    Tensor* gx = grad_of(node, 0);
    Tensor* gg = grad_of(node, 1);
    Tensor* gb = grad_of(node, 2);
    const Tensor& gam = node.inputs[1]->value;
    for (int ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < hw; ++i) {
          const std::size_t idx = (static_cast<std::size_t>(s) * c + ch) * hw + i;
          sum_dy += node.grad[idx];
          sum_dy_xh += node.grad[idx] * (*xhat)[idx];
        }
      if (gg) (*gg)[ch] += sum_dy_xh;
      if (gb) (*gb)[ch] += sum_dy;
      if (!gx) continue;
      const double k = gam[ch] * (*inv_std)[ch];
      const double m_dy = training ? sum_dy / count : 0.0;
      const double m_dy_xh = training ? sum_dy_xh / count : 0.0;
      for (int s = 0; s < n; ++s)
        for (int i = 0; i < hw; ++i) {
          const std::size_t idx = (static_cast<std::size_t>(s) * c + ch) * hw + i;
          (*gx)[idx] += k * (node.grad[idx] - m_dy - (*xhat)[idx] * m_dy_xh);
        }
    }
  });
}

// ---------------------------------------------------------------- spatial

Var grid_sample(const Var& img, const Var& grid) {
  require_rank(img, 4, "grid_sample");
  require_rank(grid, 4, "grid_sample");
  const int n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
  const int ho = grid.dim(1), wo = grid.dim(2);
  if (grid.dim(0) != n || grid.dim(3) != 2) {
    throw ShapeError("grid_sample: image " + to_string(img.shape()) + " grid " + to_string(grid.shape()));
  }
  Tensor out({n, c, ho, wo});
  const Tensor& iv = img.value();
  const Tensor& gv = grid.value();
  for (int s = 0; s < n; ++s) {
    for (int p = 0; p < ho * wo; ++p) {
      const double gx = std::clamp(gv[(static_cast<std::size_t>(s) * ho * wo + p) * 2], 0.0, w - 1.0);
      const double gy = std::clamp(gv[(static_cast<std::size_t>(s) * ho * wo + p) * 2 + 1], 0.0, h - 1.0);
      const int x0 = std::min(static_cast<int>(std::floor(gx)), w - 1);
      const int y0 = std::min(static_cast<int>(std::floor(gy)), h - 1);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double ax = gx - x0, ay = gy - y0;
      for (int ch = 0; ch < c; ++ch) {
        const double* plane = iv.data() + (static_cast<std::size_t>(s) * c + ch) * h * w;
        out[(static_cast<std::size_t>(s) * c + ch) * ho * wo + p] =
            (1 - ay) * ((1 - ax) * plane[y0 * w + x0] + ax * plane[y0 * w + x1]) +
            ay * ((1 - ax) * plane[y1 * w + x0] + ax * plane[y1 * w + x1]);
      }
    }
  }
  return make_result(std::move(out), {img, grid}, [n, c, h, w, ho, wo](Node& node) {
    const Tensor& iv = node.inputs[0]->value;
    const Tensor& gv = node.inputs[1]->value;
    Tensor* gi = grad_of(node, 0);
    Tensor* gg = grad_of(node, 1);
    for (int s = 0; s < n; ++s) {
      for (int p = 0; p < ho * wo; ++p) {
        const std::size_t gidx = (static_cast<std::size_t>(s) * ho * wo + p) * 2;
        const double rx = gv[gidx], ry = gv[gidx + 1];
        const bool inside_x = rx >= 0.0 && rx <= w - 1.0;
        const bool inside_y = ry >= 0.0 && ry <= h - 1.0;
        const double gx = std::clamp(rx, 0.0, w - 1.0);
        const double gy = std::clamp(ry, 0.0, h - 1.0);
        const int x0 = std::min(static_cast<int>(std::floor(gx)), w - 1);
        const int y0 = std::min(static_cast<int>(std::floor(gy)), h - 1);
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double ax = gx - x0, ay = gy - y0;
        double dgx = 0.0, dgy = 0.0;
        for (int ch = 0; ch < c; ++ch) {
          const double go = node.grad[(static_cast<std::size_t>(s) * c + ch) * ho * wo + p];
          if (go == 0.0) continue;
          const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * h * w;
          if (gi) {
            (*gi)[base + y0 * w + x0] += go * (1 - ay) * (1 - ax);
            (*gi)[base + y0 * w + x1] += go * (1 - ay) * ax;
            (*gi)[base + y1 * w + x0] += go * ay * (1 - ax);
            (*gi)[base + y1 * w + x1] += go * ay * ax;
          }
          if (gg) {
            const double* plane = iv.data() + base;
            const double v00 = plane[y0 * w + x0], v01 = plane[y0 * w + x1];
            const double v10 = plane[y1 * w + x0], v11 = plane[y1 * w + x1];
            dgx += go * ((1 - ay) * (v01 - v00) + ay * (v11 - v10));
            dgy += go * ((1 - ax) * (v10 - v00) + ax * (v11 - v01));
          }
        }
        if (gg) {
          if (inside_x) (*gg)[gidx] += dgx;
          if (inside_y) (*gg)[gidx + 1] += dgy;
        }
      }
    }
  });
}

}  // namespace advbiom::nn
