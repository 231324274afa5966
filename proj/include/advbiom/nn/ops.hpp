#pragma once

#include <vector>

#include "advbiom/nn/autograd.hpp"

// Differentiable primitives. Image tensors are NCHW; "per-sample" reductions keep
// axis 0 and collapse the rest.
namespace advbiom::nn {

// elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var square(const Var& a);
Var abs(const Var& a);
Var sqrt(const Var& a);
Var log(const Var& a);
Var reciprocal(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
/// log(sigmoid(a)) without overflow.
Var log_sigmoid(const Var& a);
/// Gradient is zero where the clamp is active.
Var clamp(const Var& a, double lo, double hi);
/// max(a, lo) elementwise.
Var clamp_min(const Var& a, double lo);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double s) { return mul_scalar(a, s); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }

// reductions
Var sum(const Var& a);
Var mean(const Var& a);
/// [N, ...] -> [N]
Var sum_per_sample(const Var& a);
Var mean_per_sample(const Var& a);
/// [N, ...] -> [N], Euclidean norm of each sample.
Var l2_norm_per_sample(const Var& a);

// shape
Var reshape(const Var& a, Shape shape);
/// Concatenate along axis 1 (channels for NCHW, columns for [N, K]).
Var concat1(const Var& a, const Var& b);
/// Columns [start, start + len) of axis 1.
Var slice1(const Var& a, int start, int len);

// dense
/// [M, K] x [K, N]
Var matmul(const Var& a, const Var& b);
/// [B, M, K] x [B, K, N]
Var batched_matmul(const Var& a, const Var& b);
/// x [N, K], weight [M, K], bias [M] (may be undefined) -> [N, M]
Var linear(const Var& x, const Var& weight, const Var& bias);
/// Rows of a [N, D] matrix scaled to unit norm.
Var l2_normalize_rows(const Var& a, double eps = 1e-12);
/// [N, D] x [N, D] -> [N]
Var rowwise_dot(const Var& a, const Var& b);
/// Mean softmax cross-entropy of logits [N, K] against integer labels.
Var cross_entropy(const Var& logits, const std::vector<int>& labels);

// convolutional
/// x [N, C, H, W], weight [O, C, k, k], bias [O] (may be undefined), zero padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var upsample_nearest2x(const Var& x);
Var global_avg_pool(const Var& x);
/// Per-(sample, channel) normalization with affine gamma/beta [C].
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Per-channel normalization. In training mode uses batch statistics and updates the
/// running estimates in place.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

// spatial
/// Bilinear sampling of img [N, C, H, W] at grid [N, Ho, Wo, 2] holding (col, row) pixel
/// coordinates. Out-of-range coordinates clamp to the border (zero gradient there).
Var grid_sample(const Var& img, const Var& grid);

}  // namespace advbiom::nn
