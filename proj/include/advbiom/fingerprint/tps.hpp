#pragma once

#include <array>
#include <vector>

#include "advbiom/core/random.hpp"
#include "advbiom/nn/autograd.hpp"

namespace advbiom::fingerprint {

/// Thin plate spline kernel r^2 log r, 0 at r = 0.
double tps_kernel(double r);

/// Ridge added to the kernel block of every solve.
inline constexpr double kTpsRidge = 1e-6;

/// True when the points do not span the plane (fewer than 3, or all collinear), which
/// leaves the affine part of the spline undetermined.
bool control_points_degenerate(const std::vector<std::array<double, 2>>& points);

/// Interpolates per-point displacements (di, dj) over every pixel of an h x w image
/// with a thin plate spline through the control points (i, j), and returns the bilinear
/// sampling grid [N, h, w, 2] holding (j - f_j, i - f_i). Content at a control point
/// therefore moves by its displacement. points and displacements are [N, c, 2];
/// gradients flow to both. Degenerate point sets get a regularized solve and a
/// warning on stderr.
nn::Var tps_sampling_grid(const nn::Var& points, const nn::Var& displacements, int height, int width);

/// grid_sample(x, tps_sampling_grid(...)); x is [N, C, H, W].
nn::Var tps_warp(const nn::Var& x, const nn::Var& points, const nn::Var& displacements);

/// Dense displacement field (di, dj) at every pixel for one sample, no autograd. Used
/// by tests and reports.
std::vector<std::array<double, 2>> tps_displacement_field(const std::vector<std::array<double, 2>>& points,
                                                          const std::vector<std::array<double, 2>>& displacements,
                                                          int height, int width);

/// `count` points on the most square grid that holds them, evenly spread inside a
/// `margin`-pixel border and filled row by row.
std::vector<std::array<double, 2>> grid_control_points(int count, int height, int width, double margin);

/// A smooth random displacement field: each component is a sum of `waves` plane waves
/// of at most `max_cycles` periods across the image, scaled so the displacement length
/// has unit RMS over the pixel grid. Stands in for a learned statistical distortion model.
struct SmoothField {
  struct Wave {
    double ki, kj, phase, amplitude;
  };
  std::array<std::vector<Wave>, 2> components;

  static SmoothField sample(Rng& rng, int height, int width, int waves = 3, double max_cycles = 1.2);
  std::array<double, 2> at(double i, double j) const;
  /// d(component)/d(i, j) at one point.
  std::array<std::array<double, 2>, 2> jacobian(double i, double j) const;
};

/// displacements[n, k] = scale * field_n(points[n, k]); differentiable in points.
nn::Var evaluate_fields(const std::vector<SmoothField>& fields, const nn::Var& points, double scale);

}  // namespace advbiom::fingerprint
