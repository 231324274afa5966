#pragma once

#include <vector>

#include "advbiom/core/image.hpp"
#include "advbiom/core/random.hpp"
#include "advbiom/fingerprint/synth.hpp"
#include "advbiom/nn/autograd.hpp"

namespace advbiom::fingerprint {

inline constexpr int kMinutiaeChannels = 12;

/// H x W x 12 heat map; channel k collects minutiae with direction near k pi / 6.
class MinutiaeMap : public FloatImage {
 public:
  MinutiaeMap() = default;
  MinutiaeMap(int height, int width) : FloatImage({height, width, kMinutiaeChannels}) {}
  explicit MinutiaeMap(const FloatImage& im);

  /// Throws std::domain_error on a wrong channel count or a negative / non-finite value.
  void validate() const;
};

struct DisplacementConfig {
  /// L1 length |di| + |dj| of every displacement, in pixels.
  double d = 20.0;
};

/// Gaussian splats (sigma px, unit peak) into the two channels adjacent to each theta,
/// weighted linearly by angular distance. Overlapping splats combine by max.
MinutiaeMap render_minutiae_map(const std::vector<MinutiaPoint>& points, int height, int width,
                                double sigma = 2.0);

/// Vertex offset of the parabola through (-1, f_prev), (0, f_mid), (1, f_next), in
/// channel units; 0 when the three values are equal.
double parabola_vertex_offset(double f_prev, double f_mid, double f_next);

/// Cells above m_t that are the maximum of their 5 x 5 x 3 neighbourhood (channels wrap
/// modulo 12; ties go to the first cell in (i, j, c) order). theta comes from the
/// parabola through the three channel values.
std::vector<MinutiaPoint> detect_minutiae(const MinutiaeMap& h, double m_t = 0.2);

/// Moves each point by a seeded random (di, dj) with |di| + |dj| = d, then clips it to
/// the image. theta is kept.
std::vector<MinutiaPoint> displace_minutiae(const std::vector<MinutiaPoint>& points, const DisplacementConfig& cfg,
                                            int height, int width, Rng& rng);

/// render_minutiae_map(displace_minutiae(points)).
MinutiaeMap build_target_map(const std::vector<MinutiaPoint>& points, const DisplacementConfig& cfg, int height,
                             int width, Rng& rng, double sigma = 2.0);

/// Batch mean of the per-sample L1 distance between [N, 12, H, W] maps.
nn::Var mmap_sim_loss(const nn::Var& h_target, const nn::Var& h_pred);
/// Batch mean of 1 / (L1 distance + eps_div).
nn::Var mmap_dis_loss(const nn::Var& a, const nn::Var& b, double eps_div = 1e-6);
/// mean |x - x_disp| + mean |x - x_adv|.
nn::Var pixel_loss(const nn::Var& x, const nn::Var& x_disp, const nn::Var& x_adv);

/// Matches detections to ground truth greedily by distance; a pair counts when the
/// positions are within max_dist and the directions within max_angle.
struct MinutiaeMatch {
  int truth = 0;
  int detected = 0;
  int matched = 0;
  double recall() const { return truth ? static_cast<double>(matched) / truth : 1.0; }
};
MinutiaeMatch match_minutiae(const std::vector<MinutiaPoint>& truth, const std::vector<MinutiaPoint>& detected,
                             double max_dist, double max_angle);

/// Smallest absolute difference between two directions.
double angle_distance(double a, double b);

}  // namespace advbiom::fingerprint
