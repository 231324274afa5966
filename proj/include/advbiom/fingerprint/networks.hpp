#pragma once

#include <array>
#include <vector>

#include "advbiom/fingerprint/minutiae.hpp"
#include "advbiom/fingerprint/tps.hpp"
#include "advbiom/nn/layers.hpp"

namespace advbiom::fingerprint {

/// Encoder-decoder conditioned on the probe and the target minutiae map:
/// c7s1-w, d2w, d4w, R4w x res_blocks, u2w, uw, c7s1-1 with instance norm and ReLU.
/// The last conv adds a residual to the probe, so an untrained net starts near x.
struct DisplacementNetConfig {
  int base_width = 16;
  int res_blocks = 2;
  double output_gain = 0.1;
};

class DisplacementNet {
 public:
  DisplacementNet(const DisplacementNetConfig& cfg, std::uint64_t seed);
  DisplacementNet(const DisplacementNet&) = delete;
  DisplacementNet& operator=(const DisplacementNet&) = delete;

  /// x [N, 1, H, W] and h_target [N, 12, H, W] -> x_disp = clamp(x + tanh(G), -1, 1).
  nn::Var forward(const nn::Var& x, const nn::Var& h_target) const;

  const DisplacementNetConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  struct Block {
    nn::Conv2d conv;
    nn::InstanceNorm2d norm;
  };
  nn::Var block(const Block& b, const nn::Var& x) const;

  DisplacementNetConfig cfg_;
  nn::ParameterSet params_;
  Block head_, down1_, down2_, up1_, up2_;
  std::vector<Block> res_;
  nn::Conv2d out_;
};

struct DistortionConfig {
  /// Number of control points.
  int c = 16;
  /// Distortion extent; displacements are sigma * unit_px times a unit-RMS field.
  double sigma = 2.0;
  double unit_px = 1.0;
  /// Border kept free of control points, in pixels.
  double margin = 4.0;
};

/// Strided conv encoder on (x_disp, minutiae map) that places c control points: each
/// starts on a regular grid and may move up to half a grid cell.
struct DistortionNetConfig {
  int base_width = 8;
};

class DistortionNet {
 public:
  DistortionNet(const DistortionNetConfig& cfg, const DistortionConfig& dist, int height, int width,
                std::uint64_t seed);
  DistortionNet(const DistortionNet&) = delete;
  DistortionNet& operator=(const DistortionNet&) = delete;

  /// [N, 1, H, W], [N, 12, H, W] -> control points [N, c, 2] as (i, j).
  nn::Var forward(const nn::Var& x, const nn::Var& h) const;

  const DistortionNetConfig& config() const { return cfg_; }
  const DistortionConfig& distortion() const { return dist_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const std::vector<std::array<double, 2>>& base_points() const { return base_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  DistortionNetConfig cfg_;
  DistortionConfig dist_;
  int height_, width_;
  std::vector<std::array<double, 2>> base_;
  double reach_i_, reach_j_;
  nn::ParameterSet params_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear head_;
};

struct ControlPointSet {
  /// [N, c, 2] positions (i, j) and displacements (di, dj) in pixels.
  nn::Var points;
  nn::Var displacements;
};

/// Control points from the encoder; displacements are the per-sample smooth fields
/// evaluated there, scaled by sigma * unit_px.
ControlPointSet dist_forward(const DistortionNet& g, const nn::Var& x_disp, const nn::Var& h,
                             const std::vector<SmoothField>& fields);

}  // namespace advbiom::fingerprint
