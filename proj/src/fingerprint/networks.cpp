#include "advbiom/fingerprint/networks.hpp"

#include <stdexcept>

#include "advbiom/nn/ops.hpp"

namespace advbiom::fingerprint {

using nn::Var;

DisplacementNet::DisplacementNet(const DisplacementNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.base_width < 1 || cfg.res_blocks < 0) throw std::invalid_argument("bad displacement net config");
  Rng rng(seed);
  const int w = cfg.base_width;
  auto make = [&](const std::string& name, int cin, int cout, int k, int stride) {
    return Block{nn::Conv2d(params_, name + ".conv", cin, cout, k, stride, k / 2, rng, false),
                 nn::InstanceNorm2d(params_, name + ".norm", cout)};
  };
  head_ = make("c7s1", 1 + kMinutiaeChannels, w, 7, 1);
  down1_ = make("d1", w, 2 * w, 3, 2);
  down2_ = make("d2", 2 * w, 4 * w, 3, 2);
  for (int r = 0; r < cfg.res_blocks; ++r) {
    const std::string p = "res" + std::to_string(r);
    res_.push_back(make(p + ".a", 4 * w, 4 * w, 3, 1));
    res_.push_back(make(p + ".b", 4 * w, 4 * w, 3, 1));
  }
  up1_ = make("u1", 4 * w, 2 * w, 5, 1);
  up2_ = make("u2", 2 * w, w, 5, 1);
  out_ = nn::Conv2d(params_, "out", w, 1, 7, 1, 3, rng, true, cfg.output_gain);
}

Var DisplacementNet::block(const Block& b, const Var& x) const { return nn::relu(b.norm(b.conv(x))); }

Var DisplacementNet::forward(const Var& x, const Var& h_target) const {
  if (x.value().rank() != 4 || x.dim(1) != 1 || x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw ShapeError("displacement net: bad probe " + nn::to_string(x.shape()));
  }
  if (h_target.value().rank() != 4 || h_target.dim(0) != x.dim(0) || h_target.dim(1) != kMinutiaeChannels ||
      h_target.dim(2) != x.dim(2) || h_target.dim(3) != x.dim(3)) {
    throw ShapeError("displacement net: target map " + nn::to_string(h_target.shape()) + " does not fit probe " +
                     nn::to_string(x.shape()));
  }
  Var h = block(head_, nn::concat1(x, h_target));
  h = block(down2_, block(down1_, h));
  for (std::size_t r = 0; r < res_.size(); r += 2) h = nn::add(h, res_[r + 1].norm(res_[r + 1].conv(block(res_[r], h))));
  h = block(up1_, nn::upsample_nearest2x(h));
  h = block(up2_, nn::upsample_nearest2x(h));
  return nn::clamp(nn::add(x, nn::tanh(out_(h))), -1.0, 1.0);
}

DistortionNet::DistortionNet(const DistortionNetConfig& cfg, const DistortionConfig& dist, int height, int width,
                             std::uint64_t seed)
    : cfg_(cfg), dist_(dist), height_(height), width_(width) {
  if (dist.c < 3) throw std::invalid_argument("distortion needs at least 3 control points");
  if (dist.sigma < 0) throw std::invalid_argument("distortion sigma must be >= 0");
  if (cfg.base_width < 1 || height < 8 || width < 8) throw std::invalid_argument("bad distortion net config");
  base_ = grid_control_points(dist.c, height, width, dist.margin);
  if (control_points_degenerate(base_)) throw std::invalid_argument("distortion control grid is degenerate");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dist.c))));
  const int rows = (dist.c + cols - 1) / cols;
  reach_i_ = 0.5 * (height - 1 - 2 * dist.margin) / std::max(rows - 1, 1);
  reach_j_ = 0.5 * (width - 1 - 2 * dist.margin) / std::max(cols - 1, 1);
  reach_i_ = std::min(reach_i_, dist.margin);
  reach_j_ = std::min(reach_j_, dist.margin);

  Rng rng(seed);
  int in = 1 + kMinutiaeChannels;
  for (int l = 0; l < 3; ++l) {
    const int out = cfg.base_width << l;
    convs_.emplace_back(params_, "enc" + std::to_string(l), in, out, 3, 2, 1, rng);
    in = out;
  }
  head_ = nn::Linear(params_, "head", in, 2 * dist.c, rng);
  for (auto& v : head_.weight.mutable_value().values()) v *= 0.1;
}

Var DistortionNet::forward(const Var& x, const Var& h) const {
  if (x.value().rank() != 4 || x.dim(1) != 1 || x.dim(2) != height_ || x.dim(3) != width_) {
    throw ShapeError("distortion net: bad image " + nn::to_string(x.shape()));
  }
  if (h.value().rank() != 4 || h.dim(0) != x.dim(0) || h.dim(1) != kMinutiaeChannels || h.dim(2) != height_ ||
      h.dim(3) != width_) {
    throw ShapeError("distortion net: bad minutiae map " + nn::to_string(h.shape()));
  }
  Var f = nn::concat1(x, h);
  for (const auto& conv : convs_) f = nn::leaky_relu(conv(f), 0.2);
  const int n = x.dim(0), c = dist_.c;
  const Var offsets = nn::reshape(nn::tanh(head_(nn::global_avg_pool(f))), {n, c, 2});
  nn::Tensor base({n, c, 2}), reach({n, c, 2});
  for (int s = 0; s < n; ++s)
    for (int k = 0; k < c; ++k) {
      const std::size_t o = (static_cast<std::size_t>(s) * c + k) * 2;
      base[o] = base_[k][0];
      base[o + 1] = base_[k][1];
      reach[o] = reach_i_;
      reach[o + 1] = reach_j_;
    }
  return nn::add(Var(base), nn::mul(offsets, Var(reach)));
}

ControlPointSet dist_forward(const DistortionNet& g, const Var& x_disp, const Var& h,
                             const std::vector<SmoothField>& fields) {
  ControlPointSet out;
  out.points = g.forward(x_disp, h);
  out.displacements = evaluate_fields(fields, out.points, g.distortion().sigma * g.distortion().unit_px);
  return out;
}

}  // namespace advbiom::fingerprint
