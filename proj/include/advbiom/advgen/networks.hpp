#pragma once

#include <vector>

#include "advbiom/attacks/grad_attacks.hpp"
#include "advbiom/nn/layers.hpp"

namespace advbiom::advgen {

using attacks::AttackMode;

/// c7s1-w, d2w, d4w, R4w x res_blocks, u2w, uw, c7s1-C with w = base_width. Convs
/// before instance norm carry no bias; upsampling is nearest 2x followed by a 5x5 conv.
struct GeneratorConfig {
  AttackMode mode = AttackMode::obfuscation;
  int channels = 3;
  int base_width = 64;
  int res_blocks = 3;
  /// He-init gain of the output conv; small values start training near G(x) = 0.
  double output_gain = 0.1;
};

class GeneratorNet {
 public:
  GeneratorNet(const GeneratorConfig& cfg, std::uint64_t seed);
  GeneratorNet(const GeneratorNet&) = delete;
  GeneratorNet& operator=(const GeneratorNet&) = delete;

  /// Mask tanh(G(x)) in [-1, 1] with x's shape. `target` must be defined exactly in
  /// impersonation mode; it is concatenated to x along channels.
  nn::Var forward(const nn::Var& x, const nn::Var& target = {}) const;

  const GeneratorConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  struct Block {
    nn::Conv2d conv;
    nn::InstanceNorm2d norm;
  };
  nn::Var block(const Block& b, const nn::Var& x) const;

  GeneratorConfig cfg_;
  nn::ParameterSet params_;
  Block head_, down1_, down2_, up1_, up2_;
  std::vector<Block> res_;  // two per residual block
  nn::Conv2d out_;
};

/// d_w, d_2w, ... (layers of 4x4 conv, batch norm from the second layer on, LeakyReLU
/// 0.2) and a 1x1 conv head giving one real/fake logit per patch. Layers past
/// `strided_layers` use 3x3 stride-1 convs so small images keep a patch grid.
struct DiscriminatorConfig {
  int channels = 3;
  int base_width = 32;
  int layers = 5;
  int strided_layers = 5;
};

class DiscriminatorNet {
 public:
  DiscriminatorNet(const DiscriminatorConfig& cfg, std::uint64_t seed);
  DiscriminatorNet(const DiscriminatorNet&) = delete;
  DiscriminatorNet& operator=(const DiscriminatorNet&) = delete;

  /// [N, C, H, W] -> [N, 1, h, w] patch logits.
  nn::Var forward(const nn::Var& x, bool training) const;

  const DiscriminatorConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  DiscriminatorConfig cfg_;
  nn::ParameterSet params_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::BatchNorm2d> norms_;  // norms_[i] follows convs_[i + 1]
  nn::Conv2d head_;
};

}  // namespace advbiom::advgen
