#include "advbiom/advgen/networks.hpp"

#include <stdexcept>

namespace advbiom::advgen {

using nn::Var;

GeneratorNet::GeneratorNet(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.channels < 1 || cfg.base_width < 1 || cfg.res_blocks < 0) {
    throw std::invalid_argument("generator sizes must be positive");
  }
  Rng rng(seed);
  const int w = cfg.base_width;
  const int in = cfg.mode == AttackMode::impersonation ? 2 * cfg.channels : cfg.channels;
  auto make = [&](const std::string& name, int cin, int cout, int k, int stride) {
    return Block{nn::Conv2d(params_, name + ".conv", cin, cout, k, stride, k / 2, rng, false),
                 nn::InstanceNorm2d(params_, name + ".norm", cout)};
  };
  head_ = make("c7s1", in, w, 7, 1);
  down1_ = make("d1", w, 2 * w, 3, 2);
  down2_ = make("d2", 2 * w, 4 * w, 3, 2);
  for (int r = 0; r < cfg.res_blocks; ++r) {
    const std::string p = "res" + std::to_string(r);
    res_.push_back(make(p + ".a", 4 * w, 4 * w, 3, 1));
    res_.push_back(make(p + ".b", 4 * w, 4 * w, 3, 1));
  }
  up1_ = make("u1", 4 * w, 2 * w, 5, 1);
  up2_ = make("u2", 2 * w, w, 5, 1);
  out_ = nn::Conv2d(params_, "out", w, cfg.channels, 7, 1, 3, rng, true, cfg.output_gain);
}

Var GeneratorNet::block(const Block& b, const Var& x) const { return nn::relu(b.norm(b.conv(x))); }

Var GeneratorNet::forward(const Var& x, const Var& target) const {
  const bool imp = cfg_.mode == AttackMode::impersonation;
  if (imp != target.defined()) {
    throw std::invalid_argument(imp ? "impersonation generator needs a target batch"
                                    : "obfuscation generator takes no target");
  }
  if (x.value().rank() != 4 || x.dim(1) != cfg_.channels || x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw ShapeError("generator: bad input " + nn::to_string(x.shape()));
  }
  if (imp && target.shape() != x.shape()) {
    throw ShapeError("generator: target " + nn::to_string(target.shape()) + " vs probe " + nn::to_string(x.shape()));
  }
  Var h = block(head_, imp ? nn::concat1(x, target) : x);
  h = block(down2_, block(down1_, h));
  for (std::size_t r = 0; r < res_.size(); r += 2) {
    const Var inner = block(res_[r], h);
    h = nn::add(h, res_[r + 1].norm(res_[r + 1].conv(inner)));
  }
  h = block(up1_, nn::upsample_nearest2x(h));
  h = block(up2_, nn::upsample_nearest2x(h));
  return nn::tanh(out_(h));
}

DiscriminatorNet::DiscriminatorNet(const DiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.layers < 1 || cfg.strided_layers < 0 || cfg.strided_layers > cfg.layers || cfg.base_width < 1) {
    throw std::invalid_argument("bad discriminator config");
  }
  Rng rng(seed);
  int in = cfg.channels;
  for (int l = 0; l < cfg.layers; ++l) {
    const int out = cfg.base_width << l;
    const std::string name = "d" + std::to_string(l);
    const bool strided = l < cfg.strided_layers;
    convs_.emplace_back(params_, name + ".conv", in, out, strided ? 4 : 3, strided ? 2 : 1, 1, rng, l == 0);
    if (l > 0) norms_.emplace_back(params_, name + ".norm", out);
    in = out;
  }
  head_ = nn::Conv2d(params_, "head", in, 1, 1, 1, 0, rng);
}

Var DiscriminatorNet::forward(const Var& x, bool training) const {
  if (x.value().rank() != 4 || x.dim(1) != cfg_.channels) {
    throw ShapeError("discriminator: bad input " + nn::to_string(x.shape()));
  }
  Var h = x;
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    h = convs_[l](h);
    if (l > 0) h = norms_[l - 1](h, training);
    h = nn::leaky_relu(h, 0.2);
  }
  return head_(h);
}

}  // namespace advbiom::advgen
