#include "advbiom/fingerprint/extractor.hpp"

#include <stdexcept>

#include "advbiom/nn/batch.hpp"
#include "advbiom/nn/checkpoint.hpp"
#include "advbiom/nn/ops.hpp"
#include "advbiom/nn/optim.hpp"

namespace advbiom::fingerprint {

using nn::Tensor;
using nn::Var;

MinutiaeExtractor::MinutiaeExtractor(const ExtractorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.base_width < 1 || cfg.half_res_convs < 0) throw std::invalid_argument("bad extractor config");
  Rng rng(seed);
  const int w = cfg.base_width;
  in1_ = nn::Conv2d(params_, "in1", 1, w, 3, 1, 1, rng);
  in2_ = nn::Conv2d(params_, "in2", w, w, 3, 1, 1, rng);
  down_ = nn::Conv2d(params_, "down", w, 2 * w, 3, 2, 1, rng);
  for (int k = 0; k < cfg.half_res_convs; ++k)
    mid_.emplace_back(params_, "mid" + std::to_string(k), 2 * w, 2 * w, 3, 1, 1, rng);
  up_ = nn::Conv2d(params_, "up", 3 * w, w, 3, 1, 1, rng);
  head_ = nn::Conv2d(params_, "head", w, kMinutiaeChannels, 1, 1, 0, rng);
  // start almost silent: sigmoid(-4) ~ 0.018
  for (auto& v : head_.bias.mutable_value().values()) v = -4.0;
}

Var MinutiaeExtractor::forward(const Var& x) const {
  if (x.value().rank() != 4 || x.dim(1) != 1 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw ShapeError("minutiae extractor: bad input " + nn::to_string(x.shape()));
  }
  const Var full = nn::leaky_relu(in2_(nn::leaky_relu(in1_(x), 0.2)), 0.2);
  Var half = nn::leaky_relu(down_(full), 0.2);
  for (const auto& conv : mid_) half = nn::leaky_relu(conv(half), 0.2);
  const Var merged = nn::concat1(full, nn::upsample_nearest2x(half));
  return nn::sigmoid(head_(nn::leaky_relu(up_(merged), 0.2)));
}

MinutiaeMap extract_minutiae_map(const MinutiaeExtractor& m, const NormalizedImage& x) {
  if (x.channels() != 1) {
    throw std::invalid_argument("extract_minutiae_map: expected a single-channel fingerprint, got " +
                                std::to_string(x.channels()) + " channels");
  }
  nn::NoGradGuard guard;
  const Var h = m.forward(Var(nn::stack_images(std::vector<const FloatImage*>{&x})));
  return MinutiaeMap(nn::unstack_image(h.value(), 0));
}

std::unique_ptr<MinutiaeExtractor> train_minutiae_extractor(const ExtractorTrainConfig& cfg, const ExtractorLog& log,
                                                            int log_every) {
  if (cfg.steps < 0 || cfg.batch_size < 1) throw std::invalid_argument("extractor training: bad steps/batch_size");
  auto net = std::make_unique<MinutiaeExtractor>(cfg.arch, derive_seed(cfg.seed, "extractor-init"));
  nn::Adam opt(net->params(), {cfg.learning_rate, 0.9, 0.999, 1e-8});
  Rng rng(derive_seed(cfg.seed, "extractor-data"));
  const int n = cfg.synth.size;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<NormalizedImage> images;
    std::vector<MinutiaeMap> targets;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (uniform(rng, 0.0, 1.0) < cfg.blank_fraction) {
        images.push_back(blank_fingerprint(cfg.synth, uniform(rng, -0.8, 0.8), rng));
        targets.emplace_back(n, n);
        continue;
      }
      FingerprintSample s = synth_fingerprint(rng(), cfg.synth);
      targets.push_back(render_minutiae_map(s.minutiae, n, n, cfg.render_sigma));
      images.push_back(std::move(s.image));
    }
    const Tensor t = nn::stack_images(targets);
    Tensor weight = t;
    for (auto& v : weight.values()) v = 1.0 + cfg.positive_weight * v;

    net->params().zero_grad();
    const Var pred = net->forward(Var(nn::stack_images(images)));
    const Var loss = nn::mean(nn::mul(nn::square(nn::sub(pred, Var(t))), Var(weight)));
    loss.backward();
    opt.step();
    if (log && (step % log_every == 0 || step == cfg.steps)) log(step, loss.item());
  }
  return net;
}

void save_extractor(const std::filesystem::path& path, const MinutiaeExtractor& m) {
  nn::Checkpoint ck;
  ck.meta["architecture"] = "minutiae_extractor";
  ck.meta["config"] = {{"base_width", m.config().base_width}, {"half_res_convs", m.config().half_res_convs}};
  nn::export_parameters(m.params(), "", ck.arrays);
  nn::save_checkpoint(path, ck);
}

std::unique_ptr<MinutiaeExtractor> load_extractor(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.meta.value("architecture", "") != "minutiae_extractor") {
    throw std::runtime_error(path.string() + " is not a minutiae extractor checkpoint");
  }
  ExtractorConfig cfg;
  cfg.base_width = ck.meta.at("config").at("base_width");
  cfg.half_res_convs = ck.meta.at("config").at("half_res_convs");
  auto m = std::make_unique<MinutiaeExtractor>(cfg, 0);
  nn::import_parameters(m->params(), "", ck.arrays);
  return m;
}

}  // namespace advbiom::fingerprint
