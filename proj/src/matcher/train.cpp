#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "advbiom/matcher/matcher.hpp"
#include "advbiom/nn/batch.hpp"
#include "advbiom/nn/optim.hpp"

namespace advbiom::matcher {

using nn::Tensor;
using nn::Var;

namespace {

// Copy of `x` translated by (di, dj) with edge replication.
void shifted_into(const FloatImage& x, int di, int dj, double* out_chw) {
  const int h = x.height(), w = x.width(), c = x.channels();
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const int si = std::clamp(i - di, 0, h - 1), sj = std::clamp(j - dj, 0, w - 1);
        out_chw[(static_cast<std::size_t>(ch) * h + i) * w + j] = x.at(si, sj, ch);
      }
}

}  // namespace

std::unique_ptr<ToyEmbedder> train_toy_matcher(const LabelledImages& data, const ToyEmbedderConfig& arch,
                                               const MatcherTrainConfig& cfg, const TrainLog& log,
                                               int log_every) {
  if (data.images.size() != data.labels.size()) throw std::invalid_argument("train_toy_matcher: labels/images mismatch");
  std::map<int, int> dense;  // label -> contiguous class index
  std::map<int, int> counts;
  for (int l : data.labels) ++counts[l];
  for (const auto& [label, n] : counts) {
    if (n < 4) throw std::invalid_argument("train_toy_matcher: every identity needs at least 4 images");
    dense.emplace(label, static_cast<int>(dense.size()));
  }
  if (dense.size() < 2) throw std::invalid_argument("train_toy_matcher: need at least 2 identities");
  if (cfg.steps < 0 || cfg.batch_size < 1) throw std::invalid_argument("train_toy_matcher: bad steps/batch_size");

  auto model = std::make_unique<ToyEmbedder>(arch, derive_seed(cfg.seed, "matcher-init"));
  for (const auto& im : data.images) check_input(*model, im);

  const int k = static_cast<int>(dense.size());
  Rng head_rng(derive_seed(cfg.seed, "matcher-head"));
  Tensor w0({k, arch.embedding_dim});
  for (auto& v : w0.values()) v = normal(head_rng);
  nn::ParameterSet head;
  Var& head_w = head.create("head.weight", std::move(w0));

  nn::AdamConfig acfg{cfg.learning_rate, 0.9, 0.999, 1e-8};
  nn::Adam opt(model->params(), acfg);
  nn::Adam head_opt(head, acfg);

  Rng rng(derive_seed(cfg.seed, "matcher-batches"));
  const ImageShape s = model->input_shape();
  const std::size_t per = s.size();
  const int n_images = static_cast<int>(data.images.size());
  for (int step = 1; step <= cfg.steps; ++step) {
    Tensor batch({cfg.batch_size, s.channels, s.height, s.width});
    std::vector<int> labels(cfg.batch_size);
    Tensor margin({cfg.batch_size, k});
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int idx = uniform_int(rng, 0, n_images - 1);
      const int di = uniform_int(rng, -cfg.augment_shift, cfg.augment_shift);
      const int dj = uniform_int(rng, -cfg.augment_shift, cfg.augment_shift);
      shifted_into(data.images[idx], di, dj, batch.data() + b * per);
      labels[b] = dense.at(data.labels[idx]);
      margin[static_cast<std::size_t>(b) * k + labels[b]] = -cfg.scale * cfg.margin;
    }

    model->params().zero_grad();
    head.zero_grad();
    const Var emb = model->embed_batch(Var(std::move(batch)));
    const Var cos = nn::linear(emb, nn::l2_normalize_rows(head_w), Var());
    const Var logits = nn::add(nn::mul_scalar(cos, cfg.scale), Var(std::move(margin)));
    const Var loss = nn::cross_entropy(logits, labels);
    if (!std::isfinite(loss.item())) throw std::runtime_error("train_toy_matcher: loss diverged at step " + std::to_string(step));
    loss.backward();
    opt.step();
    head_opt.step();

    if (log && (step % log_every == 0 || step == cfg.steps)) {
      int correct = 0;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const double* row = cos.value().data() + static_cast<std::size_t>(b) * k;
        correct += static_cast<int>(std::max_element(row, row + k) - row) == labels[b];
      }
      log(step, loss.item(), static_cast<double>(correct) / cfg.batch_size);
    }
  }
  return model;
}

}  // namespace advbiom::matcher
