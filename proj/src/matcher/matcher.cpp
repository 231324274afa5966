#include "advbiom/matcher/matcher.hpp"

#include <cmath>
#include <stdexcept>

#include "advbiom/nn/batch.hpp"

namespace advbiom::matcher {

using nn::Tensor;
using nn::Var;

void check_input(const Matcher& m, const FloatImage& x) {
  if (!(x.shape() == m.input_shape())) {
    throw ShapeError(m.name() + " expects " + to_string(m.input_shape()) + ", got " + to_string(x.shape()));
  }
}

Embedding embed(const Matcher& m, const NormalizedImage& x) {
  check_input(m, x);
  nn::NoGradGuard guard;
  const Var e = m.embed_batch(Var(nn::stack_images(std::vector<const FloatImage*>{&x})));
  const auto v = e.value().values();
  return Embedding(std::vector<double>(v.begin(), v.end()));
}

std::vector<Embedding> embed_all(const Matcher& m, const std::vector<NormalizedImage>& images, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("embed_all: batch_size must be positive");
  nn::NoGradGuard guard;
  std::vector<Embedding> out;
  out.reserve(images.size());
  const int d = m.embedding_dim();
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    std::vector<const FloatImage*> chunk;
    for (std::size_t i = start; i < std::min(images.size(), start + batch_size); ++i) {
      check_input(m, images[i]);
      chunk.push_back(&images[i]);
    }
    const Var e = m.embed_batch(Var(nn::stack_images(chunk)));
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      const double* row = e.value().data() + r * d;
      out.emplace_back(std::vector<double>(row, row + d));
    }
  }
  return out;
}

double match_score(const Matcher& m, const NormalizedImage& a, const NormalizedImage& b) {
  return cosine_similarity(embed(m, a), embed(m, b));
}

Var feature_match_loss(const Matcher& m, const Var& x, const Var& x_adv) {
  if (x.value().rank() != 4 || x.dim(0) == 0) throw std::invalid_argument("feature_match_loss: empty batch");
  if (x.shape() != x_adv.shape()) {
    throw ShapeError("feature_match_loss: " + nn::to_string(x.shape()) + " vs " + nn::to_string(x_adv.shape()));
  }
  // embed_batch already returns unit rows, so the dot product is the cosine
  const Var cos = nn::rowwise_dot(m.embed_batch(x), m.embed_batch(x_adv));
  return nn::add_scalar(nn::mul_scalar(nn::mean(cos), -1.0), 1.0);
}

FloatImage loss_gradient(const LossFn& loss, const FloatImage& x) {
  const Var input(nn::stack_images(std::vector<const FloatImage*>{&x}), true);
  const Var l = loss(input);
  if (l.size() != 1) throw std::invalid_argument("loss_gradient: loss must be a scalar");
  if (!std::isfinite(l.item())) throw std::runtime_error("loss_gradient: non-finite loss");
  if (!l.requires_grad()) return FloatImage(x.shape());  // constant in x
  l.backward();
  if (!input.has_grad()) return FloatImage(x.shape());
  FloatImage g = nn::unstack_image(input.grad(), 0);
  for (double v : g.values())
    if (!std::isfinite(v)) throw std::runtime_error("loss_gradient: non-finite gradient");
  return g;
}

ToyEmbedder::ToyEmbedder(const ToyEmbedderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.image_size < 16 || cfg.image_size % 16 != 0) {
    throw std::invalid_argument("toy embedder image_size must be a positive multiple of 16");
  }
  if (cfg.channels < 1 || cfg.base_width < 1 || cfg.embedding_dim < 1) {
    throw std::invalid_argument("toy embedder sizes must be positive");
  }
  Rng rng(seed);
  int in = cfg.channels;
  for (int b = 0; b < 4; ++b) {
    const int w = cfg.base_width << b;
    const std::string p = "block" + std::to_string(b);
    convs_.emplace_back(params_, p + ".conv1", in, w, 3, 1, 1, rng);
    convs_.emplace_back(params_, p + ".conv2", w, w, 3, 2, 1, rng);
    in = w;
  }
  proj_ = nn::Linear(params_, "proj", in, cfg.embedding_dim, rng);
}

Var ToyEmbedder::embed_batch(const Var& x) const {
  if (x.value().rank() != 4 || x.dim(1) != cfg_.channels || x.dim(2) != cfg_.image_size ||
      x.dim(3) != cfg_.image_size) {
    throw ShapeError(cfg_.name + ": bad input batch " + nn::to_string(x.shape()));
  }
  Var h = x;
  for (const auto& conv : convs_) h = nn::leaky_relu(conv(h), 0.2);
  return nn::l2_normalize_rows(proj_(nn::global_avg_pool(h)));
}

namespace {

nlohmann::json arch_json(const ToyEmbedderConfig& c) {
  return {{"image_size", c.image_size}, {"channels", c.channels}, {"base_width", c.base_width},
          {"embedding_dim", c.embedding_dim}, {"name", c.name}};
}

}  // namespace

void save_toy_embedder(const std::filesystem::path& path, const ToyEmbedder& m) {
  nn::Checkpoint ck;
  ck.meta["architecture"] = "toy_embedder";
  ck.meta["config"] = arch_json(m.config());
  ck.meta["normalization"] = {{"offset", 127.5}, {"scale", 128.0}};
  nn::export_parameters(m.params(), "", ck.arrays);
  nn::save_checkpoint(path, ck);
}

std::unique_ptr<ToyEmbedder> load_toy_embedder(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  if (ck.meta.value("architecture", "") != "toy_embedder") {
    throw std::runtime_error(path.string() + " is not a toy_embedder checkpoint");
  }
  const auto& j = ck.meta.at("config");
  ToyEmbedderConfig cfg;
  cfg.image_size = j.at("image_size");
  cfg.channels = j.at("channels");
  cfg.base_width = j.at("base_width");
  cfg.embedding_dim = j.at("embedding_dim");
  cfg.name = j.at("name");
  auto m = std::make_unique<ToyEmbedder>(cfg, 0);
  nn::import_parameters(m->params(), "", ck.arrays);
  return m;
}

}  // namespace advbiom::matcher
