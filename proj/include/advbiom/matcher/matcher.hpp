#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "advbiom/core/image.hpp"
#include "advbiom/nn/checkpoint.hpp"
#include "advbiom/nn/layers.hpp"

namespace advbiom::matcher {

/// A differentiable face (or fingerprint) embedder F. Scores are cosine similarities
/// of unit-norm embeddings, higher meaning same identity.
class Matcher {
 public:
  virtual ~Matcher() = default;

  virtual std::string name() const = 0;
  virtual ImageShape input_shape() const = 0;
  virtual int embedding_dim() const = 0;

  /// [N, C, H, W] -> [N, D] unit rows, inference mode. Records a graph when grad is on.
  virtual nn::Var embed_batch(const nn::Var& x) const = 0;
};

/// Throws ShapeError when x does not match the matcher's input shape.
void check_input(const Matcher& m, const FloatImage& x);

Embedding embed(const Matcher& m, const NormalizedImage& x);
std::vector<Embedding> embed_all(const Matcher& m, const std::vector<NormalizedImage>& images,
                                 int batch_size = 64);
double match_score(const Matcher& m, const NormalizedImage& a, const NormalizedImage& b);

/// 1 - mean_i cos(F(x_i), F(x_adv_i)).
nn::Var feature_match_loss(const Matcher& m, const nn::Var& x, const nn::Var& x_adv);

using LossFn = std::function<nn::Var(const nn::Var& x)>;

/// d loss / d x for a single image, as an H x W x C array. Throws std::runtime_error if
/// the loss or any gradient entry is not finite.
FloatImage loss_gradient(const LossFn& loss, const FloatImage& x);

struct ToyEmbedderConfig {
  int image_size = 32;
  int channels = 3;
  /// Block widths are base_width * {1, 2, 4, 8}.
  int base_width = 8;
  int embedding_dim = 64;
  std::string name = "toy_embedder";
};

/// Four stride-2 conv blocks (3x3 conv + LeakyReLU 0.2, then a 3x3 stride-2 conv +
/// LeakyReLU 0.2), global average pooling, a linear projection to D and L2
/// normalization.
class ToyEmbedder : public Matcher {
 public:
  ToyEmbedder(const ToyEmbedderConfig& cfg, std::uint64_t seed);
  ToyEmbedder(const ToyEmbedder&) = delete;
  ToyEmbedder& operator=(const ToyEmbedder&) = delete;

  std::string name() const override { return cfg_.name; }
  ImageShape input_shape() const override { return {cfg_.image_size, cfg_.image_size, cfg_.channels}; }
  int embedding_dim() const override { return cfg_.embedding_dim; }
  nn::Var embed_batch(const nn::Var& x) const override;

  const ToyEmbedderConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  ToyEmbedderConfig cfg_;
  nn::ParameterSet params_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear proj_;
};

struct MatcherTrainConfig {
  int steps = 3000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  /// Cosine-softmax head: logits = scale * (cos - margin * [target]).
  double scale = 16.0;
  double margin = 0.2;
  /// Random integer translation applied per sample, in pixels.
  int augment_shift = 2;
  std::uint64_t seed = 0;
};

struct LabelledImages {
  std::vector<NormalizedImage> images;
  std::vector<int> labels;
};

/// Called every `log_every` steps with (step, loss, batch accuracy).
using TrainLog = std::function<void(int step, double loss, double accuracy)>;

/// Trains a ToyEmbedder with a cosine-softmax identity head that is dropped afterwards.
/// Requires at least two identities with at least four images each.
std::unique_ptr<ToyEmbedder> train_toy_matcher(const LabelledImages& data, const ToyEmbedderConfig& arch,
                                               const MatcherTrainConfig& cfg, const TrainLog& log = {},
                                               int log_every = 100);

void save_toy_embedder(const std::filesystem::path& path, const ToyEmbedder& m);
std::unique_ptr<ToyEmbedder> load_toy_embedder(const std::filesystem::path& path);

/// Raised when an external matcher misbehaves (crash, bad output, score outside [-1, 1]).
class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scores image pairs. Implementations need not be differentiable.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual std::string name() const = 0;
  virtual double score(const NormalizedImage& a, const NormalizedImage& b) = 0;
};

class EmbeddingScorer : public PairScorer {
 public:
  explicit EmbeddingScorer(const Matcher& m) : m_(&m) {}
  std::string name() const override { return m_->name(); }
  double score(const NormalizedImage& a, const NormalizedImage& b) override { return match_score(*m_, a, b); }

 private:
  const Matcher* m_;
};

/// Subprocess adapter: the executable gets two PNG paths on stdin, one per line, and
/// prints a single similarity score on stdout.
class ExternalMatcher : public PairScorer {
 public:
  ExternalMatcher(std::filesystem::path executable, std::vector<std::string> args,
                  std::filesystem::path scratch_dir);
  std::string name() const override { return executable_.filename().string(); }
  double score(const NormalizedImage& a, const NormalizedImage& b) override;
  /// Scores two files already on disk.
  double score_files(const std::filesystem::path& a, const std::filesystem::path& b);

 private:
  std::filesystem::path executable_;
  std::vector<std::string> args_;
  std::filesystem::path scratch_;
};

}  // namespace advbiom::matcher
