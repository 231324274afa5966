#pragma once

#include <filesystem>
#include <functional>
#include <memory>

#include "advbiom/fingerprint/minutiae.hpp"
#include "advbiom/nn/layers.hpp"

namespace advbiom::fingerprint {

/// Small fully convolutional heat-map network: two full-resolution convs, a strided
/// stage at half resolution, nearest upsampling with a skip connection, and a 1x1 head
/// with sigmoid output so maps are non-negative.
struct ExtractorConfig {
  int base_width = 8;
  int half_res_convs = 3;
};

class MinutiaeExtractor {
 public:
  MinutiaeExtractor(const ExtractorConfig& cfg, std::uint64_t seed);
  MinutiaeExtractor(const MinutiaeExtractor&) = delete;
  MinutiaeExtractor& operator=(const MinutiaeExtractor&) = delete;

  /// [N, 1, H, W] with even H, W -> [N, 12, H, W] in (0, 1).
  nn::Var forward(const nn::Var& x) const;

  const ExtractorConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

 private:
  ExtractorConfig cfg_;
  nn::ParameterSet params_;
  nn::Conv2d in1_, in2_, down_, up_, head_;
  std::vector<nn::Conv2d> mid_;
};

/// Throws std::invalid_argument for anything but a single-channel image.
MinutiaeMap extract_minutiae_map(const MinutiaeExtractor& m, const NormalizedImage& x);

struct ExtractorTrainConfig {
  ExtractorConfig arch;
  FingerprintSynthConfig synth;
  int steps = 1500;
  int batch_size = 8;
  double learning_rate = 2e-3;
  /// Squared error weight is 1 + positive_weight * target, so sparse peaks are not
  /// drowned by background.
  double positive_weight = 20.0;
  /// Share of ridge-free images, which teach the net to stay silent.
  double blank_fraction = 0.1;
  double render_sigma = 2.0;
  std::uint64_t seed = 0;
};

using ExtractorLog = std::function<void(int step, double loss)>;

/// Trains on freshly synthesized prints whose planted minutiae are rendered into the
/// target maps.
std::unique_ptr<MinutiaeExtractor> train_minutiae_extractor(const ExtractorTrainConfig& cfg,
                                                            const ExtractorLog& log = {}, int log_every = 100);

void save_extractor(const std::filesystem::path& path, const MinutiaeExtractor& m);
std::unique_ptr<MinutiaeExtractor> load_extractor(const std::filesystem::path& path);

}  // namespace advbiom::fingerprint
