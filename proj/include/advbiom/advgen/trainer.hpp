#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "advbiom/advgen/losses.hpp"
#include "advbiom/matcher/matcher.hpp"

namespace advbiom::advgen {

struct AdvGenTrainConfig {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  LossWeights weights;
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  int batch_size = 32;
  int steps = 2000;
  /// 0 disables periodic checkpoints; a final one is always written when out_dir is set.
  int checkpoint_every = 500;
  std::uint64_t seed = 0;
  /// Receives checkpoints and train_log.csv. Empty = keep everything in memory.
  std::filesystem::path out_dir;
};

/// Hinge floor for an image of h x w pixels when `eps` is stated for reference x
/// reference images: the L2 norm of a mask with fixed per-pixel RMS grows with
/// sqrt(area).
double area_scaled_eps(double eps, int height, int width, int reference = 160);

struct LossRecord {
  int step = 0;
  double g_total = 0.0;
  double d_loss = 0.0;
  double identity = 0.0;
  double perturbation = 0.0;
  double gan = 0.0;
};

struct FaceTrainingSet {
  std::vector<NormalizedImage> images;
  /// Identity label per image; impersonation targets come from other identities.
  std::vector<int> labels;
};

struct AdvGenModel {
  std::unique_ptr<GeneratorNet> generator;
  std::unique_ptr<DiscriminatorNet> discriminator;
  std::vector<LossRecord> trace;
  int step = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int step, std::filesystem::path last_checkpoint)
      : std::runtime_error(what), step(step), last_checkpoint(std::move(last_checkpoint)) {}
  int step;
  /// Empty when no checkpoint had been written yet.
  std::filesystem::path last_checkpoint;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Alternating Adam updates: the discriminator on (x, detached x_adv), then the
/// generator on L_G. When `resume_from` names a checkpoint written by this function,
/// training continues from its step with restored weights, optimizer moments and batch
/// stream, so the loss trace matches an uninterrupted run.
AdvGenModel train_advgen(const FaceTrainingSet& data, const matcher::Matcher& m, const AdvGenTrainConfig& cfg,
                         const std::optional<std::filesystem::path>& resume_from = std::nullopt,
                         const StepCallback& on_step = {});

/// Name of the checkpoint written at `step` inside out_dir.
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int step);

void save_generator(const std::filesystem::path& path, const GeneratorNet& g);
/// Accepts generator-only files and full training checkpoints.
std::unique_ptr<GeneratorNet> load_generator(const std::filesystem::path& path);

struct Synthesis {
  NormalizedImage x_adv;
  AdversarialMask mask;
  double seconds = 0.0;
};

Synthesis synthesize(const GeneratorNet& g, const NormalizedImage& x, const NormalizedImage* target = nullptr);

}  // namespace advbiom::advgen
