#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "advbiom/advgen/networks.hpp"
#include "advbiom/fingerprint/extractor.hpp"
#include "advbiom/fingerprint/networks.hpp"

namespace advbiom::fingerprint {

struct FpLossWeights {
  double lambda_mmap_sim = 0.05;
  double lambda_mmap_dis = 500000.0;
  double lambda_pixel = 1000.0;
};

struct FpTrainConfig {
  FpLossWeights weights;
  DisplacementConfig displacement;
  DistortionConfig distortion;
  DisplacementNetConfig disp_net;
  DistortionNetConfig dist_net;
  advgen::DiscriminatorConfig discriminator{1, 32, 5, 5};
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  int batch_size = 8;
  int steps = 16000;
  /// Detection threshold on the probe map and Gaussian width of the target splats.
  double m_t = 0.2;
  double render_sigma = 2.0;
  /// 0 disables periodic checkpoints; a final one is always written when out_dir is set.
  int checkpoint_every = 1000;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

struct FpLossRecord {
  int step = 0;
  double total = 0.0;
  double gan = 0.0;
  double mmap_sim = 0.0;
  double mmap_dis = 0.0;
  double pixel = 0.0;
  double d_loss = 0.0;
};

struct FpLossTerms {
  nn::Var total, gan, mmap_sim, mmap_dis, pixel;
};

/// L = L_gan + l_sim * sim(H_target, H_pred) + l_dis * dis(H_pred, H_probe)
///     + l_pixel * pixel(x, x_disp, x_adv).
FpLossTerms fp_generator_loss(const nn::Var& gan_term, const nn::Var& h_target, const nn::Var& h_pred,
                              const nn::Var& h_probe, const nn::Var& x, const nn::Var& x_disp, const nn::Var& x_adv,
                              const FpLossWeights& w);

struct FpModel {
  std::unique_ptr<DisplacementNet> g_disp;
  std::unique_ptr<DistortionNet> g_dist;
  std::unique_ptr<advgen::DiscriminatorNet> d;
  std::vector<FpLossRecord> trace;
  int step = 0;
};

using FpStepCallback = std::function<void(const FpLossRecord&)>;

/// Joint Adam updates of G_disp and G_dist against one patch discriminator, with a
/// frozen minutiae extractor. Per step: probe map, detected minutiae, seeded target
/// map, x_disp, G_dist control points on (x_disp, extract(x_disp)), sampled smooth
/// fields, TPS warp to x_adv; a discriminator step on (x, x_adv), then the generator step.
/// Writes train_log.csv and checkpoints under out_dir; resume restores everything.
/// Throws advgen::TrainingDiverged on a non-finite loss.
FpModel train_fp(const std::vector<NormalizedImage>& images, const MinutiaeExtractor& extractor,
                 const FpTrainConfig& cfg, const std::optional<std::filesystem::path>& resume_from = std::nullopt,
                 const FpStepCallback& on_step = {});

std::filesystem::path fp_checkpoint_path(const std::filesystem::path& out_dir, int step);

/// Both generators; the discriminator is only kept in training checkpoints.
void save_fp_attack(const std::filesystem::path& path, const FpModel& model, const FpTrainConfig& cfg);
struct FpAttack {
  std::unique_ptr<DisplacementNet> g_disp;
  std::unique_ptr<DistortionNet> g_dist;
  DisplacementConfig displacement;
  double m_t = 0.2;
  double render_sigma = 2.0;
};
FpAttack load_fp_attack(const std::filesystem::path& path);

struct FpAttackResult {
  NormalizedImage x_disp;
  NormalizedImage x_adv;
  std::vector<MinutiaPoint> probe_minutiae;
  std::vector<MinutiaPoint> target_minutiae;
  std::vector<std::array<double, 2>> control_points;
  std::vector<std::array<double, 2>> displacements;
  double seconds = 0.0;
};

/// One probe through the full pipeline; the target displacement directions and the
/// distortion field are drawn from `seed`.
FpAttackResult attack_fingerprint(const FpAttack& attack, const MinutiaeExtractor& extractor,
                                  const NormalizedImage& x, std::uint64_t seed);

}  // namespace advbiom::fingerprint
