#pragma once

#include <vector>

#include "advbiom/advgen/networks.hpp"
#include "advbiom/matcher/matcher.hpp"

namespace advbiom::advgen {

/// x_adv = 2 * clamp(mask + (x + 1) / 2, 0, 1) - 1, differentiable in both inputs.
nn::Var compose(const nn::Var& x, const nn::Var& mask);

/// mean_i max(eps, ||mask_i||_2).
nn::Var perturbation_loss(const nn::Var& masks, double eps);

/// mean_i cos(F(x_i), F(x_adv_i)).
nn::Var identity_loss_obfuscation(const matcher::Matcher& m, const nn::Var& x, const nn::Var& x_adv);
/// mean_i 1 - cos(F(y_i), F(x_adv_i)).
nn::Var identity_loss_impersonation(const matcher::Matcher& m, const nn::Var& y, const nn::Var& x_adv);

struct GanLosses {
  /// -L_GAN, what the discriminator minimizes.
  nn::Var d_loss;
  /// mean log(1 - D(x_adv)), what the generator minimizes.
  nn::Var g_loss;
  /// L_GAN = mean log D(x) + mean log(1 - D(x_adv)), patch means.
  double l_gan = 0.0;
};

/// Both terms from patch logits via log-sigmoid, so saturated logits stay finite.
GanLosses gan_losses_from_logits(const nn::Var& real_logits, const nn::Var& fake_logits);
GanLosses gan_losses(const DiscriminatorNet& d, const nn::Var& x_real, const nn::Var& x_adv, bool training);

struct LossWeights {
  double lambda_i = 10.0;
  double lambda_p = 1.0;
  /// Hinge floor of the perturbation loss, in the units of the image being attacked.
  double eps = 3.0;
};

struct GeneratorLossTerms {
  nn::Var total;
  nn::Var gan;
  nn::Var identity;
  nn::Var perturbation;
  nn::Var x_adv;
  nn::Var mask;
};

/// L_G = L_G_gan + lambda_i * L_identity + lambda_p * L_perturbation. `target` is
/// required in impersonation mode.
GeneratorLossTerms generator_loss(const GeneratorNet& g, const DiscriminatorNet& d, const matcher::Matcher& m,
                                  const nn::Var& x, const nn::Var& target, const LossWeights& w,
                                  bool d_training);

/// Same terms for a mask already produced by the generator.
GeneratorLossTerms generator_loss_for_mask(const DiscriminatorNet& d, const matcher::Matcher& m, AttackMode mode,
                                           const nn::Var& x, const nn::Var& target, const nn::Var& mask,
                                           const LossWeights& w, bool d_training);

/// |mask| > t at each pixel, any channel.
std::vector<std::vector<bool>> saliency_mask_threshold(const AdversarialMask& mask, double t = 0.40);

}  // namespace advbiom::advgen
