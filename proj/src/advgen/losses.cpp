#include "advbiom/advgen/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace advbiom::advgen {

using nn::Var;

Var compose(const Var& x, const Var& mask) {
  if (x.shape() != mask.shape()) {
    throw ShapeError("compose: " + nn::to_string(x.shape()) + " vs " + nn::to_string(mask.shape()));
  }
  const Var unit = nn::add_scalar(nn::mul_scalar(x, 0.5), 0.5);
  return nn::add_scalar(nn::mul_scalar(nn::clamp(nn::add(mask, unit), 0.0, 1.0), 2.0), -1.0);
}

Var perturbation_loss(const Var& masks, double eps) {
  if (masks.value().rank() == 0 || masks.dim(0) == 0) throw std::invalid_argument("perturbation_loss: empty batch");
  return nn::mean(nn::clamp_min(nn::l2_norm_per_sample(masks), eps));
}

namespace {

Var mean_cosine(const matcher::Matcher& m, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError("identity loss: misaligned batches");
  return nn::mean(nn::rowwise_dot(m.embed_batch(a), m.embed_batch(b)));
}

}  // namespace

Var identity_loss_obfuscation(const matcher::Matcher& m, const Var& x, const Var& x_adv) {
  return mean_cosine(m, x, x_adv);
}

Var identity_loss_impersonation(const matcher::Matcher& m, const Var& y, const Var& x_adv) {
  return nn::add_scalar(nn::mul_scalar(mean_cosine(m, y, x_adv), -1.0), 1.0);
}

GanLosses gan_losses_from_logits(const Var& real_logits, const Var& fake_logits) {
  const Var log_d_real = nn::mean(nn::log_sigmoid(real_logits));
  // log(1 - sigmoid(l)) = log_sigmoid(-l)
  const Var log_one_minus_d_fake = nn::mean(nn::log_sigmoid(nn::mul_scalar(fake_logits, -1.0)));
  GanLosses out;
  const Var l_gan = nn::add(log_d_real, log_one_minus_d_fake);
  out.l_gan = l_gan.item();
  out.d_loss = nn::mul_scalar(l_gan, -1.0);
  out.g_loss = log_one_minus_d_fake;
  return out;
}

GanLosses gan_losses(const DiscriminatorNet& d, const Var& x_real, const Var& x_adv, bool training) {
  if (x_real.shape() != x_adv.shape()) throw ShapeError("gan_losses: misaligned batches");
  return gan_losses_from_logits(d.forward(x_real, training), d.forward(x_adv, training));
}

GeneratorLossTerms generator_loss(const GeneratorNet& g, const DiscriminatorNet& d, const matcher::Matcher& m,
                                  const Var& x, const Var& target, const LossWeights& w, bool d_training) {
  const bool imp = g.config().mode == AttackMode::impersonation;
  return generator_loss_for_mask(d, m, g.config().mode, x, target, g.forward(x, imp ? target : Var()), w, d_training);
}

GeneratorLossTerms generator_loss_for_mask(const DiscriminatorNet& d, const matcher::Matcher& m, AttackMode mode,
                                           const Var& x, const Var& target, const Var& mask, const LossWeights& w,
                                           bool d_training) {
  GeneratorLossTerms t;
  const bool imp = mode == AttackMode::impersonation;
  t.mask = mask;
  t.x_adv = compose(x, t.mask);
  t.gan = nn::mean(nn::log_sigmoid(nn::mul_scalar(d.forward(t.x_adv, d_training), -1.0)));
  t.identity = imp ? identity_loss_impersonation(m, target, t.x_adv) : identity_loss_obfuscation(m, x, t.x_adv);
  t.perturbation = perturbation_loss(t.mask, w.eps);
  t.total = nn::add(t.gan, nn::add(nn::mul_scalar(t.identity, w.lambda_i), nn::mul_scalar(t.perturbation, w.lambda_p)));
  return t;
}

std::vector<std::vector<bool>> saliency_mask_threshold(const AdversarialMask& mask, double t) {
  std::vector<std::vector<bool>> out(mask.height(), std::vector<bool>(mask.width(), false));
  for (int i = 0; i < mask.height(); ++i)
    for (int j = 0; j < mask.width(); ++j)
      for (int c = 0; c < mask.channels(); ++c)
        if (std::abs(mask.at(i, j, c)) > t) out[i][j] = true;
  return out;
}

}  // namespace advbiom::advgen
