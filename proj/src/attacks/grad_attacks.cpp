#include "advbiom/attacks/grad_attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "advbiom/nn/batch.hpp"

namespace advbiom::attacks {

using nn::Tensor;
using nn::Var;

const char* to_string(AttackMode mode) {
  return mode == AttackMode::obfuscation ? "obfuscation" : "impersonation";
}

AttackMode parse_attack_mode(const std::string& s) {
  if (s == "obfuscation") return AttackMode::obfuscation;
  if (s == "impersonation") return AttackMode::impersonation;
  throw std::invalid_argument("unknown attack mode '" + s + "'");
}

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Loss and score against a fixed reference embedding.
class Objective {
 public:
  Objective(const matcher::Matcher& m, const NormalizedImage& x, const AttackGoal& goal) : m_(m), mode_(goal.mode) {
    matcher::check_input(m, x);
    const NormalizedImage* ref = &x;
    if (mode_ == AttackMode::impersonation) {
      if (!goal.target) throw std::invalid_argument("impersonation attack needs a target image");
      matcher::check_input(m, *goal.target);
      ref = goal.target;
    }
    nn::NoGradGuard guard;
    ref_ = m.embed_batch(Var(nn::stack_images(std::vector<const FloatImage*>{ref}))).value();
  }

  double score(const NormalizedImage& img) const {
    nn::NoGradGuard guard;
    return cos(Var(nn::stack_images(std::vector<const FloatImage*>{&img}))).item();
  }

  double loss_from_score(double s) const { return mode_ == AttackMode::obfuscation ? 1.0 - s : s - 1.0; }

  bool succeeded(double s, double threshold) const {
    return mode_ == AttackMode::obfuscation ? s < threshold : s >= threshold;
  }

  FloatImage gradient(const NormalizedImage& at) const {
    return matcher::loss_gradient(
        [this](const Var& v) {
          const Var c = cos(v);
          return mode_ == AttackMode::obfuscation ? nn::add_scalar(nn::mul_scalar(c, -1.0), 1.0)
                                                  : nn::add_scalar(c, -1.0);
        },
        at);
  }

 private:
  Var cos(const Var& batch) const { return nn::rowwise_dot(Var(ref_), m_.embed_batch(batch)); }

  const matcher::Matcher& m_;
  AttackMode mode_;
  Tensor ref_;
};

NormalizedImage jittered(const NormalizedImage& x, double radius, Rng& rng) {
  NormalizedImage out = x;
  for (auto& v : out.values()) v = std::clamp(v + uniform(rng, -radius, radius), -1.0, 1.0);
  return out;
}

// Gradient for the step leaving `at`. At the clean image the obfuscation loss has a
// stationary minimum, so the probe point replaces it there.
FloatImage step_gradient(const Objective& obj, const NormalizedImage& at, const NormalizedImage& x,
                         const AttackGoal& goal, double probe_radius, Rng& rng) {
  const bool at_clean = std::equal(at.values().begin(), at.values().end(), x.values().begin());
  if (goal.mode == AttackMode::obfuscation && at_clean && probe_radius > 0) {
    return obj.gradient(jittered(x, probe_radius, rng));
  }
  return obj.gradient(at);
}

void finish(AttackResult& r, const NormalizedImage& x) {
  r.linf = linf_distance(r.x_adv, x);
  r.l2 = l2_distance(r.x_adv, x);
}

}  // namespace

AttackResult fgsm_attack(const matcher::Matcher& m, const NormalizedImage& x, const FgsmConfig& cfg,
                         const AttackGoal& goal) {
  if (!(cfg.epsilon > 0)) throw std::invalid_argument("fgsm: epsilon must be positive");
  const Objective obj(m, x, goal);
  Rng rng(derive_seed(cfg.seed, "fgsm-probe"));
  AttackResult r;
  r.score_before = obj.score(x);
  const FloatImage g = step_gradient(obj, x, x, goal, cfg.probe_radius, rng);
  r.zero_gradient = std::all_of(g.values().begin(), g.values().end(), [](double v) { return v == 0.0; });
  r.x_adv = x;
  auto out = r.x_adv.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i] + cfg.epsilon * sign(g.values()[i]), -1.0, 1.0);
  r.iterations = 1;
  r.score_after = obj.score(r.x_adv);
  r.loss = obj.loss_from_score(r.score_after);
  finish(r, x);
  return r;
}

AttackResult pgd_attack(const matcher::Matcher& m, const NormalizedImage& x, const PgdConfig& cfg,
                        const AttackGoal& goal, const IterateCallback& on_iterate) {
  if (!(cfg.epsilon > 0) || !(cfg.step_size > 0) || cfg.step_size > cfg.epsilon) {
    throw std::invalid_argument("pgd: need 0 < step_size <= epsilon");
  }
  if (cfg.max_iters < 1) throw std::invalid_argument("pgd: max_iters must be at least 1");
  if (cfg.random_restarts < 0) throw std::invalid_argument("pgd: random_restarts must be non-negative");
  const Objective obj(m, x, goal);
  Rng rng(derive_seed(cfg.seed, "fgsm-probe"));
  Rng restart_rng(derive_seed(cfg.seed, "pgd-restart"));

  AttackResult best;
  best.score_before = obj.score(x);
  best.loss = -std::numeric_limits<double>::infinity();
  const auto xv = x.values();
  int total_iters = 0;
  for (int run = 0; run <= cfg.random_restarts; ++run) {
    NormalizedImage cur = run == 0 ? x : jittered(x, cfg.epsilon, restart_rng);
    bool done = false;
    for (int it = 1; it <= cfg.max_iters && !done; ++it) {
      const FloatImage g = step_gradient(obj, cur, x, goal, cfg.probe_radius, rng);
      auto cv = cur.values();
      for (std::size_t i = 0; i < cv.size(); ++i) {
        const double stepped = cv[i] + cfg.step_size * sign(g.values()[i]);
        cv[i] = std::clamp(std::clamp(stepped, xv[i] - cfg.epsilon, xv[i] + cfg.epsilon), -1.0, 1.0);
      }
      ++total_iters;
      if (on_iterate) on_iterate(it, cur);
      const double s = obj.score(cur);
      const double loss = obj.loss_from_score(s);
      if (loss > best.loss) {
        best.loss = loss;
        best.score_after = s;
        best.x_adv = cur;
      }
      if (cfg.success_threshold && obj.succeeded(s, *cfg.success_threshold)) {
        best.reached_threshold = true;
        done = true;
      }
    }
    if (best.reached_threshold) break;
  }
  best.iterations = total_iters;
  finish(best, x);
  return best;
}

}  // namespace advbiom::attacks
