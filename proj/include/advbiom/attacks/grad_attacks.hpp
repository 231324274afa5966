#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "advbiom/core/image.hpp"
#include "advbiom/matcher/matcher.hpp"

namespace advbiom::attacks {

enum class AttackMode { obfuscation, impersonation };

const char* to_string(AttackMode mode);
AttackMode parse_attack_mode(const std::string& s);

/// What the attack ascends. Obfuscation pushes F(x_adv) away from F(x) by ascending
/// 1 - cos(F(x), F(x_adv)); impersonation pulls it towards F(target) by ascending
/// cos(F(target), F(x_adv)) - 1.
struct AttackGoal {
  AttackMode mode = AttackMode::obfuscation;
  /// Required for impersonation, ignored otherwise.
  const NormalizedImage* target = nullptr;
};

struct FgsmConfig {
  double epsilon = 0.06;
  /// At x_adv = x the obfuscation loss sits at its minimum and has zero gradient, so
  /// the first gradient is taken at x plus seeded uniform noise of this radius.
  double probe_radius = 1e-3;
  std::uint64_t seed = 0;
};

struct PgdConfig {
  double epsilon = 0.06;
  double step_size = 0.01;
  int max_iters = 20;
  /// Stop early once the score crosses this value (below it for obfuscation, at or
  /// above it for impersonation).
  std::optional<double> success_threshold;
  /// Extra runs started from a uniform random point in the epsilon ball; 0 = plain PGD.
  int random_restarts = 0;
  double probe_radius = 1e-3;
  std::uint64_t seed = 0;
};

struct AttackResult {
  NormalizedImage x_adv;
  /// Matcher score between x_adv and the reference (x or the target) before/after.
  double score_before = 0.0;
  double score_after = 0.0;
  double loss = 0.0;
  int iterations = 0;
  /// FGSM: the gradient vanished everywhere and x was returned unchanged.
  bool zero_gradient = false;
  /// PGD with a success_threshold: whether it was reached.
  bool reached_threshold = false;
  double linf = 0.0;
  double l2 = 0.0;
};

/// Sees every PGD iterate (after projection), 1-based.
using IterateCallback = std::function<void(int iter, const NormalizedImage& x_adv)>;

AttackResult fgsm_attack(const matcher::Matcher& m, const NormalizedImage& x, const FgsmConfig& cfg,
                         const AttackGoal& goal = {});

/// Iterated signed-gradient ascent projected onto the L-inf ball of radius epsilon
/// around x and onto [-1, 1]. Returns the iterate with the highest loss.
AttackResult pgd_attack(const matcher::Matcher& m, const NormalizedImage& x, const PgdConfig& cfg,
                        const AttackGoal& goal = {}, const IterateCallback& on_iterate = {});

}  // namespace advbiom::attacks
