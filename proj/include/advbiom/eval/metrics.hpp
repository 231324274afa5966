#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "advbiom/core/image.hpp"

namespace advbiom::eval {

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> imposter;
  std::string matcher;
  std::string dataset;
};

struct Threshold {
  double tau = 0.0;
  double far_level = 0.0;
  /// Fraction of imposters scoring >= tau.
  double achieved_far = 0.0;
};

/// Smallest tau among the imposter scores (plus one sentinel just above the maximum)
/// whose false-accept fraction, counted with >=, does not exceed `far`.
Threshold threshold_at_far(std::span<const double> imposter, double far);

/// Fraction of adversarial genuine comparisons scoring strictly below tau.
double success_rate_obfuscation(std::span<const double> adv_genuine, double tau);
/// Fraction of adversarial-vs-target comparisons scoring at or above tau.
double success_rate_impersonation(std::span<const double> adv_target, double tau);

/// Fraction of genuine scores >= threshold_at_far(imposter, far).
double tar_at_far(const ScoreSet& scores, double far);

/// Gaussian-windowed SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03) for images in [-1, 1],
/// averaged over valid window positions and then channels.
double ssim(const FloatImage& a, const FloatImage& b);

struct PopulationStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

PopulationStats population_stats(std::span<const double> scores);

struct DistributionSummary {
  PopulationStats genuine_before, genuine_after, imposter_before, imposter_after;
  double genuine_delta = 0.0;   // after.mean - before.mean
  double imposter_delta = 0.0;
};

DistributionSummary distribution_summary(const ScoreSet& before, const ScoreSet& after);

struct KFoldResult {
  std::vector<std::string> targets;
  std::vector<double> fold_rates;
  double mean = 0.0;
  double stddev = 0.0;
};

/// The k targets kfold_impersonation uses: a seeded shuffle of the candidates, cut to k.
std::vector<std::string> draw_fold_targets(const std::vector<std::string>& candidate_targets, int k,
                                           std::uint64_t seed);

/// Impersonation protocol: each of k folds draws one target identity (seeded, without
/// replacement) and `fold_scores(fold, target)` returns the adversarial-vs-target
/// scores of that fold's probes.
KFoldResult kfold_impersonation(
    const std::vector<std::string>& candidate_targets, int k, double tau, std::uint64_t seed,
    const std::function<std::vector<double>(int, const std::string&)>& fold_scores);

enum class FingerprintType { left_loop, right_loop, whorl, arch, tented_arch };

inline constexpr FingerprintType kFingerprintTypes[] = {
    FingerprintType::left_loop, FingerprintType::right_loop, FingerprintType::whorl,
    FingerprintType::arch, FingerprintType::tented_arch};

std::string to_string(FingerprintType t);
/// Throws std::invalid_argument on unknown names.
FingerprintType parse_fingerprint_type(const std::string& name);

/// One verification decision: was the pair genuine, and did the matcher accept it.
struct Decision {
  bool genuine = false;
  bool accepted = false;
};

struct TypeRates {
  std::size_t genuine = 0, imposter = 0;
  double tar = 0.0, frr = 0.0, far = 0.0, trr = 0.0;
};

/// Per-type accept/reject rates. Types without genuine (imposter) decisions report
/// TAR/FRR (FAR/TRR) as 0.
std::map<FingerprintType, TypeRates> type_confusion(std::span<const Decision> decisions,
                                                    std::span<const std::string> type_labels);

}  // namespace advbiom::eval
