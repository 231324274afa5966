#include "advbiom/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "advbiom/core/random.hpp"

namespace advbiom::eval {

namespace {

void require_finite(std::span<const double> scores, const char* what) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::domain_error(std::string(what) + ": non-finite score");
  }
}

}  // namespace

Threshold threshold_at_far(std::span<const double> imposter, double far) {
  if (imposter.empty()) throw std::invalid_argument("threshold_at_far: no imposter scores");
  if (!(far > 0.0 && far < 1.0)) throw std::invalid_argument("threshold_at_far: far must be in (0, 1)");
  require_finite(imposter, "threshold_at_far");

  std::vector<double> sorted(imposter.begin(), imposter.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  // Walking candidates upwards, FAR only decreases; the first distinct value whose
  // tail count fits the budget is the answer.
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i] == sorted[i - 1]) continue;
    const double achieved = (n - static_cast<double>(i)) / n;
    if (achieved <= far) return {sorted[i], far, achieved};
  }
  const double sentinel = std::nextafter(sorted.back(), std::numeric_limits<double>::infinity());
  return {sentinel, far, 0.0};
}

double success_rate_obfuscation(std::span<const double> adv_genuine, double tau) {
  if (adv_genuine.empty()) throw std::invalid_argument("success_rate_obfuscation: no scores");
  const auto hits = std::count_if(adv_genuine.begin(), adv_genuine.end(), [tau](double s) { return s < tau; });
  return static_cast<double>(hits) / static_cast<double>(adv_genuine.size());
}

double success_rate_impersonation(std::span<const double> adv_target, double tau) {
  if (adv_target.empty()) throw std::invalid_argument("success_rate_impersonation: no scores");
  const auto hits = std::count_if(adv_target.begin(), adv_target.end(), [tau](double s) { return s >= tau; });
  return static_cast<double>(hits) / static_cast<double>(adv_target.size());
}

double tar_at_far(const ScoreSet& scores, double far) {
  if (scores.genuine.empty() || scores.imposter.empty()) {
    throw std::invalid_argument("tar_at_far: genuine and imposter scores required");
  }
  const double tau = threshold_at_far(scores.imposter, far).tau;
  return success_rate_impersonation(scores.genuine, tau);
}

double ssim(const FloatImage& a, const FloatImage& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("ssim: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  constexpr int win = 11;
  constexpr double sigma = 1.5;
  const int h = a.height(), w = a.width();
  if (h < win || w < win) throw ShapeError("ssim: images must be at least 11x11, got " + to_string(a.shape()));

  double kernel[win][win];
  double ksum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double di = i - win / 2, dj = j - win / 2;
      kernel[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      ksum += kernel[i][j];
    }
  for (auto& row : kernel)
    for (double& k : row) k /= ksum;

  constexpr double range = 2.0;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double channel_sum = 0.0;
    for (int i0 = 0; i0 + win <= h; ++i0) {
      for (int j0 = 0; j0 + win <= w; ++j0) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double k = kernel[i][j];
            const double va = a.at(i0 + i, j0 + j, c), vb = b.at(i0 + i, j0 + j, c);
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
        channel_sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                       ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      }
    }
    total += channel_sum / ((h - win + 1) * (w - win + 1));
  }
  return total / a.channels();
}

PopulationStats population_stats(std::span<const double> scores) {
  PopulationStats s;
  s.count = scores.size();
  if (scores.empty()) return s;
  for (double v : scores) s.mean += v;
  s.mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double v : scores) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(scores.size()));
  return s;
}

DistributionSummary distribution_summary(const ScoreSet& before, const ScoreSet& after) {
  if (before.genuine.empty() || after.genuine.empty() || before.imposter.empty() ||
      after.imposter.empty()) {
    throw std::invalid_argument("distribution_summary: all four populations must be nonempty");
  }
  DistributionSummary d;
  d.genuine_before = population_stats(before.genuine);
  d.genuine_after = population_stats(after.genuine);
  d.imposter_before = population_stats(before.imposter);
  d.imposter_after = population_stats(after.imposter);
  d.genuine_delta = d.genuine_after.mean - d.genuine_before.mean;
  d.imposter_delta = d.imposter_after.mean - d.imposter_before.mean;
  return d;
}

std::vector<std::string> draw_fold_targets(const std::vector<std::string>& candidate_targets, int k,
                                           std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("kfold_impersonation: k must be positive");
  if (candidate_targets.size() < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("kfold_impersonation: " + std::to_string(candidate_targets.size()) +
                                " candidate targets for " + std::to_string(k) + " folds");
  }
  std::vector<std::string> pool = candidate_targets;
  Rng rng(seed);
  for (std::size_t i = pool.size(); i > 1; --i) {
    std::swap(pool[i - 1], pool[uniform_int(rng, 0, static_cast<int>(i) - 1)]);
  }
  pool.resize(k);
  return pool;
}

KFoldResult kfold_impersonation(
    const std::vector<std::string>& candidate_targets, int k, double tau, std::uint64_t seed,
    const std::function<std::vector<double>(int, const std::string&)>& fold_scores) {
  KFoldResult r;
  r.targets = draw_fold_targets(candidate_targets, k, seed);
  for (int f = 0; f < k; ++f) {
    r.fold_rates.push_back(success_rate_impersonation(fold_scores(f, r.targets[f]), tau));
  }
  const auto stats = population_stats(r.fold_rates);
  r.mean = stats.mean;
  r.stddev = stats.stddev;
  return r;
}

std::string to_string(FingerprintType t) {
  switch (t) {
    case FingerprintType::left_loop: return "left_loop";
    case FingerprintType::right_loop: return "right_loop";
    case FingerprintType::whorl: return "whorl";
    case FingerprintType::arch: return "arch";
    case FingerprintType::tented_arch: return "tented_arch";
  }
  return "unknown";
}

FingerprintType parse_fingerprint_type(const std::string& name) {
  for (auto t : kFingerprintTypes) {
    if (to_string(t) == name) return t;
  }
  throw std::invalid_argument("unknown fingerprint type '" + name + "'");
}

std::map<FingerprintType, TypeRates> type_confusion(std::span<const Decision> decisions,
                                                    std::span<const std::string> type_labels) {
  if (decisions.size() != type_labels.size()) {
    throw std::invalid_argument("type_confusion: one label per decision required");
  }
  struct Counts {
    std::size_t ga = 0, gr = 0, ia = 0, ir = 0;
  };
  std::map<FingerprintType, Counts> counts;
  for (auto t : kFingerprintTypes) counts[t];
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    Counts& c = counts[parse_fingerprint_type(type_labels[i])];
    const Decision& d = decisions[i];
    if (d.genuine) {
      (d.accepted ? c.ga : c.gr)++;
    } else {
      (d.accepted ? c.ia : c.ir)++;
    }
  }
  std::map<FingerprintType, TypeRates> out;
  for (const auto& [t, c] : counts) {
    TypeRates r;
    r.genuine = c.ga + c.gr;
    r.imposter = c.ia + c.ir;
    if (r.genuine) {
      r.tar = static_cast<double>(c.ga) / r.genuine;
      r.frr = 1.0 - r.tar;  // exact complement, not a second division
    }
    if (r.imposter) {
      r.far = static_cast<double>(c.ia) / r.imposter;
      r.trr = 1.0 - r.far;
    }
    out.emplace(t, r);
  }
  return out;
}

}  // namespace advbiom::eval
