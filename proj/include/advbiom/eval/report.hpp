#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advbiom/eval/metrics.hpp"

namespace advbiom::eval {

inline constexpr int kReportSchemaVersion = 1;

/// One adversarial comparison. `score_before` compares the clean probe with the
/// reference, `score_after` the adversarial probe.
struct PairRecord {
  std::string probe;
  std::string reference;
  bool genuine = true;
  double score_before = 0.0;
  double score_after = 0.0;
  double ssim = 0.0;
  double linf = 0.0;
  double l2 = 0.0;
  std::string fingerprint_type;  // empty for faces
};

struct AttackReport {
  std::string modality;  // face | fingerprint
  std::string mode;      // obfuscation | impersonation
  std::string attack;    // fgsm | pgd | advgen | fingerprint | none
  std::string matcher;
  std::uint64_t seed = 0;

  Threshold threshold;
  double success_rate = 0.0;
  std::size_t comparisons = 0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;

  std::optional<double> tar_before;
  std::optional<double> tar_after;
  std::optional<DistributionSummary> distribution;
  std::optional<KFoldResult> folds;
  std::map<FingerprintType, TypeRates> type_table;

  std::vector<PairRecord> pairs;
};

nlohmann::json to_json(const AttackReport& r);
AttackReport report_from_json(const nlohmann::json& j);

/// Pretty-printed, key-sorted JSON so that equal reports are byte-identical files.
void write_report(const std::filesystem::path& path, const AttackReport& r);
AttackReport read_report(const std::filesystem::path& path);

/// probe,reference,genuine,score_before,score_after,ssim,linf,l2
void write_scores_csv(const std::filesystem::path& path, const AttackReport& r);

}  // namespace advbiom::eval
