#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advbiom/cli/run_config.hpp"

namespace advbiom::cli {

/// Process exit codes of the advbiom tool.
enum ExitCode : int {
  kExitOk = 0,
  /// Runtime failure: unreadable inputs, every attack failed, I/O errors.
  kExitFailure = 1,
  /// Invalid command line or configuration, missing dataset or checkpoint.
  kExitConfig = 2,
  /// Training produced a non-finite loss.
  kExitDiverged = 3,
  /// The external matcher crashed or returned garbage.
  kExitMatcher = 4,
};

/// Writes the dataset under paths.data plus manifest.json with identity splits.
void cmd_synth_data(const RunConfig& cfg);

/// Trains the toy matcher on the train split and saves it to paths.matcher.
std::filesystem::path cmd_train_matcher(const RunConfig& cfg);

/// AdvGen training into paths.work; the generator is also copied to paths.generator
/// when set. Returns the generator checkpoint.
std::filesystem::path cmd_train_face(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume = {});

/// Trains the minutiae extractor first when paths.extractor does not exist yet.
std::filesystem::path cmd_train_fp(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume = {});

struct AttackSummary {
  int attacked = 0;
  int failed = 0;
};

/// Attacks every image under input_dir (sorted, at most eval.max_probes) and mirrors
/// the layout in output_dir: <stem>.png, <stem>.json with norms, timing and target,
/// and <stem>_mask.png for AdvGen. In impersonation mode the probes are dealt into
/// eval.folds folds and each fold gets one seeded target identity. Unreadable images
/// are skipped with a warning; throws when nothing could be attacked.
AttackSummary cmd_attack(const RunConfig& cfg, const std::filesystem::path& input_dir,
                         const std::filesystem::path& output_dir);

/// Scores attacked probes against the clean gallery (same relative layout as the attack
/// directory) and writes report_path plus a sibling scores CSV.
void cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& attack_dir,
                  const std::filesystem::path& gallery_dir, const std::filesystem::path& report_path);

/// Score histograms and TAR/FAR curves for each report; saliency overlays for every
/// <stem>_mask.png under attack_dir when given. Returns the files written.
std::vector<std::filesystem::path> cmd_report(const std::vector<std::filesystem::path>& reports,
                                              const std::filesystem::path& out_dir,
                                              const std::optional<std::filesystem::path>& attack_dir = {});

/// Full command line entry point; maps exceptions to ExitCode values.
int run_cli(int argc, char** argv);

}  // namespace advbiom::cli
