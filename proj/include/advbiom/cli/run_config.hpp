#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "advbiom/advgen/trainer.hpp"
#include "advbiom/attacks/grad_attacks.hpp"
#include "advbiom/fingerprint/trainer.hpp"

namespace advbiom::cli {

/// Bad or inconsistent configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Modality { face, fingerprint };
enum class AttackKind { fgsm, pgd, advgen };

const char* to_string(Modality m);
const char* to_string(AttackKind a);

struct PathsConfig {
  /// Dataset root (images under <root>/<identity>/).
  std::filesystem::path data;
  /// Training output: checkpoints and train_log.csv.
  std::filesystem::path work;
  std::filesystem::path matcher;
  /// AdvGen generator or fingerprint attack checkpoint.
  std::filesystem::path generator;
  std::filesystem::path extractor;
};

struct DataConfig {
  int identities = 60;
  int per_identity = 10;
  int image_size = 32;
  /// Share of identities held out for evaluation.
  double test_fraction = 0.3;
};

struct MatcherConfig {
  /// "toy" for the built-in embedder, "external" for a subprocess scorer.
  std::string kind = "toy";
  /// External scorer command line, split on spaces; only scoring, no gradients.
  std::string command;
  matcher::ToyEmbedderConfig arch;
  matcher::MatcherTrainConfig train;
};

struct EvalConfig {
  double far = 0.01;
  int folds = 10;
  /// 0 = every probe in the attack directory.
  int max_probes = 0;
};

/// Everything one invocation needs. Subsystem seeds are not configurable on their own:
/// they are split off the root seed by name, so one number fixes every random stream.
struct RunConfig {
  std::uint64_t seed = 0;
  Modality modality = Modality::face;
  attacks::AttackMode mode = attacks::AttackMode::obfuscation;
  AttackKind attack = AttackKind::advgen;

  PathsConfig paths;
  DataConfig data;
  MatcherConfig matcher;
  advgen::AdvGenTrainConfig advgen;
  attacks::FgsmConfig fgsm;
  attacks::PgdConfig pgd;
  fingerprint::FingerprintSynthConfig fp_synth;
  fingerprint::ExtractorTrainConfig extractor;
  fingerprint::FpTrainConfig fp;
  EvalConfig eval;
};

/// Parses TOML text. Unknown keys, wrong value types and out-of-range values raise
/// ConfigError naming the key. `seed` is mandatory. Relative paths resolve against
/// base_dir.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical TOML holding every field, so parse(to_toml(c)) == c.
std::string to_toml(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

/// ADVBIOM_CACHE, or ./.advbiom_cache when unset.
std::filesystem::path cache_dir();

}  // namespace advbiom::cli
