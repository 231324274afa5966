#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advbiom/core/image.hpp"
#include "advbiom/core/random.hpp"
#include "advbiom/data/dataset.hpp"
#include "advbiom/eval/metrics.hpp"

namespace advbiom::fingerprint {

using eval::FingerprintType;

/// A minutia at pixel (i, j). theta is the direction in which the extra ridge leaves the
/// point, measured from the +j axis towards +i, in [0, 2 pi).
struct MinutiaPoint {
  double i = 0.0;
  double j = 0.0;
  double theta = 0.0;
  bool operator==(const MinutiaPoint&) const = default;
};

struct FingerprintSynthConfig {
  int size = 64;
  double ridge_period = 6.0;
  int minutiae = 12;
  /// Planted minutiae keep this distance from each other, from the border and from the
  /// core of the flow field.
  double min_separation = 10.0;
  double border = 6.0;
  double core_clearance = 9.0;
  /// Per-impression jitter.
  double max_shift_px = 2.0;
  double max_rotation = 0.06;
  double max_contrast = 0.10;
  double noise_sigma = 0.03;
};

/// A spiral phase singularity; polarity +1 or -1 decides which side gains the ridge.
struct Spiral {
  double x = 0.0, y = 0.0;
  int polarity = 1;
};

/// The master print of one finger. Coordinates are pixels relative to the image centre,
/// x along columns and y along rows.
struct FingerprintIdentity {
  FingerprintType type = FingerprintType::whorl;
  double core_x = 0.0, core_y = 0.0;
  /// Rotation of the whole flow field.
  double angle = 0.0;
  double period = 6.0;
  /// Arch height or whorl ellipticity, depending on type.
  double shape = 1.0;
  double width = 10.0;
  std::vector<Spiral> spirals;
};

struct FingerprintSample {
  NormalizedImage image;
  std::vector<MinutiaPoint> minutiae;
};

/// Draws a master print; `type` defaults to a uniformly drawn class. Minutiae are placed
/// by rejection so they stay isolated, which may leave fewer than cfg.minutiae.
FingerprintIdentity sample_fingerprint_identity(std::uint64_t seed, const FingerprintSynthConfig& cfg,
                                                std::optional<FingerprintType> type = std::nullopt);

/// Renders the ridge pattern cos(2 pi phi / period + sum of spiral angles) after a random
/// rigid motion and contrast change, plus Gaussian noise. Ground truth moves with it.
/// A default Rng renders the master print with no jitter.
FingerprintSample render_fingerprint(const FingerprintIdentity& id, const FingerprintSynthConfig& cfg,
                                     Rng* jitter = nullptr);

/// Identity plus one jittered impression, both drawn from `seed`.
FingerprintSample synth_fingerprint(std::uint64_t seed, const FingerprintSynthConfig& cfg,
                                    std::optional<FingerprintType> type = std::nullopt);

/// A ridge-free image at the given grey level plus noise.
NormalizedImage blank_fingerprint(const FingerprintSynthConfig& cfg, double level, Rng& rng);

/// Writes root/fp_XXXX/imp_YY.png with a sibling imp_YY.json holding the minutiae list
/// and a root/types.json mapping identity to class. Pure function of the arguments.
data::DatasetManifest synth_fingerprint_dataset(const std::filesystem::path& root, int n_ids, int per_id,
                                                std::uint64_t seed, const FingerprintSynthConfig& cfg);

/// [{"i":..,"j":..,"theta":..}, ...]
void save_minutiae(const std::filesystem::path& path, const std::vector<MinutiaPoint>& points);
std::vector<MinutiaPoint> load_minutiae(const std::filesystem::path& path);

/// Class of each identity directory, as written by synth_fingerprint_dataset.
std::map<std::string, FingerprintType> load_fingerprint_types(const std::filesystem::path& root);

}  // namespace advbiom::fingerprint
