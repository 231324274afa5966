#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace advbiom::data {

enum class Split { train, test };

struct ManifestEntry {
  std::string identity;
  /// Relative to the manifest root, '/'-separated.
  std::string path;
  Split split = Split::train;
};

/// Identity-labelled images found under root/<identity>/<image>.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  /// Identities with fewer than two images; kept for training, never used in pairs.
  std::vector<std::string> single_image_identities;
  /// FNV-1a over relative paths and file bytes.
  std::uint64_t content_hash = 0;

  std::filesystem::path absolute(const ManifestEntry& e) const { return root / e.path; }
  std::vector<std::string> identities() const;
  std::vector<ManifestEntry> entries_in(Split split) const;
};

/// Deterministic (sorted) scan of PNG/JPEG files. Throws when the root has no images.
DatasetManifest scan_dataset(const std::filesystem::path& root);

std::uint64_t hash_dataset_contents(const std::filesystem::path& root,
                                    const std::vector<ManifestEntry>& entries);

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Loads the cached manifest at `cache` when its content hash still matches the files
/// on disk, otherwise rescans and rewrites the cache.
DatasetManifest cached_manifest(const std::filesystem::path& root, const std::filesystem::path& cache);

/// Moves a seeded `test_fraction` of identities to the test split, whole identities only.
void assign_identity_splits(DatasetManifest& m, double test_fraction, std::uint64_t seed);

/// True when no identity has entries in both splits.
bool splits_disjoint(const DatasetManifest& m);

struct PairSample {
  std::string image_a;
  std::string image_b;
  std::string identity_a;
  std::string identity_b;
  bool genuine = false;
};

/// Seeded pairs without duplicate unordered pairs, drawn from identities with at least
/// two images in `entries`. Throws when the counts exceed what the data can supply.
std::vector<PairSample> sample_pairs(const std::vector<ManifestEntry>& entries, std::size_t n_genuine,
                                     std::size_t n_imposter, std::uint64_t seed);

/// Every genuine and every imposter pair (self-pairs excluded).
std::vector<PairSample> all_pairs(const std::vector<ManifestEntry>& entries);

}  // namespace advbiom::data
