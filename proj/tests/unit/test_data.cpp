#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "advbiom/core/image_io.hpp"
#include "advbiom/data/dataset.hpp"
#include "advbiom/data/synth_faces.hpp"

using namespace advbiom;
using namespace advbiom::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_gray(const fs::path& p, std::uint8_t v) {
  save_png(p, RawImage({8, 8, 1}, std::vector<std::uint8_t>(64, v)));
}

}  // namespace

TEST_CASE("scan_dataset orders entries and flags single-image identities") {
  TempDir tmp("advbiom_scan");
  for (int i = 0; i < 3; ++i) {
    write_gray(tmp.path / "bob" / ("b" + std::to_string(i) + ".png"), 10 + i);
    write_gray(tmp.path / "alice" / ("a" + std::to_string(i) + ".png"), 50 + i);
  }
  write_gray(tmp.path / "carol" / "c.png", 99);
  std::ofstream(tmp.path / "bob" / "notes.txt") << "ignored";

  auto m = scan_dataset(tmp.path);
  CHECK(m.entries.size() == 7);
  CHECK(m.entries.front().identity == "alice");
  CHECK(m.single_image_identities == std::vector<std::string>{"carol"});
  CHECK(scan_dataset(tmp.path).content_hash == m.content_hash);

  // carol never appears in pairs
  for (const auto& p : all_pairs(m.entries)) {
    CHECK(p.identity_a != "carol");
    CHECK(p.identity_b != "carol");
  }

  const auto cache = tmp.path / "cache" / "manifest.json";
  save_manifest(cache, m);
  auto loaded = load_manifest(cache);
  CHECK(loaded.content_hash == m.content_hash);
  CHECK(loaded.entries.size() == m.entries.size());

  write_gray(tmp.path / "alice" / "a0.png", 200);
  CHECK(cached_manifest(tmp.path, cache).content_hash != m.content_hash);
}

TEST_CASE("scan_dataset rejects an empty root") {
  TempDir tmp("advbiom_scan_empty");
  CHECK_THROWS(scan_dataset(tmp.path));
  CHECK_THROWS(scan_dataset(tmp.path / "missing"));
}

TEST_CASE("identity splits are disjoint and seeded") {
  DatasetManifest m;
  for (int id = 0; id < 20; ++id)
    for (int k = 0; k < 3; ++k) m.entries.push_back({"id" + std::to_string(id), std::to_string(k), Split::train});
  assign_identity_splits(m, 0.25, 5);
  CHECK(splits_disjoint(m));
  std::set<std::string> test_ids;
  for (const auto& e : m.entries_in(Split::test)) test_ids.insert(e.identity);
  CHECK(test_ids.size() == 5);
  DatasetManifest m2 = m;
  assign_identity_splits(m2, 0.25, 5);
  for (std::size_t i = 0; i < m.entries.size(); ++i) CHECK(m.entries[i].split == m2.entries[i].split);

  m.entries[0].split = Split::test;
  m.entries[1].split = Split::train;
  CHECK_FALSE(splits_disjoint(m));
}

TEST_CASE("sample_pairs is seeded, label-sound and duplicate-free") {
  std::vector<ManifestEntry> entries;
  for (int id = 0; id < 40; ++id)
    for (int k = 0; k < 6; ++k)
      entries.push_back({"id" + std::to_string(id), "id" + std::to_string(id) + "/" + std::to_string(k), Split::test});

  auto pairs = sample_pairs(entries, 500, 9500, 17);
  CHECK(pairs.size() == 10000);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : pairs) {
    const std::string id_a = p.image_a.substr(0, p.image_a.find('/'));
    const std::string id_b = p.image_b.substr(0, p.image_b.find('/'));
    CHECK(p.genuine == (id_a == id_b));
    CHECK(p.image_a != p.image_b);
    auto key = std::minmax(p.image_a, p.image_b);
    CHECK(seen.insert({key.first, key.second}).second);
  }
  auto again = sample_pairs(entries, 500, 9500, 17);
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(pairs[i].image_a == again[i].image_a);

  auto only_genuine = sample_pairs(entries, 50, 0, 3);
  for (const auto& p : only_genuine) CHECK(p.identity_a == p.identity_b);

  CHECK_THROWS(sample_pairs(entries, 601, 0, 1));
}

TEST_CASE("synthetic faces are deterministic and counted") {
  TempDir a("advbiom_faces_a"), b("advbiom_faces_b");
  FaceSynthConfig cfg;
  cfg.size = 32;
  cfg.max_shift_px = 1.0;
  auto ma = synth_identity_faces(a.path, 20, 10, 123, cfg);
  auto mb = synth_identity_faces(b.path, 20, 10, 123, cfg);
  CHECK(ma.entries.size() == 200);
  CHECK(ma.content_hash == mb.content_hash);
  auto img = load_image(a.path / "id_0003" / "img_04.png");
  CHECK(img.shape() == ImageShape{32, 32, 3});
  CHECK_THROWS(synth_identity_faces(a.path, 1, 10, 1, cfg));
}
