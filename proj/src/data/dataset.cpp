#include "advbiom/data/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "advbiom/core/random.hpp"

namespace advbiom::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::runtime_error("unknown split '" + s + "'");
}

// Entries of identities with at least two images, grouped by identity (sorted).
std::map<std::string, std::vector<const ManifestEntry*>> pairable(const std::vector<ManifestEntry>& entries) {
  std::map<std::string, std::vector<const ManifestEntry*>> by_id;
  for (const auto& e : entries) by_id[e.identity].push_back(&e);
  for (auto it = by_id.begin(); it != by_id.end();) {
    if (it->second.size() < 2) {
      it = by_id.erase(it);
    } else {
      ++it;
    }
  }
  return by_id;
}

PairSample make_pair(const ManifestEntry& a, const ManifestEntry& b) {
  return {a.path, b.path, a.identity, b.identity, a.identity == b.identity};
}

}  // namespace

std::vector<std::string> DatasetManifest::identities() const {
  std::set<std::string> ids;
  for (const auto& e : entries) ids.insert(e.identity);
  return {ids.begin(), ids.end()};
}

std::vector<ManifestEntry> DatasetManifest::entries_in(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

DatasetManifest scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> id_dirs;
  for (const auto& d : fs::directory_iterator(root))
    if (d.is_directory()) id_dirs.push_back(d.path());
  std::sort(id_dirs.begin(), id_dirs.end());

  DatasetManifest m;
  m.root = root;
  for (const auto& dir : id_dirs) {
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(dir))
      if (f.is_regular_file() && is_image(f.path())) files.push_back(f.path());
    std::sort(files.begin(), files.end());
    const std::string id = dir.filename().string();
    if (files.size() == 1) m.single_image_identities.push_back(id);
    for (const auto& f : files) {
      m.entries.push_back({id, fs::relative(f, root).generic_string(), Split::train});
    }
  }
  if (m.entries.empty()) throw std::runtime_error("no images under " + root.string());
  m.content_hash = hash_dataset_contents(root, m.entries);
  return m;
}

std::uint64_t hash_dataset_contents(const fs::path& root, const std::vector<ManifestEntry>& entries) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf;
  for (const auto& e : entries) {
    fnv(h, e.identity.data(), e.identity.size());
    fnv(h, e.path.data(), e.path.size());
    std::ifstream is(root / e.path, std::ios::binary);
    if (!is) throw std::runtime_error("missing dataset file " + (root / e.path).string());
    buf.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    fnv(h, buf.data(), buf.size());
  }
  return h;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  json j;
  j["root"] = m.root.string();
  j["content_hash"] = m.content_hash;
  j["single_image_identities"] = m.single_image_identities;
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"identity", e.identity}, {"path", e.path}, {"split", split_name(e.split)}});
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  os << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read manifest " + path.string());
  const json j = json::parse(is);
  DatasetManifest m;
  m.root = j.at("root").get<std::string>();
  m.content_hash = j.at("content_hash").get<std::uint64_t>();
  m.single_image_identities = j.at("single_image_identities").get<std::vector<std::string>>();
  for (const auto& e : j.at("entries")) {
    m.entries.push_back({e.at("identity").get<std::string>(), e.at("path").get<std::string>(),
                         parse_split(e.at("split").get<std::string>())});
  }
  for (const auto& e : m.entries) {
    if (!fs::exists(m.absolute(e))) throw std::runtime_error("manifest entry missing on disk: " + e.path);
  }
  return m;
}

DatasetManifest cached_manifest(const fs::path& root, const fs::path& cache) {
  if (fs::exists(cache)) {
    try {
      DatasetManifest m = load_manifest(cache);
      if (fs::equivalent(m.root, root) && scan_dataset(root).content_hash == m.content_hash) return m;
    } catch (const std::exception&) {
      // stale or unreadable cache; fall through to a rescan
    }
  }
  DatasetManifest m = scan_dataset(root);
  save_manifest(cache, m);
  return m;
}

void assign_identity_splits(DatasetManifest& m, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction > 1.0) throw std::invalid_argument("test_fraction outside [0, 1]");
  std::vector<std::string> ids = m.identities();
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_int(rng, 0, static_cast<int>(i) - 1)]);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ids.size())));
  std::set<std::string> test_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  for (auto& e : m.entries) e.split = test_ids.count(e.identity) ? Split::test : Split::train;
}

bool splits_disjoint(const DatasetManifest& m) {
  std::set<std::string> train, test;
  for (const auto& e : m.entries) (e.split == Split::train ? train : test).insert(e.identity);
  for (const auto& id : train)
    if (test.count(id)) return false;
  return true;
}

std::vector<PairSample> all_pairs(const std::vector<ManifestEntry>& entries) {
  const auto by_id = pairable(entries);
  std::vector<const ManifestEntry*> flat;
  for (const auto& [id, list] : by_id) flat.insert(flat.end(), list.begin(), list.end());
  std::vector<PairSample> out;
  for (std::size_t i = 0; i < flat.size(); ++i)
    for (std::size_t j = i + 1; j < flat.size(); ++j) out.push_back(make_pair(*flat[i], *flat[j]));
  return out;
}

std::vector<PairSample> sample_pairs(const std::vector<ManifestEntry>& entries, std::size_t n_genuine,
                                     std::size_t n_imposter, std::uint64_t seed) {
  const auto by_id = pairable(entries);
  std::vector<const ManifestEntry*> flat;
  std::vector<std::size_t> id_of;
  std::size_t id_index = 0;
  for (const auto& [id, list] : by_id) {
    for (const auto* e : list) {
      flat.push_back(e);
      id_of.push_back(id_index);
    }
    ++id_index;
  }

  std::vector<std::pair<std::size_t, std::size_t>> genuine;
  for (std::size_t i = 0; i < flat.size(); ++i)
    for (std::size_t j = i + 1; j < flat.size() && id_of[j] == id_of[i]; ++j) genuine.emplace_back(i, j);
  const std::size_t total = flat.size() * (flat.size() - (flat.empty() ? 0 : 1)) / 2;
  const std::size_t imposter_total = total - genuine.size();
  if (n_genuine > genuine.size() || n_imposter > imposter_total) {
    throw std::invalid_argument("sample_pairs: requested " + std::to_string(n_genuine) + " genuine / " +
                                std::to_string(n_imposter) + " imposter pairs, data supports " +
                                std::to_string(genuine.size()) + " / " + std::to_string(imposter_total));
  }

  Rng rng(seed);
  auto shuffle = [&rng](auto& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_int(rng, 0, static_cast<int>(i) - 1)]);
  };
  std::vector<PairSample> out;
  shuffle(genuine);
  for (std::size_t k = 0; k < n_genuine; ++k) out.push_back(make_pair(*flat[genuine[k].first], *flat[genuine[k].second]));

  if (n_imposter == 0) return out;
  std::vector<std::pair<std::size_t, std::size_t>> imposter;
  if (n_imposter * 2 > imposter_total) {
    for (std::size_t i = 0; i < flat.size(); ++i)
      for (std::size_t j = i + 1; j < flat.size(); ++j)
        if (id_of[i] != id_of[j]) imposter.emplace_back(i, j);
    shuffle(imposter);
    imposter.resize(n_imposter);
  } else {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    const int n = static_cast<int>(flat.size());
    while (imposter.size() < n_imposter) {
      std::size_t a = uniform_int(rng, 0, n - 1), b = uniform_int(rng, 0, n - 1);
      if (id_of[a] == id_of[b]) continue;
      if (a > b) std::swap(a, b);
      if (seen.insert({a, b}).second) imposter.emplace_back(a, b);
    }
  }
  for (const auto& [a, b] : imposter) out.push_back(make_pair(*flat[a], *flat[b]));
  return out;
}

}  // namespace advbiom::data
