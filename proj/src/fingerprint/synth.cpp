#include "advbiom/fingerprint/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "advbiom/core/image_io.hpp"

namespace advbiom::fingerprint {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a, 2 * kPi);
  return a < 0 ? a + 2 * kPi : a;
}

struct CoreFrame {
  double u, v;
};

CoreFrame to_core(const FingerprintIdentity& f, double x, double y) {
  const double dx = x - f.core_x, dy = y - f.core_y;
  const double c = std::cos(f.angle), s = std::sin(f.angle);
  return {c * dx + s * dy, -s * dx + c * dy};
}

// Distance-like flow function; ridges are its level sets, one period apart.
double flow(const FingerprintIdentity& f, double x, double y) {
  const auto [u, v] = to_core(f, x, y);
  switch (f.type) {
    case FingerprintType::arch:
      return v + f.shape * std::exp(-u * u / (2 * f.width * f.width));
    case FingerprintType::tented_arch:
      return v + f.shape * std::exp(-std::abs(u) / f.width);
    case FingerprintType::whorl:
      return std::sqrt(u * u + f.shape * f.shape * v * v);
    case FingerprintType::left_loop:
      return u >= 0 ? std::hypot(u, v) : std::abs(v);
    case FingerprintType::right_loop:
      return u <= 0 ? std::hypot(u, v) : std::abs(v);
  }
  return v;
}

double spiral_phase(const std::vector<Spiral>& spirals, double x, double y, std::size_t skip) {
  double p = 0.0;
  for (std::size_t k = 0; k < spirals.size(); ++k)
    if (k != skip) p += spirals[k].polarity * std::atan2(y - spirals[k].y, x - spirals[k].x);
  return p;
}

double phase(const FingerprintIdentity& f, double x, double y, std::size_t skip = SIZE_MAX) {
  return 2 * kPi * flow(f, x, y) / f.period + spiral_phase(f.spirals, x, y, skip);
}

// Regions where the flow field itself is singular or kinked; no minutia goes there.
bool near_singularity(const FingerprintIdentity& f, double x, double y, double clearance) {
  const auto [u, v] = to_core(f, x, y);
  switch (f.type) {
    case FingerprintType::whorl:
      return std::hypot(u, v) < clearance;
    case FingerprintType::left_loop:
      return std::hypot(u, v) < clearance || (u < 0 && std::abs(v) < 0.4 * clearance);
    case FingerprintType::right_loop:
      return std::hypot(u, v) < clearance || (u > 0 && std::abs(v) < 0.4 * clearance);
    case FingerprintType::tented_arch:
      return std::abs(u) < 0.4 * clearance;
    case FingerprintType::arch:
      return false;
  }
  return false;
}

// Direction of the extra ridge of spiral k: the local wave vector (phase gradient without
// the spiral itself) turned a quarter towards the side that gains a ridge.
double spiral_theta(const FingerprintIdentity& f, std::size_t k) {
  const Spiral& s = f.spirals[k];
  constexpr double h = 1e-4;
  const double gx = (phase(f, s.x + h, s.y, k) - phase(f, s.x - h, s.y, k)) / (2 * h);
  const double gy = (phase(f, s.x, s.y + h, k) - phase(f, s.x, s.y - h, k)) / (2 * h);
  return wrap_angle(std::atan2(gy, gx) - s.polarity * kPi / 2);
}

double centre(const FingerprintSynthConfig& cfg) { return (cfg.size - 1) / 2.0; }

}  // namespace

FingerprintIdentity sample_fingerprint_identity(std::uint64_t seed, const FingerprintSynthConfig& cfg,
                                                std::optional<FingerprintType> type) {
  if (cfg.size < 16) throw std::invalid_argument("fingerprint size must be at least 16");
  Rng rng(seed);
  FingerprintIdentity f;
  const int drawn = uniform_int(rng, 0, 4);
  f.type = type.value_or(eval::kFingerprintTypes[drawn]);
  const double n = cfg.size;
  f.core_x = uniform(rng, -0.15, 0.15) * n;
  f.core_y = uniform(rng, -0.15, 0.15) * n;
  f.angle = uniform(rng, -0.3, 0.3);
  f.period = cfg.ridge_period * uniform(rng, 0.92, 1.08);
  switch (f.type) {
    case FingerprintType::arch:
      f.width = uniform(rng, 0.2, 0.3) * n;
      f.shape = f.width * uniform(rng, 0.5, 1.0);
      break;
    case FingerprintType::tented_arch:
      f.width = uniform(rng, 0.25, 0.35) * n;
      f.shape = f.width * uniform(rng, 0.45, 0.7);
      break;
    case FingerprintType::whorl:
      f.shape = uniform(rng, 0.8, 1.25);
      break;
    default:
      break;
  }

  const double c = centre(cfg), lo = cfg.border - c, hi = n - 1 - cfg.border - c;
  for (int attempt = 0; attempt < 4000 && static_cast<int>(f.spirals.size()) < cfg.minutiae; ++attempt) {
    Spiral s{uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, 0.0, 1.0) < 0.5 ? 1 : -1};
    if (near_singularity(f, s.x, s.y, cfg.core_clearance)) continue;
    bool isolated = true;
    for (const Spiral& o : f.spirals) isolated &= std::hypot(o.x - s.x, o.y - s.y) >= cfg.min_separation;
    if (isolated) f.spirals.push_back(s);
  }
  return f;
}

FingerprintSample render_fingerprint(const FingerprintIdentity& id, const FingerprintSynthConfig& cfg, Rng* jitter) {
  const int n = cfg.size;
  double tx = 0, ty = 0, rot = 0, contrast = 1.0, level = 0.0;
  if (jitter) {
    tx = uniform(*jitter, -cfg.max_shift_px, cfg.max_shift_px);
    ty = uniform(*jitter, -cfg.max_shift_px, cfg.max_shift_px);
    rot = uniform(*jitter, -cfg.max_rotation, cfg.max_rotation);
    contrast = 1.0 + uniform(*jitter, -cfg.max_contrast, cfg.max_contrast);
    level = uniform(*jitter, -cfg.max_contrast, cfg.max_contrast);
  }
  const double cr = std::cos(rot), sr = std::sin(rot), c = centre(cfg);

  FingerprintSample out;
  out.image = NormalizedImage({n, n, 1});
  constexpr int ss = 2;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int si = 0; si < ss; ++si)
        for (int sj = 0; sj < ss; ++sj) {
          // output pixel -> master coordinates: undo the shift, then the rotation
          const double x = j - c + (sj + 0.5) / ss - 0.5 - tx;
          const double y = i - c + (si + 0.5) / ss - 0.5 - ty;
          acc += std::cos(phase(id, cr * x + sr * y, -sr * x + cr * y));
        }
      double v = level + 0.8 * contrast * acc / (ss * ss);
      if (jitter) v += cfg.noise_sigma * normal(*jitter);
      out.image.at(i, j, 0) = std::clamp(v, -1.0, 1.0);
    }
  }
  for (std::size_t k = 0; k < id.spirals.size(); ++k) {
    const Spiral& s = id.spirals[k];
    const double x = cr * s.x - sr * s.y + tx, y = sr * s.x + cr * s.y + ty;
    const MinutiaPoint m{y + c, x + c, wrap_angle(spiral_theta(id, k) + rot)};
    if (m.i >= 0 && m.i <= n - 1 && m.j >= 0 && m.j <= n - 1) out.minutiae.push_back(m);
  }
  return out;
}

FingerprintSample synth_fingerprint(std::uint64_t seed, const FingerprintSynthConfig& cfg,
                                    std::optional<FingerprintType> type) {
  const FingerprintIdentity id = sample_fingerprint_identity(derive_seed(seed, "fp-identity"), cfg, type);
  Rng jitter(derive_seed(seed, "fp-jitter"));
  return render_fingerprint(id, cfg, &jitter);
}

NormalizedImage blank_fingerprint(const FingerprintSynthConfig& cfg, double level, Rng& rng) {
  NormalizedImage im({cfg.size, cfg.size, 1});
  for (auto& v : im.values()) v = std::clamp(level + cfg.noise_sigma * normal(rng), -1.0, 1.0);
  return im;
}

void save_minutiae(const fs::path& path, const std::vector<MinutiaPoint>& points) {
  json arr = json::array();
  for (const auto& p : points) arr.push_back({{"i", p.i}, {"j", p.j}, {"theta", p.theta}});
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << arr.dump(1) << '\n';
}

std::vector<MinutiaPoint> load_minutiae(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  const json arr = json::parse(is);
  std::vector<MinutiaPoint> out;
  for (const auto& e : arr) out.push_back({e.at("i"), e.at("j"), e.at("theta")});
  return out;
}

data::DatasetManifest synth_fingerprint_dataset(const fs::path& root, int n_ids, int per_id, std::uint64_t seed,
                                                const FingerprintSynthConfig& cfg) {
  if (n_ids < 2) throw std::invalid_argument("synth_fingerprint_dataset: need at least 2 identities");
  if (per_id < 1) throw std::invalid_argument("synth_fingerprint_dataset: need at least 1 impression per identity");
  json types = json::object();
  for (int k = 0; k < n_ids; ++k) {
    const FingerprintIdentity id = sample_fingerprint_identity(derive_seed(seed, static_cast<std::uint64_t>(k)), cfg);
    Rng jitter(derive_seed(derive_seed(seed, "fp-jitter"), static_cast<std::uint64_t>(k)));
    char name[32];
    std::snprintf(name, sizeof(name), "fp_%04d", k);
    const fs::path dir = root / name;
    fs::create_directories(dir);
    types[name] = eval::to_string(id.type);
    for (int s = 0; s < per_id; ++s) {
      const FingerprintSample sample = render_fingerprint(id, cfg, &jitter);
      char stem[32];
      std::snprintf(stem, sizeof(stem), "imp_%02d", s);
      save_normalized_png(dir / (std::string(stem) + ".png"), sample.image);
      save_minutiae(dir / (std::string(stem) + ".json"), sample.minutiae);
    }
  }
  std::ofstream(root / "types.json") << types.dump(1) << '\n';
  return data::scan_dataset(root);
}

std::map<std::string, FingerprintType> load_fingerprint_types(const fs::path& root) {
  std::ifstream is(root / "types.json");
  if (!is) throw std::runtime_error("no types.json under " + root.string());
  const json doc = json::parse(is);
  std::map<std::string, FingerprintType> out;
  for (const auto& [k, v] : doc.items()) out[k] = eval::parse_fingerprint_type(v.get<std::string>());
  return out;
}

}  // namespace advbiom::fingerprint
