#include "advbiom/data/synth_faces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "advbiom/core/image_io.hpp"

namespace advbiom::data {

namespace {

Rgb random_color(Rng& rng, const Rgb& lo, const Rgb& hi) {
  return {uniform(rng, lo[0], hi[0]), uniform(rng, lo[1], hi[1]), uniform(rng, lo[2], hi[2])};
}

Rgb scaled(const Rgb& c, double s) { return {c[0] * s, c[1] * s, c[2] * s}; }

bool in_ellipse(double x, double y, double cx, double cy, double rx, double ry, double angle = 0.0) {
  const double dx = x - cx, dy = y - cy;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
  return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
}

// Colour of the face at one point in face units.
Rgb shade(const FaceIdentity& f, double x, double y) {
  Rgb c = scaled(f.background, 0.85 + 0.15 * (1.0 - y) / 2.0);
  if (std::abs(x) < f.head_rx * 0.45 && y > f.head_y + f.head_ry * 0.6) c = scaled(f.skin, 0.8);
  if (in_ellipse(x, y, 0.0, f.hair_y, f.hair_rx, f.hair_ry)) c = f.hair;
  if (in_ellipse(x, y, 0.0, f.head_y, f.head_rx, f.head_ry)) {
    c = f.skin;
    if (f.beard && y > f.nose_y + f.nose_len * 0.5) c = scaled(f.hair, 1.1);
    for (double side : {-1.0, 1.0}) {
      const double ex = side * f.eye_dx;
      if (in_ellipse(x, y, ex, f.eye_y - f.brow_gap, f.eye_rx * 1.2, f.brow_thickness, side * f.brow_angle)) {
        c = scaled(f.hair, 0.8);
      }
      if (in_ellipse(x, y, ex, f.eye_y, f.eye_rx, f.eye_ry)) {
        c = {0.95, 0.95, 0.93};
        if (in_ellipse(x, y, ex, f.eye_y, f.eye_ry * 0.95, f.eye_ry * 0.95)) c = f.iris;
        if (in_ellipse(x, y, ex, f.eye_y, f.eye_ry * 0.4, f.eye_ry * 0.4)) c = {0.05, 0.05, 0.05};
      }
      if (f.glasses) {
        const bool outer = in_ellipse(x, y, ex, f.eye_y, f.eye_rx * 1.7, f.eye_rx * 1.4);
        const bool inner = in_ellipse(x, y, ex, f.eye_y, f.eye_rx * 1.45, f.eye_rx * 1.15);
        if (outer && !inner) c = {0.1, 0.1, 0.12};
      }
    }
    if (in_ellipse(x, y, 0.0, f.nose_y, f.nose_w, f.nose_len)) c = scaled(f.skin, 0.82);
    if (in_ellipse(x, y, 0.0, f.mouth_y, f.mouth_w, f.mouth_h)) c = f.lips;
  }
  return c;
}

}  // namespace

FaceIdentity sample_face_identity(std::uint64_t seed) {
  Rng rng(seed);
  FaceIdentity f;
  const double tone = uniform(rng, 0.25, 0.95);
  f.skin = {tone, tone * uniform(rng, 0.7, 0.85), tone * uniform(rng, 0.55, 0.75)};
  const double hair = uniform(rng, 0.04, 0.8);
  f.hair = {hair, hair * uniform(rng, 0.55, 0.85), hair * uniform(rng, 0.3, 0.6)};
  f.iris = random_color(rng, {0.05, 0.1, 0.05}, {0.5, 0.6, 0.8});
  f.lips = {uniform(rng, 0.5, 0.85), uniform(rng, 0.15, 0.4), uniform(rng, 0.2, 0.4)};
  f.background = random_color(rng, {0.1, 0.1, 0.1}, {0.9, 0.9, 0.9});
  f.head_rx = uniform(rng, 0.48, 0.66);
  f.head_ry = uniform(rng, 0.62, 0.8);
  f.head_y = uniform(rng, 0.0, 0.12);
  f.hair_rx = f.head_rx * uniform(rng, 1.0, 1.25);
  f.hair_ry = f.head_ry * uniform(rng, 0.75, 1.05);
  f.hair_y = f.head_y - uniform(rng, 0.1, 0.3);
  f.eye_dx = uniform(rng, 0.17, 0.3);
  f.eye_y = f.head_y - uniform(rng, 0.02, 0.2);
  f.eye_rx = uniform(rng, 0.07, 0.12);
  f.eye_ry = f.eye_rx * uniform(rng, 0.45, 0.75);
  f.brow_gap = uniform(rng, 0.1, 0.18);
  f.brow_angle = uniform(rng, -0.35, 0.35);
  f.brow_thickness = uniform(rng, 0.015, 0.045);
  f.nose_y = f.eye_y + uniform(rng, 0.16, 0.28);
  f.nose_len = uniform(rng, 0.06, 0.13);
  f.nose_w = uniform(rng, 0.035, 0.08);
  f.mouth_y = f.nose_y + f.nose_len + uniform(rng, 0.08, 0.17);
  f.mouth_w = uniform(rng, 0.1, 0.22);
  f.mouth_h = uniform(rng, 0.025, 0.06);
  f.glasses = uniform(rng, 0, 1) < 0.25;
  f.beard = uniform(rng, 0, 1) < 0.2;
  return f;
}

RawImage render_face(const FaceIdentity& id, const FaceSynthConfig& cfg, Rng& jitter) {
  if (cfg.size < 8) throw std::invalid_argument("face size must be at least 8");
  const int n = cfg.size;
  const double shift_x = uniform(jitter, -cfg.max_shift_px, cfg.max_shift_px);
  const double shift_y = uniform(jitter, -cfg.max_shift_px, cfg.max_shift_px);
  const double gain = 1.0 + uniform(jitter, -cfg.max_brightness, cfg.max_brightness);
  constexpr int ss = 3;  // supersampling per axis
  ImageShape shape{n, n, 3};
  std::vector<std::uint8_t> px(shape.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Rgb acc{0, 0, 0};
      for (int si = 0; si < ss; ++si)
        for (int sj = 0; sj < ss; ++sj) {
          const double py = i + (si + 0.5) / ss - shift_y;
          const double pxl = j + (sj + 0.5) / ss - shift_x;
          const Rgb c = shade(id, 2.0 * pxl / n - 1.0, 2.0 * py / n - 1.0);
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      for (int k = 0; k < 3; ++k) {
        const double v = acc[k] / (ss * ss) * gain + cfg.noise_sigma * normal(jitter);
        px[(static_cast<std::size_t>(i) * n + j) * 3 + k] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  return RawImage(shape, std::move(px));
}

DatasetManifest synth_identity_faces(const std::filesystem::path& root, int n_ids, int per_id,
                                     std::uint64_t seed, const FaceSynthConfig& cfg) {
  if (n_ids < 2) throw std::invalid_argument("synth_identity_faces: need at least 2 identities");
  if (per_id < 1) throw std::invalid_argument("synth_identity_faces: need at least 1 image per identity");
  char name[32];
  for (int k = 0; k < n_ids; ++k) {
    const FaceIdentity id = sample_face_identity(derive_seed(seed, static_cast<std::uint64_t>(k)));
    Rng jitter(derive_seed(derive_seed(seed, "face-jitter"), static_cast<std::uint64_t>(k)));
    std::snprintf(name, sizeof(name), "id_%04d", k);
    const auto dir = root / name;
    for (int s = 0; s < per_id; ++s) {
      char file[32];
      std::snprintf(file, sizeof(file), "img_%02d.png", s);
      save_png(dir / file, render_face(id, cfg, jitter));
    }
  }
  return scan_dataset(root);
}

}  // namespace advbiom::data
