#pragma once

#include <array>
#include <filesystem>

#include "advbiom/core/image.hpp"
#include "advbiom/core/random.hpp"
#include "advbiom/data/dataset.hpp"

namespace advbiom::data {

struct FaceSynthConfig {
  int size = 160;
  /// Per-sample jitter bounds.
  double max_shift_px = 4.0;
  double max_brightness = 0.10;
  double noise_sigma = 0.02;
};

using Rgb = std::array<double, 3>;

/// Geometry and colours shared by every image of one synthetic identity. Coordinates
/// are in face units: the image spans [-1, 1] on both axes, y pointing down.
struct FaceIdentity {
  Rgb skin, hair, iris, lips, background;
  double head_rx, head_ry, head_y;
  double hair_rx, hair_ry, hair_y;
  double eye_dx, eye_y, eye_rx, eye_ry;
  double brow_gap, brow_angle, brow_thickness;
  double nose_y, nose_len, nose_w;
  double mouth_y, mouth_w, mouth_h;
  bool glasses = false;
  bool beard = false;
};

FaceIdentity sample_face_identity(std::uint64_t seed);

/// Renders one jittered view (shift, brightness, Gaussian noise drawn from `jitter`).
RawImage render_face(const FaceIdentity& id, const FaceSynthConfig& cfg, Rng& jitter);

/// Writes root/id_XXXX/img_YY.png for n_ids identities and returns the scanned
/// manifest. Output is a pure function of (n_ids, per_id, seed, cfg).
DatasetManifest synth_identity_faces(const std::filesystem::path& root, int n_ids, int per_id,
                                     std::uint64_t seed, const FaceSynthConfig& cfg);

}  // namespace advbiom::data
