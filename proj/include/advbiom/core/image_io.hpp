#pragma once

#include <filesystem>

#include "advbiom/core/image.hpp"

namespace advbiom {

/// Reads PNG or JPEG. Grayscale files stay single-channel, colour files become RGB.
/// Throws std::runtime_error when the file cannot be decoded.
RawImage load_image(const std::filesystem::path& path);

/// Writes lossless PNG; grayscale stays single-channel.
void save_png(const std::filesystem::path& path, const RawImage& image);

inline NormalizedImage load_normalized(const std::filesystem::path& path) {
  return normalize_image(load_image(path));
}

inline void save_normalized_png(const std::filesystem::path& path, const FloatImage& image) {
  save_png(path, denormalize_image(image));
}

}  // namespace advbiom
