#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace advbiom {

/// Raised when two arrays that must agree in shape do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ColorSpace { grayscale, rgb };

/// Height-major, channel-last image geometry.
struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(height) * width * channels;
  }
  bool operator==(const ImageShape&) const = default;
};

std::string to_string(const ImageShape& shape);

/// 8-bit image as read from disk. H and W are at least 8, channels 1 or 3.
class RawImage {
 public:
  RawImage() = default;
  RawImage(ImageShape shape, std::vector<std::uint8_t> pixels);

  const ImageShape& shape() const noexcept { return shape_; }
  ColorSpace color_space() const noexcept {
    return shape_.channels == 1 ? ColorSpace::grayscale : ColorSpace::rgb;
  }
  std::uint8_t at(int i, int j, int c) const {
    return pixels_[index(i, j, c)];
  }
  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

 private:
  std::size_t index(int i, int j, int c) const noexcept {
    return (static_cast<std::size_t>(i) * shape_.width + j) * shape_.channels + c;
  }

  ImageShape shape_;
  std::vector<std::uint8_t> pixels_;
};

/// Real-valued H x W x C buffer shared by the normalized image types.
class FloatImage {
 public:
  FloatImage() = default;
  explicit FloatImage(ImageShape shape, double fill = 0.0);
  FloatImage(ImageShape shape, std::vector<double> values);

  const ImageShape& shape() const noexcept { return shape_; }
  int height() const noexcept { return shape_.height; }
  int width() const noexcept { return shape_.width; }
  int channels() const noexcept { return shape_.channels; }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(int i, int j, int c) { return values_[index(i, j, c)]; }
  double at(int i, int j, int c) const { return values_[index(i, j, c)]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

 protected:
  std::size_t index(int i, int j, int c) const noexcept {
    return (static_cast<std::size_t>(i) * shape_.width + j) * shape_.channels + c;
  }

  ImageShape shape_;
  std::vector<double> values_;
};

/// Pixel values in [-1, 1]; the currency every attack consumes and produces.
class NormalizedImage : public FloatImage {
 public:
  NormalizedImage() = default;
  explicit NormalizedImage(ImageShape shape, double fill = 0.0);
  NormalizedImage(ImageShape shape, std::vector<double> values);

  /// Throws std::domain_error if any element left [-1, 1] or is not finite.
  void validate() const;
};

/// Additive generator output G(x), elementwise in [-1, 1].
class AdversarialMask : public FloatImage {
 public:
  AdversarialMask() = default;
  explicit AdversarialMask(ImageShape shape, double fill = 0.0);
  AdversarialMask(ImageShape shape, std::vector<double> values);

  void validate() const;
};

/// Unit-norm feature vector.
class Embedding {
 public:
  Embedding() = default;
  /// Normalizes `values` to unit L2 norm; zero vectors raise std::domain_error.
  explicit Embedding(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::vector<double> values_;
};

/// (pixel - 127.5) / 128 elementwise.
NormalizedImage normalize_image(const RawImage& raw);

/// round-half-up(clamp(v * 128 + 127.5, 0, 255)).
RawImage denormalize_image(const FloatImage& img);

/// Cosine of the angle between a and b. Zero-norm input raises std::domain_error.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const Embedding& a, const Embedding& b);

/// x_adv = 2 * clamp(mask + (x + 1) / 2, 0, 1) - 1.
NormalizedImage clamp_compose(const NormalizedImage& x, const AdversarialMask& mask);

/// Largest absolute elementwise difference.
double linf_distance(const FloatImage& a, const FloatImage& b);
double l2_distance(const FloatImage& a, const FloatImage& b);

}  // namespace advbiom
