#include "advbiom/core/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace advbiom {

namespace {

void check_buffer(const ImageShape& shape, std::size_t n) {
  if (shape.height <= 0 || shape.width <= 0 || shape.channels <= 0) {
    throw ShapeError("image dimensions must be positive, got " + to_string(shape));
  }
  if (shape.size() != n) {
    throw ShapeError("buffer of " + std::to_string(n) + " values does not fit " +
                     to_string(shape));
  }
}

void check_unit_range(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v) || v < -1.0 || v > 1.0) {
      std::ostringstream os;
      os << what << " value " << v << " outside [-1, 1]";
      throw std::domain_error(os.str());
    }
  }
}

}  // namespace

std::string to_string(const ImageShape& shape) {
  std::ostringstream os;
  os << shape.height << "x" << shape.width << "x" << shape.channels;
  return os.str();
}

RawImage::RawImage(ImageShape shape, std::vector<std::uint8_t> pixels)
    : shape_(shape), pixels_(std::move(pixels)) {
  check_buffer(shape_, pixels_.size());
  if (shape_.height < 8 || shape_.width < 8) {
    throw ShapeError("raw images must be at least 8x8, got " + to_string(shape_));
  }
  if (shape_.channels != 1 && shape_.channels != 3) {
    throw ShapeError("raw images are grayscale or rgb, got " + to_string(shape_));
  }
}

FloatImage::FloatImage(ImageShape shape, double fill)
    : shape_(shape), values_(shape.size(), fill) {
  check_buffer(shape_, values_.size());
}

FloatImage::FloatImage(ImageShape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  check_buffer(shape_, values_.size());
}

NormalizedImage::NormalizedImage(ImageShape shape, double fill)
    : FloatImage(shape, fill) {
  validate();
}

NormalizedImage::NormalizedImage(ImageShape shape, std::vector<double> values)
    : FloatImage(shape, std::move(values)) {
  validate();
}

void NormalizedImage::validate() const { check_unit_range(values_, "normalized image"); }

AdversarialMask::AdversarialMask(ImageShape shape, double fill) : FloatImage(shape, fill) {
  validate();
}

AdversarialMask::AdversarialMask(ImageShape shape, std::vector<double> values)
    : FloatImage(shape, std::move(values)) {
  validate();
}

void AdversarialMask::validate() const { check_unit_range(values_, "adversarial mask"); }

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  double norm = 0.0;
  for (double v : values_) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::domain_error("cannot normalize a zero or non-finite embedding");
  }
  for (double& v : values_) v /= norm;
}

NormalizedImage normalize_image(const RawImage& raw) {
  std::vector<double> values(raw.pixels().size());
  std::transform(raw.pixels().begin(), raw.pixels().end(), values.begin(),
                 [](std::uint8_t p) { return (static_cast<double>(p) - 127.5) / 128.0; });
  return NormalizedImage(raw.shape(), std::move(values));
}

RawImage denormalize_image(const FloatImage& img) {
  std::vector<std::uint8_t> pixels(img.size());
  std::transform(img.values().begin(), img.values().end(), pixels.begin(), [](double v) {
    const double p = std::clamp(v * 128.0 + 127.5, 0.0, 255.0);
    return static_cast<std::uint8_t>(std::floor(p + 0.5));
  });
  return RawImage(img.shape(), std::move(pixels));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: vectors of length " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw std::domain_error("cosine_similarity: zero-norm vector");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
  return cosine_similarity(a.values(), b.values());
}

NormalizedImage clamp_compose(const NormalizedImage& x, const AdversarialMask& mask) {
  if (!(x.shape() == mask.shape())) {
    throw ShapeError("clamp_compose: image " + to_string(x.shape()) + " vs mask " +
                     to_string(mask.shape()));
  }
  std::vector<double> out(x.size());
  auto xv = x.values();
  auto mv = mask.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mv[i] == 0.0) {
      out[i] = xv[i];  // exact identity, no round trip through (x + 1) / 2
      continue;
    }
    out[i] = 2.0 * std::clamp(mv[i] + (xv[i] + 1.0) * 0.5, 0.0, 1.0) - 1.0;
  }
  return NormalizedImage(x.shape(), std::move(out));
}

double linf_distance(const FloatImage& a, const FloatImage& b) {
  if (!(a.shape() == b.shape())) throw ShapeError("linf_distance: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  }
  return m;
}

double l2_distance(const FloatImage& a, const FloatImage& b) {
  if (!(a.shape() == b.shape())) throw ShapeError("l2_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace advbiom
