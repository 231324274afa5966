#include "advbiom/nn/batch.hpp"

#include <algorithm>

namespace advbiom::nn {

Tensor stack_images(const std::vector<const FloatImage*>& images) {
  if (images.empty()) throw ShapeError("stack_images: empty batch");
  const ImageShape s = images.front()->shape();
  Tensor out({static_cast<int>(images.size()), s.channels, s.height, s.width});
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const FloatImage& im = *images[n];
    if (!(im.shape() == s)) {
      throw ShapeError("stack_images: " + to_string(im.shape()) + " vs " + to_string(s));
    }
    for (int c = 0; c < s.channels; ++c)
      for (int i = 0; i < s.height; ++i)
        for (int j = 0; j < s.width; ++j)
          out[(n * s.channels + c) * plane + static_cast<std::size_t>(i) * s.width + j] = im.at(i, j, c);
  }
  return out;
}

FloatImage unstack_image(const Tensor& batch, int index) {
  if (batch.rank() != 4 || index < 0 || index >= batch.dim(0)) {
    throw ShapeError("unstack_image: index " + std::to_string(index) + " of " + to_string(batch.shape()));
  }
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  FloatImage out(ImageShape{h, w, c});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        out.at(i, j, ch) = batch[(static_cast<std::size_t>(index) * c + ch) * plane + static_cast<std::size_t>(i) * w + j];
  return out;
}

namespace {

std::vector<double> clamped_values(const FloatImage& im) {
  std::vector<double> v(im.values().begin(), im.values().end());
  for (auto& x : v) x = std::clamp(x, -1.0, 1.0);
  return v;
}

}  // namespace

NormalizedImage unstack_normalized(const Tensor& batch, int index) {
  FloatImage im = unstack_image(batch, index);
  return NormalizedImage(im.shape(), clamped_values(im));
}

AdversarialMask unstack_mask(const Tensor& batch, int index) {
  FloatImage im = unstack_image(batch, index);
  return AdversarialMask(im.shape(), clamped_values(im));
}

}  // namespace advbiom::nn
