#pragma once

#include <vector>

#include "advbiom/core/image.hpp"
#include "advbiom/nn/tensor.hpp"

namespace advbiom::nn {

/// HWC images of one shape -> NCHW tensor.
Tensor stack_images(const std::vector<const FloatImage*>& images);

template <class Image>
Tensor stack_images(const std::vector<Image>& images) {
  std::vector<const FloatImage*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& im : images) ptrs.push_back(&im);
  return stack_images(ptrs);
}

/// Sample `index` of an NCHW tensor as an HWC image.
FloatImage unstack_image(const Tensor& batch, int index);

/// Same as unstack_image, with values clamped into [-1, 1] to absorb rounding.
NormalizedImage unstack_normalized(const Tensor& batch, int index);
AdversarialMask unstack_mask(const Tensor& batch, int index);

}  // namespace advbiom::nn
