#pragma once

#include <torch/torch.h>

#include <vector>

#include "cooctex/cooc.hpp"
#include "cooctex/image.hpp"
#include "cooctex/palette.hpp"

namespace cooctex::nn {

/// Per-sample co-occurrence L1 of a (B, 3, H, W) image batch against raw
/// target tensors, returned as a (B) tensor in the images' dtype. Gradients
/// flow to the pixels through the soft assignments; the palette is fixed.
/// Throws ShapeMismatch if a crop is not `target.scale()` times its target.
torch::Tensor cooc_loss(const torch::Tensor& images, const std::vector<CoocTensor>& targets,
                        const Palette& palette, const CoocParams& params);

/// (B, k*k, H, W) float tensor from row-stacked co-occurrence tensors.
torch::Tensor to_torch(const std::vector<CoocTensor>& tensors);
torch::Tensor to_torch(const CoocTensor& tensor);

/// (B, 3, H, W) float tensor from images of equal size.
torch::Tensor to_torch(const std::vector<Image>& images);

/// Image from one (3, H, W) tensor, clamped to [0,1].
Image to_image(const torch::Tensor& chw);

/// (y, x, c) double buffer of one (3, H, W) tensor.
std::vector<double> to_rgb_buffer(const torch::Tensor& chw);

}  // namespace cooctex::nn
