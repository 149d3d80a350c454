#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "glyphgen/corpus.hpp"

namespace glyphgen {

/// Stacks images into an N x 1 x H x W float tensor mapped from [0,1] to [-1,1].
torch::Tensor to_model_input(std::span<const GrayImage* const> images);
torch::Tensor to_model_input(std::span<const Glyph* const> glyphs);
torch::Tensor to_model_input(const GrayImage& image);

/// Inverse of to_model_input for one 1 x H x W (or H x W) tensor, clamped to [0,1].
GrayImage from_model_output(const torch::Tensor& image);

/// [-1,1] model space to [0,1] pixel space, elementwise.
inline torch::Tensor to_pixel_space(const torch::Tensor& t) { return (t + 1.0) * 0.5; }

/// Raises ShapeError unless `x` is N x 1 x size x size.
void check_image_batch(const torch::Tensor& x, int size, const char* who);

}  // namespace glyphgen
