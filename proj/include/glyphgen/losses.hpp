#pragma once

#include <torch/torch.h>

#include "glyphgen/png_io.hpp"
#include "glyphgen/train_config.hpp"

namespace glyphgen {

/// Mean absolute difference. Shapes must match exactly.
torch::Tensor l1_loss(const torch::Tensor& real, const torch::Tensor& generated);
double l1_loss(const GrayImage& real, const GrayImage& generated);

/// lambda1 * l1 + lambda2 * adv_g + lambda3 * ccs_g (the last term dropped
/// when use_ccs is off). Non-finite inputs raise DivergenceError.
double total_g_loss(double l1, double adv_g, double ccs_g, const TrainConfig& config);
torch::Tensor total_g_loss(const torch::Tensor& l1, const torch::Tensor& adv_g,
                           const torch::Tensor& ccs_g, const TrainConfig& config);

}  // namespace glyphgen
