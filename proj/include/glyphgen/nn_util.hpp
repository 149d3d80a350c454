#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace glyphgen {

/// Puts a module in eval mode for the lifetime of the guard, then restores it.
class EvalModeGuard {
 public:
  explicit EvalModeGuard(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) {
    module_.eval();
  }
  ~EvalModeGuard() { module_.train(was_training_); }
  EvalModeGuard(const EvalModeGuard&) = delete;
  EvalModeGuard& operator=(const EvalModeGuard&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

/// Turns off requires_grad on every parameter of a module for the guard's lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(torch::nn::Module& m) : params_(m.parameters()) {
    for (auto& p : params_) {
      previous_.push_back(p.requires_grad());
      p.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(previous_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> previous_;
};

/// FNV-1a over the raw bytes of all parameters and buffers.
std::uint64_t parameter_hash(const torch::nn::Module& m);

/// Row-wise L2 normalization of an N x K tensor.
inline torch::Tensor l2_normalize_rows(const torch::Tensor& x) {
  return torch::nn::functional::normalize(
      x, torch::nn::functional::NormalizeFuncOptions().p(2).dim(1).eps(1e-12));
}

}  // namespace glyphgen
