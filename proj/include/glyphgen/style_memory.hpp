#pragma once

#include <array>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "glyphgen/msp.hpp"

namespace glyphgen {

inline constexpr double kDefaultTau = 0.05;
inline constexpr double kDefaultMomentum = 0.1;

/// Cluster-level memory dictionary: one unit-norm center per (scale, style).
///
/// Style indices here are dense training indices in [0, S); callers that work
/// with corpus style ids translate through a LabelMap first.
class StyleMemory {
 public:
  StyleMemory(int num_styles, int code_dim, double momentum = kDefaultMomentum,
              double tau = kDefaultTau, torch::Dtype dtype = torch::kFloat);

  /// Adopts `centers` (3 x S x K); rows are normalised on entry.
  static StyleMemory from_centers(torch::Tensor centers, double momentum = kDefaultMomentum,
                                  double tau = kDefaultTau);
  /// Adopts saved centers verbatim (checkpoint restore).
  static StyleMemory restore(torch::Tensor centers, double momentum, double tau);

  /// Class centers: the normalised mean code of each style. Every style in
  /// [0, num_styles) must own at least one code.
  static StyleMemory from_codes(const std::vector<StyleCode>& codes, std::span<const int> styles,
                                int num_styles, double momentum = kDefaultMomentum,
                                double tau = kDefaultTau);

  int num_styles() const { return static_cast<int>(centers_.size(1)); }
  int code_dim() const { return static_cast<int>(centers_.size(2)); }
  double momentum() const { return momentum_; }
  double tau() const { return tau_; }

  /// 3 x S x K
  const torch::Tensor& centers() const { return centers_; }
  torch::Tensor center(int scale, int style) const { return centers_[scale][style]; }

  /// c <- normalize(m * c + (1 - m) * q) for each scale; other rows untouched.
  /// m = 1 leaves the row as is and m = 0 adopts the (unit-norm) query verbatim.
  void momentum_update(const StyleCode& query, int style);
  /// Applies the single-row update for every row of `query`, in row order.
  void momentum_update(const StyleCode& query, std::span<const int> styles);

 private:
  StyleMemory(torch::Tensor centers, double momentum, double tau, bool normalize);
  void check_style(int style) const;

  torch::Tensor centers_;
  double momentum_;
  double tau_;
};

/// Rebuilds the memory from the current projector: encodes every image and
/// stores the normalised class center of each style.
StyleMemory init_epoch(MultiLayerStyleProjector& msp, std::span<const GrayImage* const> images,
                       std::span<const int> styles, int num_styles,
                       double momentum = kDefaultMomentum, double tau = kDefaultTau);

/// Loss value and closed-form gradient with respect to each scale of the query.
struct CcsResult {
  double loss = 0.0;
  std::array<torch::Tensor, kNumScales> grad;  // each K, double
};

/// Contrastive style loss of one query (batch of one) against the memory:
///   sum_i -log softmax_j(q_i . c_ij / tau)[positive]
/// evaluated in double precision. The memory is treated as a constant.
CcsResult ccs_loss(const StyleCode& query, int positive_style, const StyleMemory& memory);

/// Differentiable batch form used in training: mean over rows of the
/// per-row loss above. `styles` is an N-element int64 tensor.
torch::Tensor ccs_loss_batch(const StyleCode& query, const torch::Tensor& styles,
                             const StyleMemory& memory);

}  // namespace glyphgen
