#pragma once

#include <vector>

#include <Eigen/Dense>

namespace glyphgen {

/// Gaussian moments of a feature set.
struct FeatureMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline constexpr double kCovarianceShrinkage = 1e-6;
inline constexpr double kEigenClipTolerance = 1e-6;

/// Sample mean and unbiased covariance of the rows of `features` (N x d),
/// with `shrinkage` * I added to the covariance. Needs N >= 2.
FeatureMoments feature_moments(const Eigen::MatrixXd& features,
                               double shrinkage = kCovarianceShrinkage);

/// Frechet distance between two Gaussians:
///   |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
/// The square-root trace is computed from the symmetric form
/// sqrt(S_a) S_b sqrt(S_a); eigenvalues down to -1e-6 are clipped to zero,
/// anything more negative raises StatisticsError.
double fid_from_moments(const FeatureMoments& a, const FeatureMoments& b);

/// FID between two feature sets (rows are samples).
double fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Row-stacked matrix from per-sample feature vectors.
Eigen::MatrixXd stack_features(const std::vector<std::vector<float>>& rows);

}  // namespace glyphgen
