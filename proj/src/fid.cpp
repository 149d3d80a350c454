#include "glyphgen/fid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "glyphgen/error.hpp"

namespace glyphgen {

FeatureMoments feature_moments(const Eigen::MatrixXd& features, double shrinkage) {
  if (features.rows() < 2)
    throw StatisticsError("FID needs at least 2 samples per set, got " +
                          std::to_string(features.rows()));
  FeatureMoments m;
  m.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - m.mean.transpose();
  m.cov = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  m.cov.diagonal().array() += shrinkage;
  return m;
}

namespace {

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw StatisticsError(std::string(what) + ": eigensolver failed");
  Eigen::VectorXd values = eig.eigenvalues();
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] < -kEigenClipTolerance)
      throw StatisticsError(std::string(what) + " has eigenvalue " + std::to_string(values[i]));
    values[i] = std::sqrt(std::max(values[i], 0.0));
  }
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double fid_from_moments(const FeatureMoments& a, const FeatureMoments& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != b.cov.rows())
    throw ShapeError("FID feature dimensions differ");
  const Eigen::MatrixXd root_a = symmetric_sqrt(a.cov, "covariance");
  // Tr((S_a S_b)^{1/2}) = Tr((sqrt(S_a) S_b sqrt(S_a))^{1/2}); the latter is symmetric PSD.
  const Eigen::MatrixXd inner = root_a * b.cov * root_a;
  const double cross = symmetric_sqrt(inner, "covariance product").trace();
  const double value = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

double fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeError("FID feature dimensions differ");
  return fid_from_moments(feature_moments(a), feature_moments(b));
}

Eigen::MatrixXd stack_features(const std::vector<std::vector<float>>& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ShapeError("feature rows differ in length");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

}  // namespace glyphgen
