#ifndef LATENT_PROBE_PCA_HPP
#define LATENT_PROBE_PCA_HPP

#include "latent_probe/common.hpp"

namespace latent_probe {

struct PcaModel {
  Vector mean;                 // D
  Matrix components;           // k x D, orthonormal rows
  Vector explained_variance;   // k, non-increasing, divisor N-1
  double total_variance = 0.0; // sum of all column variances of the fit data

  Eigen::Index k() const { return components.rows(); }
  Eigen::Index dim() const { return components.cols(); }
};

// Principal directions from the thin SVD of the centered data. Each
// component's sign is fixed so its largest-magnitude loading is positive.
PcaModel pca_fit(const Matrix& X, Eigen::Index k);

// (X - mean) * components^T, an N x k score matrix.
Matrix pca_transform(const PcaModel& model, const Matrix& X);

// scores * components + mean.
Matrix pca_reconstruct(const PcaModel& model, const Matrix& scores);

}  // namespace latent_probe

#endif  // LATENT_PROBE_PCA_HPP
