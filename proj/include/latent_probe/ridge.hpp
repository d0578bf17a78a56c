#ifndef LATENT_PROBE_RIDGE_HPP
#define LATENT_PROBE_RIDGE_HPP

#include <span>
#include <vector>

#include "latent_probe/common.hpp"
#include "latent_probe/dataset.hpp"

namespace latent_probe {

enum class RidgeSolver { automatic, primal, dual };

// Ridge regression on internally standardized features and target with an
// unpenalized intercept. `weights`/`intercept` act on raw inputs;
// `standardized_weights` are the penalized coefficients.
struct RidgeModel {
  Vector weights;
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<Standardizer> feature_standardizers;  // constant features: sd 1, weight 0
  Standardizer target_standardizer;
  Vector standardized_weights;

  Vector predict(const Matrix& X) const;
};

inline const std::vector<double> kDefaultLambdaGrid{1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4};

// Solves (Z'Z + lambda I) w = Z'z. The automatic solver switches to the N x N
// dual system when D > N. lambda = 0 yields the minimum-norm least-squares fit.
RidgeModel ridge_fit(const Matrix& X, const Vector& y, double lambda,
                     RidgeSolver solver = RidgeSolver::automatic);

// Mean squared leave-one-out error (raw target units) for every lambda in
// `grid`, from the hat-matrix identity e_i / (1 - h_ii) with feature scaling
// held at the full-sample values.
std::vector<double> ridge_loo_errors(const Matrix& X, const Vector& y,
                                     std::span<const double> grid);

// Fits with the grid value of smallest LOO error; ties go to the larger lambda.
RidgeModel ridge_fit_auto(const Matrix& X, const Vector& y,
                          std::span<const double> grid = kDefaultLambdaGrid);

}  // namespace latent_probe

#endif  // LATENT_PROBE_RIDGE_HPP
