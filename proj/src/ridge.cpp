#include "latent_probe/ridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace latent_probe {

namespace {

struct Standardized {
  Matrix Z;   // centered, unit sample sd per non-constant column
  Vector z;   // centered, unit sample sd target
  std::vector<Standardizer> features;
  Standardizer target;
};

Standardized standardize_problem(const Matrix& X, const Vector& y) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw Error("ridge regression needs at least 2 rows");
  if (y.size() != n) throw Error("ridge regression: X and y row counts differ");
  if (!X.allFinite() || !y.allFinite()) throw Error("ridge regression: non-finite input");

  Standardized s;
  s.target = Standardizer::fit(std::span<const double>(y.data(), static_cast<std::size_t>(n)));
  s.z = (y.array() - s.target.mean) / s.target.sd;

  s.Z.resize(n, X.cols());
  s.features.resize(static_cast<std::size_t>(X.cols()));
  bool any_varying = false;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    const double sd = std::sqrt((X.col(j).array() - mean).square().sum() / double(n - 1));
    auto& st = s.features[static_cast<std::size_t>(j)];
    st.mean = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      st.sd = sd;
      s.Z.col(j) = (X.col(j).array() - mean) / sd;
      any_varying = true;
    } else {
      st.sd = 1.0;
      s.Z.col(j).setZero();
    }
  }
  if (!any_varying) throw Error("ridge regression: degenerate (constant) feature matrix");
  return s;
}

RidgeModel finish(Standardized&& s, Vector w, double lambda) {
  RidgeModel m;
  m.lambda = lambda;
  m.standardized_weights = std::move(w);
  const Eigen::Index d = m.standardized_weights.size();
  m.weights.resize(d);
  m.intercept = s.target.mean;
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto& st = s.features[static_cast<std::size_t>(j)];
    m.weights(j) = m.standardized_weights(j) * s.target.sd / st.sd;
    m.intercept -= m.weights(j) * st.mean;
  }
  m.feature_standardizers = std::move(s.features);
  m.target_standardizer = s.target;
  return m;
}

struct Spectrum {
  Matrix U;         // n x r, orthonormal columns spanning the centered design
  Vector eigvals;   // squared singular values, r entries
};

// Left singular vectors of Z from whichever Gram matrix is smaller.
Spectrum spectrum(const Matrix& Z) {
  const Eigen::Index n = Z.rows(), d = Z.cols();
  Spectrum sp;
  if (n <= d) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Z * Z.transpose());
    const double tol = std::max(1.0, eig.eigenvalues().maxCoeff()) * 1e-10;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < n; ++j)
      if (eig.eigenvalues()(j) > tol) keep.push_back(j);
    sp.U.resize(n, static_cast<Eigen::Index>(keep.size()));
    sp.eigvals.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      sp.U.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]);
      sp.eigvals(static_cast<Eigen::Index>(c)) = eig.eigenvalues()(keep[c]);
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Z.transpose() * Z);
    const double tol = std::max(1.0, eig.eigenvalues().maxCoeff()) * 1e-10;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < d; ++j)
      if (eig.eigenvalues()(j) > tol) keep.push_back(j);
    sp.U.resize(n, static_cast<Eigen::Index>(keep.size()));
    sp.eigvals.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      const double mu = eig.eigenvalues()(keep[c]);
      sp.U.col(static_cast<Eigen::Index>(c)) = Z * eig.eigenvectors().col(keep[c]) / std::sqrt(mu);
      sp.eigvals(static_cast<Eigen::Index>(c)) = mu;
    }
  }
  return sp;
}

}  // namespace

Vector RidgeModel::predict(const Matrix& X) const {
  if (X.cols() != weights.size())
    throw Error("ridge predict: expected " + std::to_string(weights.size()) + " features, got " +
                std::to_string(X.cols()));
  return (X * weights).array() + intercept;
}

RidgeModel ridge_fit(const Matrix& X, const Vector& y, double lambda, RidgeSolver solver) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("ridge lambda must be >= 0");
  Standardized s = standardize_problem(X, y);
  const Eigen::Index n = s.Z.rows(), d = s.Z.cols();
  Vector w;
  if (lambda == 0.0) {
    w = Eigen::CompleteOrthogonalDecomposition<Matrix>(s.Z).solve(s.z);
  } else {
    const bool dual = solver == RidgeSolver::dual || (solver == RidgeSolver::automatic && d > n);
    if (dual) {
      Matrix K = s.Z * s.Z.transpose();
      K.diagonal().array() += lambda;
      w = s.Z.transpose() * K.llt().solve(s.z);
    } else {
      Matrix A = s.Z.transpose() * s.Z;
      A.diagonal().array() += lambda;
      w = A.llt().solve(s.Z.transpose() * s.z);
    }
  }
  return finish(std::move(s), std::move(w), lambda);
}

std::vector<double> ridge_loo_errors(const Matrix& X, const Vector& y,
                                     std::span<const double> grid) {
  if (grid.empty()) throw Error("ridge: empty lambda grid");
  const Standardized s = standardize_problem(X, y);
  const Spectrum sp = spectrum(s.Z);
  const double n = static_cast<double>(s.Z.rows());
  const Vector proj = sp.U.transpose() * s.z;
  const Matrix U2 = sp.U.array().square().matrix();
  const double scale = s.target.sd * s.target.sd;

  std::vector<double> errors;
  errors.reserve(grid.size());
  for (double lambda : grid) {
    if (!(lambda >= 0.0)) throw Error("ridge lambda must be >= 0");
    const Vector shrink = sp.eigvals.array() / (sp.eigvals.array() + lambda);
    const Vector fitted = sp.U * (shrink.array() * proj.array()).matrix();
    const Vector leverage = (U2 * shrink).array() + 1.0 / n;
    double total = 0.0;
    for (Eigen::Index i = 0; i < s.z.size(); ++i) {
      const double denom = 1.0 - leverage(i);
      if (denom < 1e-12) {
        total = std::numeric_limits<double>::infinity();
        break;
      }
      const double e = (s.z(i) - fitted(i)) / denom;
      total += e * e;
    }
    errors.push_back(total / n * scale);
  }
  return errors;
}

RidgeModel ridge_fit_auto(const Matrix& X, const Vector& y, std::span<const double> grid) {
  if (grid.empty()) throw Error("ridge: empty lambda grid");
  if (grid.size() == 1) return ridge_fit(X, y, grid.front());
  const std::vector<double> errors = ridge_loo_errors(X, y, grid);
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const bool better = errors[i] < errors[best] * (1.0 - 1e-12);
    const bool tie = !better && errors[i] <= errors[best] * (1.0 + 1e-12);
    if (better || (tie && grid[i] > grid[best])) best = i;
  }
  return ridge_fit(X, y, grid[best]);
}

}  // namespace latent_probe
