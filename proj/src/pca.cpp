#include "latent_probe/pca.hpp"

#include <algorithm>
#include <string>

namespace latent_probe {

PcaModel pca_fit(const Matrix& X, Eigen::Index k) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (k < 1 || k > std::min(n - 1, d))
    throw Error("PCA: k=" + std::to_string(k) + " outside [1, min(N-1, D)] = [1, " +
                std::to_string(std::min(n - 1, d)) + "]");
  if (!X.allFinite()) throw Error("PCA: non-finite input");

  PcaModel model;
  model.mean = X.colwise().mean().transpose();
  const Matrix centered = X.rowwise() - model.mean.transpose();
  model.total_variance = centered.squaredNorm() / double(n - 1);

  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  model.components = svd.matrixV().leftCols(k).transpose();
  model.explained_variance = sv.head(k).array().square() / double(n - 1);

  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    model.components.row(c).cwiseAbs().maxCoeff(&arg);
    if (model.components(c, arg) < 0.0) model.components.row(c) *= -1.0;
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& X) {
  if (X.cols() != model.dim())
    throw Error("PCA transform: expected " + std::to_string(model.dim()) + " columns, got " +
                std::to_string(X.cols()));
  return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Matrix pca_reconstruct(const PcaModel& model, const Matrix& scores) {
  if (scores.cols() != model.k()) throw Error("PCA reconstruct: score width mismatch");
  return (scores * model.components).rowwise() + model.mean.transpose();
}

}  // namespace latent_probe
