#include "latent_probe/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace latent_probe {

namespace {

void init_layer(DenseLayer& layer, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  layer.weights.resize(out, in);
  layer.bias.resize(out);
  for (Eigen::Index j = 0; j < in; ++j)
    for (Eigen::Index i = 0; i < out; ++i) layer.weights(i, j) = u(rng);
  for (Eigen::Index i = 0; i < out; ++i) layer.bias(i) = u(rng);
}

Matrix leaky(const Matrix& pre, double slope) {
  return pre.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

Matrix leaky_grad(const Matrix& pre, double slope) {
  return pre.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

// Adam state for one parameter block.
struct Moments {
  Matrix m, v;
  explicit Moments(const Matrix& like)
      : m(Matrix::Zero(like.rows(), like.cols())), v(Matrix::Zero(like.rows(), like.cols())) {}
};

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  template <typename Param>
  void update(Param& p, const Matrix& grad, Moments& s, double c1, double c2) const {
    s.m = beta1 * s.m + (1.0 - beta1) * grad;
    s.v = beta2 * s.v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const Matrix m_hat = s.m / c1;
    const Matrix v_hat = s.v / c2;
    p.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
  }
};

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("training needs epochs >= 1");
  if (!(learning_rate > 0.0)) throw Error("training needs learning_rate > 0");
  if (batch_size < 1) throw Error("training needs batch_size >= 1");
}

MlpModel mlp_zero(Eigen::Index input_dim, double negative_slope) {
  MlpModel m;
  m.negative_slope = negative_slope;
  m.hidden1 = {Matrix::Zero(MlpModel::kHidden1, input_dim), Vector::Zero(MlpModel::kHidden1)};
  m.hidden2 = {Matrix::Zero(MlpModel::kHidden2, MlpModel::kHidden1), Vector::Zero(MlpModel::kHidden2)};
  m.output = {Matrix::Zero(1, MlpModel::kHidden2), Vector::Zero(1)};
  return m;
}

MlpModel mlp_train(const Matrix& X, const Vector& y, const TrainConfig& cfg, double dropout) {
  cfg.validate();
  const Eigen::Index n = X.rows(), d = X.cols();
  if (y.size() != n) throw Error("mlp: X and y row counts differ");
  if (n < cfg.batch_size)
    throw Error("mlp: " + std::to_string(n) + " rows is fewer than batch size " +
                std::to_string(cfg.batch_size));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("mlp: dropout must be in [0, 1)");
  if (!X.allFinite() || !y.allFinite()) throw Error("mlp: non-finite training data");

  std::mt19937_64 rng(cfg.seed);
  MlpModel model;
  model.dropout_rate = dropout;
  model.seed = cfg.seed;
  init_layer(model.hidden1, d, MlpModel::kHidden1, rng);
  init_layer(model.hidden2, MlpModel::kHidden1, MlpModel::kHidden2, rng);
  init_layer(model.output, MlpModel::kHidden2, 1, rng);

  Moments w1(model.hidden1.weights), b1(model.hidden1.bias), w2(model.hidden2.weights),
      b2(model.hidden2.bias), w3(model.output.weights), b3(model.output.bias);
  Adam adam{cfg.learning_rate};
  const double slope = model.negative_slope;
  const double keep_scale = 1.0 / (1.0 - dropout);
  std::bernoulli_distribution keep(1.0 - dropout);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Matrix Xt = X.transpose();  // samples as columns

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Matrix xb(d, b);
      Eigen::RowVectorXd yb(b);
      for (Eigen::Index c = 0; c < b; ++c) {
        const Eigen::Index r = order[static_cast<std::size_t>(start + c)];
        xb.col(c) = Xt.col(r);
        yb(c) = y(r);
      }

      const Matrix z1 = (model.hidden1.weights * xb).colwise() + model.hidden1.bias;
      Matrix a1 = leaky(z1, slope);
      Matrix mask;
      if (dropout > 0.0) {
        mask.resize(a1.rows(), a1.cols());
        for (Eigen::Index c = 0; c < mask.cols(); ++c)
          for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = keep(rng) ? keep_scale : 0.0;
        a1 = a1.cwiseProduct(mask);
      }
      const Matrix z2 = (model.hidden2.weights * a1).colwise() + model.hidden2.bias;
      const Matrix a2 = leaky(z2, slope);
      const Eigen::RowVectorXd out =
          (model.output.weights * a2).array() + model.output.bias(0);

      const Eigen::RowVectorXd err = out - yb;
      loss_sum += err.squaredNorm();

      // d(mean squared error)/d(out)
      const Matrix g_out = (2.0 / double(b)) * err;
      const Matrix g_w3 = g_out * a2.transpose();
      const Matrix g_b3 = g_out.rowwise().sum();
      Matrix g_z2 = (model.output.weights.transpose() * g_out).cwiseProduct(leaky_grad(z2, slope));
      const Matrix g_w2 = g_z2 * a1.transpose();
      const Matrix g_b2 = g_z2.rowwise().sum();
      Matrix g_a1 = model.hidden2.weights.transpose() * g_z2;
      if (dropout > 0.0) g_a1 = g_a1.cwiseProduct(mask);
      const Matrix g_z1 = g_a1.cwiseProduct(leaky_grad(z1, slope));
      const Matrix g_w1 = g_z1 * xb.transpose();
      const Matrix g_b1 = g_z1.rowwise().sum();

      ++adam.step;
      const double c1 = 1.0 - std::pow(adam.beta1, double(adam.step));
      const double c2 = 1.0 - std::pow(adam.beta2, double(adam.step));
      adam.update(model.hidden1.weights, g_w1, w1, c1, c2);
      adam.update(model.hidden1.bias, g_b1, b1, c1, c2);
      adam.update(model.hidden2.weights, g_w2, w2, c1, c2);
      adam.update(model.hidden2.bias, g_b2, b2, c1, c2);
      adam.update(model.output.weights, g_w3, w3, c1, c2);
      adam.update(model.output.bias, g_b3, b3, c1, c2);
    }
    const double epoch_loss = loss_sum / double(n);
    if (!std::isfinite(epoch_loss) || !model.hidden1.weights.allFinite())
      throw Error("mlp training diverged at epoch " + std::to_string(epoch));
    model.epoch_loss.push_back(epoch_loss);
  }
  return model;
}

Vector mlp_predict(const MlpModel& model, const Matrix& X) {
  if (X.cols() != model.input_dim())
    throw Error("mlp predict: expected " + std::to_string(model.input_dim()) +
                " features, got " + std::to_string(X.cols()));
  const double slope = model.negative_slope;
  const Matrix a1 = leaky((model.hidden1.weights * X.transpose()).colwise() + model.hidden1.bias, slope);
  const Matrix a2 = leaky((model.hidden2.weights * a1).colwise() + model.hidden2.bias, slope);
  const Eigen::RowVectorXd out = (model.output.weights * a2).array() + model.output.bias(0);
  return out.transpose();
}

}  // namespace latent_probe
