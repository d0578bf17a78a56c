#ifndef LATENT_PROBE_MLP_HPP
#define LATENT_PROBE_MLP_HPP

#include <cstdint>
#include <vector>

#include "latent_probe/common.hpp"

namespace latent_probe {

struct TrainConfig {
  double learning_rate = 1e-5;
  int epochs = 20;
  int batch_size = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

// input -> 128 -> 32 -> 1 regressor with leaky-rectifier hidden units and
// inverted dropout on the first hidden layer during training only.
struct MlpModel {
  static constexpr Eigen::Index kHidden1 = 128;
  static constexpr Eigen::Index kHidden2 = 32;

  DenseLayer hidden1;
  DenseLayer hidden2;
  DenseLayer output;
  double negative_slope = 0.01;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> epoch_loss;  // mean training loss per epoch

  Eigen::Index input_dim() const { return hidden1.weights.cols(); }
};

// Minimizes mean squared error with Adam (beta1 0.9, beta2 0.999, eps 1e-8)
// over `cfg.epochs` reshuffled passes. Initialization, shuffling and dropout
// masks all come from cfg.seed.
MlpModel mlp_train(const Matrix& X, const Vector& y, const TrainConfig& cfg, double dropout);

Vector mlp_predict(const MlpModel& model, const Matrix& X);

// Zero-initialized network of the fixed shape for `input_dim` features.
MlpModel mlp_zero(Eigen::Index input_dim, double negative_slope = 0.01);

}  // namespace latent_probe

#endif  // LATENT_PROBE_MLP_HPP
