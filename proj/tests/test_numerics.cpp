#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "latent_probe/correlation.hpp"
#include "latent_probe/dataset.hpp"
#include "latent_probe/mlp.hpp"
#include "latent_probe/pca.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace latent_probe;
using namespace test_oracles;
using test_support::random_matrix;
using test_support::random_vector;

namespace {

double mse(const Vector& a, const Vector& b) { return (a - b).squaredNorm() / double(a.size()); }

}  // namespace

// ---------------------------------------------------------------- correlation

TEST_CASE("spearman hand examples") {
  const std::vector<double> a{1, 2, 3};
  CHECK(spearman(a, std::vector<double>{10, 20, 30}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman(a, std::vector<double>{30, 10, 20}) == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("fractional ranks average ties") {
  const auto r = fractional_ranks(std::vector<double>{10, 20, 10, 30, 20, 20});
  const std::vector<double> want{1.5, 4, 1.5, 6, 4, 4};
  CHECK(r == want);
}

TEST_CASE("pearson hand examples") {
  const std::vector<double> a{1.5, -2, 3.25, 4, 0, 7, -1, 2, 9, 5};
  std::vector<double> affine, neg, b{3, 1, 4, 1, 5, 9, 2, 6, 5, 3};
  for (double v : a) {
    affine.push_back(2 * v + 3);
    neg.push_back(-v);
  }
  CHECK(pearson(a, affine) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pearson(a, neg) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(std::abs(pearson(a, b) - naive_pearson(a, b)) < 1e-12);
}

TEST_CASE("spearman matches a naive rank-then-correlate oracle on tied data") {
  auto rng = make_stream(21);
  int checked = 0;
  while (checked < 200) {
    std::uniform_int_distribution<int> len(2, 100), level(0, 15);
    const int n = len(rng);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = level(rng);
      b[i] = level(rng) * 0.5;
    }
    if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; }) ||
        std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; }))
      continue;
    CHECK(std::abs(spearman(a, b) - naive_pearson(naive_ranks(a), naive_ranks(b))) <= 1e-12);
    ++checked;
  }
}

TEST_CASE("spearman is unchanged by strictly increasing transforms") {
  auto rng = make_stream(22);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  std::vector<double> a(300), b(300), la, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = u(rng);
    b[i] = a[i] + u(rng);
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    la.push_back(apply_transform(Transform::log, a[i]));
    cb.push_back(apply_transform(Transform::cubic, b[i] - 50.0));
  }
  CHECK(spearman(a, b) == spearman(la, cb));
}

TEST_CASE("correlations of constant inputs are undefined") {
  const std::vector<double> c{2, 2, 2}, a{1, 2, 3};
  CHECK_THROWS_WITH_AS(spearman(c, a), doctest::Contains("undefined correlation"), Error);
  CHECK_THROWS_WITH_AS(pearson(a, c), doctest::Contains("undefined correlation"), Error);
  CHECK_FALSE(try_spearman(c, a).has_value());
  CHECK(try_spearman(a, a).value() == doctest::Approx(1.0));
  CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{1}), Error);
  CHECK_THROWS_AS(spearman(a, std::vector<double>{1, 2}), Error);
}

// ---------------------------------------------------------------------- PCA

TEST_CASE("PCA of points on y = x is one direction") {
  Matrix X(5, 2);
  X << 0, 0, 1, 1, 2, 2, 3, 3, 4, 4;
  const PcaModel m = pca_fit(X, 1);
  CHECK(m.explained_variance(0) == doctest::Approx(m.total_variance).epsilon(1e-12));
  CHECK(std::abs(std::abs(m.components(0, 0)) - 1 / std::sqrt(2.0)) < 1e-12);
  CHECK(std::abs(std::abs(m.components(0, 1)) - 1 / std::sqrt(2.0)) < 1e-12);
}

TEST_CASE("PCA hand-checked 3x2 example") {
  Matrix X(3, 2);
  X << 1, 2, 3, 4, 5, 0;
  // Centered rows (-2,0), (0,2), (2,-2); covariance [[4,-2],[-2,4]];
  // leading eigenpair 6 along (1,-1)/sqrt2 with scores (-sqrt2, -sqrt2, 2 sqrt2).
  const PcaModel m = pca_fit(X, 2);
  CHECK(m.explained_variance(0) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(m.explained_variance(1) == doctest::Approx(2.0).epsilon(1e-12));
  const Matrix s = pca_transform(m, X);
  const double sign = s(2, 0) > 0 ? 1.0 : -1.0;
  CHECK(sign * s(0, 0) == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));
  CHECK(sign * s(1, 0) == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));
  CHECK(sign * s(2, 0) == doctest::Approx(2 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("PCA projections match a covariance eigensolver oracle up to sign") {
  auto rng = make_stream(23);
  Matrix X = random_matrix(50, 10, rng);
  for (Eigen::Index j = 0; j < 10; ++j) X.col(j) *= double(j + 1);
  const PcaModel m = pca_fit(X, 3);
  const Matrix centered = X.rowwise() - X.colwise().mean();
  const Matrix cov = centered.transpose() * centered / 49.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Matrix scores = pca_transform(m, X);
  for (int c = 0; c < 3; ++c) {
    const Eigen::Index idx = 9 - c;  // eigenvalues ascend
    CHECK(m.explained_variance(c) == doctest::Approx(eig.eigenvalues()(idx)).epsilon(1e-10));
    const Vector oracle = centered * eig.eigenvectors().col(idx);
    const double sign = oracle.dot(scores.col(c)) >= 0 ? 1.0 : -1.0;
    CHECK((sign * oracle - scores.col(c)).cwiseAbs().maxCoeff() < 1e-8);
    // Score variance equals the explained variance.
    CHECK(scores.col(c).squaredNorm() / 49.0 == doctest::Approx(m.explained_variance(c)).epsilon(1e-10));
  }
}

TEST_CASE("PCA invariants: orthonormal rows, ordered variances, completeness") {
  auto rng = make_stream(24);
  for (auto [n, d] : {std::pair{30, 8}, std::pair{6, 12}}) {
    const Matrix X = random_matrix(n, d, rng);
    const Eigen::Index k = std::min<Eigen::Index>(n - 1, d);
    const PcaModel m = pca_fit(X, k);
    const Matrix gram = m.components * m.components.transpose();
    CHECK((gram - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index j = 0; j < k; ++j) CHECK(m.explained_variance(j) >= 0.0);
    for (Eigen::Index j = 1; j < k; ++j) CHECK(m.explained_variance(j) <= m.explained_variance(j - 1));
    CHECK(m.explained_variance.sum() == doctest::Approx(m.total_variance).epsilon(1e-8));
    const Matrix back = pca_reconstruct(m, pca_transform(m, X));
    CHECK((back - X).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("zero-variance directions never lead") {
  auto rng = make_stream(25);
  Matrix X = Matrix::Zero(40, 4);
  X.leftCols(2) = random_matrix(40, 2, rng);
  const PcaModel m = pca_fit(X, 2);
  CHECK(m.components.rightCols(2).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("PCA argument errors") {
  auto rng = make_stream(26);
  const Matrix X = random_matrix(5, 3, rng);
  CHECK_THROWS_AS(pca_fit(X, 0), Error);
  CHECK_THROWS_AS(pca_fit(X, 4), Error);
  CHECK_THROWS_AS(pca_fit(random_matrix(3, 5, rng), 3), Error);
  const PcaModel m = pca_fit(X, 2);
  CHECK_THROWS_AS(pca_transform(m, random_matrix(2, 4, rng)), Error);
}

// ---------------------------------------------------------------------- MLP

TEST_CASE("mlp training is deterministic per seed") {
  auto rng = make_stream(27);
  const Matrix X = random_matrix(300, 6, rng);
  const Vector y = X.col(0) - X.col(1);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 3;
  cfg.seed = 5;
  const MlpModel a = mlp_train(X, y, cfg, 0.5);
  const MlpModel b = mlp_train(X, y, cfg, 0.5);
  CHECK(a.hidden1.weights == b.hidden1.weights);
  CHECK(a.output.bias == b.output.bias);
  CHECK(mlp_predict(a, X) == mlp_predict(b, X));
  cfg.seed = 6;
  CHECK(mlp_train(X, y, cfg, 0.5).hidden1.weights != a.hidden1.weights);
}

TEST_CASE("mlp learns a noiseless linear map") {
  auto rng = make_stream(28);
  const Matrix X = random_matrix(200, 8, rng);
  const Vector w = random_vector(8, rng);
  const Vector y = X * w / w.norm();
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 2000;
  cfg.seed = 1;
  const MlpModel m = mlp_train(X, y, cfg, 0.0);
  REQUIRE(m.epoch_loss.size() == 2000);
  CHECK(mse(mlp_predict(m, X), y) < 0.1 * m.epoch_loss.front());
}

TEST_CASE("dropout changes the training trajectory") {
  auto rng = make_stream(29);
  const Matrix X = random_matrix(256, 5, rng);
  const Vector y = random_vector(256, rng);
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 1;
  cfg.seed = 3;
  CHECK(mlp_train(X, y, cfg, 0.0).hidden1.weights != mlp_train(X, y, cfg, 0.5).hidden1.weights);
}

TEST_CASE("mlp inference is deterministic and a zero network predicts zero") {
  auto rng = make_stream(30);
  const Matrix X = random_matrix(10, 4, rng);
  const MlpModel z = mlp_zero(4);
  CHECK(mlp_predict(z, X).cwiseAbs().maxCoeff() == 0.0);
  TrainConfig cfg;
  cfg.batch_size = 10;
  cfg.epochs = 1;
  const MlpModel m = mlp_train(X, random_vector(10, rng), cfg, 0.5);
  CHECK(mlp_predict(m, X) == mlp_predict(m, X));
}

TEST_CASE("leaky rectifier slope") {
  MlpModel m = mlp_zero(1);
  m.hidden1.weights(0, 0) = -1.0;  // pre-activation -1 -> -0.01
  m.hidden2.weights(0, 0) = 1.0;   // pre-activation -0.01 -> -0.0001
  m.output.weights(0, 0) = 1.0;
  Matrix X(1, 1);
  X << 1.0;
  CHECK(mlp_predict(m, X)(0) == doctest::Approx(-1e-4).epsilon(1e-12));
}

TEST_CASE("mlp argument errors") {
  auto rng = make_stream(31);
  const Matrix X = random_matrix(50, 3, rng);
  const Vector y = random_vector(50, rng);
  TrainConfig cfg;  // batch 128 > 50 rows
  CHECK_THROWS_AS(mlp_train(X, y, cfg, 0.5), Error);
  cfg.batch_size = 10;
  cfg.epochs = 0;
  CHECK_THROWS_AS(mlp_train(X, y, cfg, 0.5), Error);
  cfg.epochs = 1;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(mlp_train(X, y, cfg, 0.5), Error);
  cfg.learning_rate = 1e-3;
  CHECK_THROWS_AS(mlp_train(X, y, cfg, 1.0), Error);
  CHECK_THROWS_AS(mlp_predict(mlp_zero(3), random_matrix(2, 4, rng)), Error);
}

TEST_CASE("divergent training names the epoch") {
  auto rng = make_stream(32);
  const Matrix X = random_matrix(64, 3, rng) * 1e3;
  const Vector y = random_vector(64, rng) * 1e3;
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 5;
  cfg.learning_rate = 1e100;
  CHECK_THROWS_WITH_AS(mlp_train(X, y, cfg, 0.0), doctest::Contains("diverged at epoch"), Error);
}
