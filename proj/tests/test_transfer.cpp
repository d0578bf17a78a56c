#include <doctest.h>

#include <cmath>

#include "latent_probe/correlation.hpp"
#include "latent_probe/csv.hpp"
#include "latent_probe/synth.hpp"
#include "latent_probe/transfer.hpp"
#include "support.hpp"

using namespace latent_probe;

namespace {

LinearWorld world(WeightMode mode, std::uint64_t seed, double noise = 0.1) {
  LinearWorldParams p;
  p.n = 300;
  p.d = 32;
  p.n_vars = 5;
  p.weight_mode = mode;
  p.noise_sd = noise;
  p.seed = seed;
  return gen_linear_world(p);
}

TransferSettings fast_mlp() {
  TransferSettings s;
  s.train.learning_rate = 1e-3;
  s.train.epochs = 30;
  s.train.seed = 11;
  return s;
}

}  // namespace

TEST_CASE("pooled training set without the target") {
  const LinearWorld w = world(WeightMode::shared, 1);
  const PooledTrainingSet pool = build_pooled(w.dataset, w.embeddings, "var2", PoolMode::exclude_target);
  CHECK(pool.size() == 4 * 300);
  CHECK(pool.X.rows() == 1200);
  CHECK(pool.X.cols() == 32);
  for (const auto& p : pool.provenance) {
    CHECK(p.variable != "var2");
    CHECK(p.source == LabelSource::ground_truth);
  }
  // each variable's labels have mean 0 and sd 1 on their own
  for (std::size_t block = 0; block < 4; ++block) {
    const Vector y = pool.y.segment(static_cast<Eigen::Index>(block * 300), 300);
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().sum() / 299.0);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
  }
  // the rows carry the right embeddings
  const auto& e = w.embeddings.at("var0");
  CHECK(pool.X.row(0).transpose().isApprox(e.data.row(0).cast<double>().transpose()));
}

TEST_CASE("noisy-target pool adds text labels for the target only") {
  LinearWorld w = world(WeightMode::shared, 2);
  w.dataset.columns[0].spec.valid_max = 2.0;
  TextEstimates text =
      gen_pseudo_text(w.dataset.entity_ids, w.dataset.column("var0").values, 0.0, 0.5, 0, 3, "var0");
  text.values[0].reset();
  std::size_t valid = 0;
  for (const auto& v : text.values) valid += v && *v <= 2.0;
  const PooledTrainingSet pool = build_pooled(w.dataset, w.embeddings, "var0", PoolMode::noisy_target, &text);
  CHECK(pool.size() == 4 * 300 + valid);
  std::size_t from_text = 0;
  for (const auto& p : pool.provenance) {
    if (p.variable == "var0") CHECK(p.source == LabelSource::text);
    from_text += p.source == LabelSource::text;
  }
  CHECK(from_text == valid);
  CHECK_THROWS_WITH_AS(build_pooled(w.dataset, w.embeddings, "var0", PoolMode::noisy_target),
                       doctest::Contains("needs text"), Error);

  const TransferTestSet test = build_transfer_test(w.dataset, w.embeddings, "var0", &text);
  CHECK(test.truth.size() == valid);
}

TEST_CASE("transfer errors") {
  LinearWorld w = world(WeightMode::shared, 3);
  w.embeddings.erase("var3");
  CHECK_THROWS_WITH_AS(build_pooled(w.dataset, w.embeddings, "var0", PoolMode::exclude_target),
                       doctest::Contains("var3"), Error);
  CHECK_THROWS_AS(build_pooled(w.dataset, w.embeddings, "nope", PoolMode::exclude_target), Error);
  CHECK_THROWS_AS(parse_pool_mode("both"), Error);
  CHECK(parse_transfer_model("ridge") == TransferModelKind::ridge);
  CHECK(to_string(PoolMode::noisy_target) == "noisy_target");
}

TEST_CASE("transfer across a shared direction works and across orthogonal ones fails") {
  const TransferSettings s = fast_mlp();
  const LinearWorld shared = world(WeightMode::shared, 4);
  const TransferOutcome a = run_transfer(shared.dataset, shared.embeddings, "var0", PoolMode::exclude_target,
                                         nullptr, s);
  CHECK(a.spearman_transfer >= 0.9);
  CHECK(a.n_train == 1200);
  CHECK(a.n_test == 300);

  const LinearWorld indep = world(WeightMode::independent, 4);
  const TransferOutcome b = run_transfer(indep.dataset, indep.embeddings, "var0", PoolMode::exclude_target,
                                         nullptr, s);
  CHECK(std::abs(b.spearman_transfer) < 0.2);

  TransferSettings ridge;
  ridge.model = TransferModelKind::ridge;
  CHECK(run_transfer(shared.dataset, shared.embeddings, "var0", PoolMode::exclude_target, nullptr, ridge)
            .spearman_transfer >= 0.9);
}

TEST_CASE("transfer is deterministic") {
  const LinearWorld w = world(WeightMode::shared, 5);
  const TransferSettings s = fast_mlp();
  const auto a = run_transfer(w.dataset, w.embeddings, "var1", PoolMode::exclude_target, nullptr, s);
  const auto b = run_transfer(w.dataset, w.embeddings, "var1", PoolMode::exclude_target, nullptr, s);
  CHECK(a.predictions == b.predictions);
}

TEST_CASE("cross-dataset transfer") {
  LinearWorldParams p;
  p.n = 200;
  p.d = 16;
  p.n_vars = 3;
  p.noise_sd = 0.1;
  p.seed = 6;
  const LinearWorld w = gen_linear_world(p);
  TransferSettings s;
  s.model = TransferModelKind::ridge;
  const std::vector<TransferSource> train{{w.dataset, w.embeddings.at("var1"), "var1"},
                                          {w.dataset, w.embeddings.at("var2"), "var2"}};
  const TransferSource test{w.dataset, w.embeddings.at("var0"), "var0"};
  const std::vector<double> pred = cross_dataset_transfer(train, test, s);
  REQUIRE(pred.size() == 200);
  std::vector<double> truth;
  for (const auto& v : w.dataset.column("var0").values) truth.push_back(*v);
  CHECK(spearman(pred, truth) >= 0.9);

  CHECK_THROWS_AS(cross_dataset_transfer(std::span<const TransferSource>{}, test, s), Error);
  p.d = 8;
  const LinearWorld narrow = gen_linear_world(p);
  const TransferSource bad{narrow.dataset, narrow.embeddings.at("var0"), "var0"};
  CHECK_THROWS_WITH_AS(cross_dataset_transfer(train, bad, s), doctest::Contains("dimension"), Error);
}

TEST_CASE("transfer csv") {
  test_support::TempDir dir("transfer_csv");
  const LinearWorld w = world(WeightMode::shared, 7);
  TransferSettings s;
  s.model = TransferModelKind::ridge;
  const std::vector<TransferOutcome> out{
      run_transfer(w.dataset, w.embeddings, "var0", PoolMode::exclude_target, nullptr, s)};
  write_transfer_csv(out, dir / "t.csv");
  const auto t = csv::read_file(dir / "t.csv");
  CHECK(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "var0");
}
