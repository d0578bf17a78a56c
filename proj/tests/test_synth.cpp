#include <doctest.h>

#include <cmath>
#include <set>

#include "latent_probe/correlation.hpp"
#include "latent_probe/synth.hpp"
#include "support.hpp"

using namespace latent_probe;

TEST_CASE("linear worlds are deterministic and exact without noise") {
  LinearWorldParams p;
  p.n = 100;
  p.d = 16;
  p.n_vars = 3;
  p.seed = 3;
  const LinearWorld a = gen_linear_world(p);
  const LinearWorld b = gen_linear_world(p);
  CHECK(a.dataset.columns[1].values == b.dataset.columns[1].values);
  CHECK(a.embeddings.at("var2").data == b.embeddings.at("var2").data);
  p.seed = 4;
  CHECK(gen_linear_world(p).dataset.columns[0].values != a.dataset.columns[0].values);

  for (const auto& col : a.dataset.columns) {
    const auto& e = a.embeddings.at(col.spec.name);
    const Vector& w = a.weights.at(col.spec.name);
    CHECK(w.norm() == doctest::Approx(1.0));
    for (std::size_t i = 0; i < a.dataset.size(); ++i)
      CHECK(std::abs(*col.values[i] - e.data.row(static_cast<Eigen::Index>(i)).cast<double>().dot(w.transpose())) <
            1e-6);
  }
  CHECK(a.weights.at("var0") == a.weights.at("var1"));
  CHECK(a.dataset.group_ids[13] == "g3");
  CHECK(a.embeddings.at("var0").variable == std::optional<std::string>("var0"));
}

TEST_CASE("independent weights are orthonormal") {
  LinearWorldParams p;
  p.d = 16;
  p.n = 50;
  p.n_vars = 5;
  p.weight_mode = WeightMode::independent;
  const LinearWorld w = gen_linear_world(p);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const double dot = w.weights.at("var" + std::to_string(i)).dot(w.weights.at("var" + std::to_string(j)));
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).scale(1.0).epsilon(1e-12));
    }
  p.n_vars = 17;
  CHECK_THROWS_AS(gen_linear_world(p), Error);
  p.n_vars = 1;
  p.n_groups = 1;
  CHECK_THROWS_AS(gen_linear_world(p), Error);
}

TEST_CASE("pseudo text") {
  LinearWorldParams p;
  p.n = 500;
  p.n_vars = 1;
  p.seed = 8;
  const LinearWorld w = gen_linear_world(p);
  const auto& truth = w.dataset.columns[0].values;
  const TextEstimates t = gen_pseudo_text(w.dataset.entity_ids, truth, 0.5, 0.5, 8, 2, "var0");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    x.push_back(*t.values[i]);
    y.push_back(*truth[i]);
  }
  const double rho = spearman(x, y);
  CHECK(rho > 0.5);
  CHECK(rho < 0.95);

  const TextEstimates five = gen_pseudo_text(w.dataset.entity_ids, truth, 0.0, 0.2, 5, 2);
  std::set<double> levels;
  for (const auto& v : five.values) levels.insert(*v);
  CHECK(levels.size() <= 5);

  const TextEstimates exact = gen_pseudo_text(w.dataset.entity_ids, truth, 0.0, 0.0, 0, 2);
  CHECK(exact.values == truth);

  std::vector<std::optional<double>> gappy = truth;
  gappy[3].reset();
  CHECK_FALSE(gen_pseudo_text(w.dataset.entity_ids, gappy, 0.0, 0.2, 0, 2).values[3].has_value());
  CHECK_THROWS_AS(gen_pseudo_text(w.dataset.entity_ids, gappy, 0.0, 0.2, -1, 2), Error);
}

TEST_CASE("two-level worlds") {
  const TwoLevelWorld w = gen_two_level_world(5, 40, 8, 0.0, 0.8, 1);
  CHECK(w.high.size() == 5);
  CHECK(w.low.size() == 40);
  CHECK(w.parents.size() == 40);
  CHECK(w.parents.at("c0007") == "s0002");
  CHECK(w.low.group_ids[7] == "s0002");
  CHECK_THROWS_AS(gen_two_level_world(5, 4, 8, 0.0, 0.8, 1), Error);
  CHECK_THROWS_AS(gen_two_level_world(5, 40, 8, 0.0, 1.5, 1), Error);
}

TEST_CASE("impute worlds") {
  const ImputeWorld w = gen_impute_world(50, 4, 8, true, 0.1, 2);
  CHECK(w.dataset.columns.size() == 4);
  CHECK(w.generic.rows() == 50);
  CHECK_FALSE(w.generic.variable.has_value());
  CHECK(w.generic.prompt_kind == PromptKind::generic);
  CHECK_THROWS_AS(gen_impute_world(5, 4, 8, true, 0.1, 2), Error);
}

TEST_CASE("world files round-trip") {
  test_support::TempDir dir("world_files");
  LinearWorldParams p;
  p.n = 40;
  p.d = 4;
  p.n_vars = 2;
  const LinearWorld w = gen_linear_world(p);
  std::vector<EmbeddingMatrix> embeddings;
  for (const auto& [name, e] : w.embeddings) embeddings.push_back(e);
  const std::vector<TextEstimates> text{
      gen_pseudo_text(w.dataset.entity_ids, w.dataset.columns[0].values, 0.1, 0.1, 0, 1, "var0")};
  write_world_files(dir.path(), w.dataset, embeddings, text);

  const Dataset ds = load_dataset(dir / "dataset.csv", dir / "manifest.json");
  CHECK(ds.entity_ids == w.dataset.entity_ids);
  CHECK(ds.columns[1].values == w.dataset.columns[1].values);
  CHECK(read_embeddings(dir / "embeddings" / "completion__var1__L25.lmeb").data == w.embeddings.at("var1").data);
  CHECK(read_text_estimates(dir / "text_estimates.csv").at("var0").values == text[0].values);

  // parsing the answers recovers the estimates
  const BatchParse parsed =
      parse_batch(read_answers(dir / "answers.csv"), load_manifest(dir / "manifest.json"), PromptKind::completion);
  const TextEstimates& back = parsed.estimates.at("var0");
  REQUIRE(back.size() == 40);
  for (std::size_t i = 0; i < 40; ++i) CHECK(*back.values[i] == doctest::Approx(*text[0].values[i]).epsilon(1e-12));
}
