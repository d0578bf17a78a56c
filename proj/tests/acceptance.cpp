// Acceptance checks on synthetic oracles. One PASS/FAIL line per criterion;
// the exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "latent_probe/correlation.hpp"
#include "latent_probe/impute.hpp"
#include "latent_probe/probe_eval.hpp"
#include "latent_probe/ridge.hpp"
#include "latent_probe/superres.hpp"
#include "latent_probe/synth.hpp"
#include "latent_probe/textnum.hpp"
#include "latent_probe/transfer.hpp"
#include "oracles.hpp"

using namespace latent_probe;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, skip };

struct Result {
  Verdict verdict = Verdict::fail;
  std::string detail;
};

Result verdict(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

std::string num(double x, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << x;
  return s.str();
}

unsigned jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// ---------------------------------------------------------------------------

Result ridge_oracle() {
  auto rng = make_stream(101);
  double worst = 0.0, worst_dual = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    std::uniform_int_distribution<int> nd(12, 50), dd(1, 10);
    const int n = nd(rng), d = dd(rng);
    const Matrix X = gaussian(n, d, rng);
    const Vector y = gaussian(n, 1, rng).col(0) + X.rowwise().sum();
    const test_oracles::Scaled s = test_oracles::scale(X, y);
    for (double lambda : {0.0, 1.0, 100.0}) {
      const RidgeModel m = ridge_fit(X, y, lambda);
      const Vector w = test_oracles::normal_equation_weights(s, lambda);
      worst = std::max(worst, (m.standardized_weights - w).cwiseAbs().maxCoeff());
      const Vector pred = test_oracles::oracle_predict(s, w, X);
      worst = std::max(worst, (m.predict(X) - pred).cwiseAbs().maxCoeff() / s.sd_y);
    }
  }
  for (int inst = 0; inst < 20; ++inst) {
    std::uniform_int_distribution<int> nd(3, 9);
    const int n = nd(rng);
    std::uniform_int_distribution<int> dd(n + 1, 10);
    const int d = dd(rng);
    const Matrix X = gaussian(n, d, rng);
    const Vector y = gaussian(n, 1, rng).col(0);
    const test_oracles::Scaled s = test_oracles::scale(X, y);
    for (double lambda : {0.0, 1.0, 100.0}) {
      const RidgeModel primal = ridge_fit(X, y, lambda, RidgeSolver::primal);
      const RidgeModel dual = ridge_fit(X, y, lambda, RidgeSolver::dual);
      worst_dual = std::max(worst_dual, (primal.standardized_weights - dual.standardized_weights).cwiseAbs().maxCoeff());
      const Vector w = test_oracles::normal_equation_weights(s, lambda);
      worst = std::max(worst, (dual.standardized_weights - w).cwiseAbs().maxCoeff());
    }
  }
  return verdict(worst <= 1e-8 && worst_dual <= 1e-8,
                 "max |w - oracle| = " + num(worst) + ", max |primal - dual| = " + num(worst_dual));
}

Result rank_oracle() {
  auto rng = make_stream(202);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    std::uniform_int_distribution<int> len(3, 60), levels(2, 12);
    const int n = len(rng), k = levels(rng);
    std::uniform_int_distribution<int> pick(0, k);
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) {
      a.push_back(pick(rng));
      b.push_back(0.5 * a.back() + pick(rng));
    }
    const auto ra = test_oracles::naive_ranks(a), rb = test_oracles::naive_ranks(b);
    const double want = test_oracles::naive_pearson(ra, rb);
    if (!std::isfinite(want)) continue;
    worst = std::max(worst, std::abs(spearman(a, b) - want));
  }
  return verdict(worst <= 1e-12, "max |rho - oracle| = " + num(worst));
}

Result leakage() {
  auto rng = make_stream(303);
  int leaks = 0, unbalanced = 0;
  for (int config = 0; config < 1000; ++config) {
    std::uniform_int_distribution<int> ng(2, 60), extra(0, 300);
    const int n_groups = ng(rng);
    std::uniform_int_distribution<int> nf(2, n_groups), pick(0, n_groups - 1);
    const int folds = nf(rng);
    std::vector<std::string> rows;
    for (int g = 0; g < n_groups; ++g) rows.push_back("g" + std::to_string(g));
    for (int r = extra(rng); r > 0; --r) rows.push_back("g" + std::to_string(pick(rng)));
    std::shuffle(rows.begin(), rows.end(), rng);
    const FoldPlan plan = make_grouped_folds(rows, folds, rng());
    std::vector<int> count(static_cast<std::size_t>(folds));
    for (const auto& [g, f] : plan.assignment) count[static_cast<std::size_t>(f)]++;
    unbalanced += *std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()) > 1;
    for (int f = 0; f < folds; ++f) {
      std::set<std::string> train, test;
      for (const auto& g : rows) (plan.fold_of(g) == f ? test : train).insert(g);
      for (const auto& g : test) leaks += train.count(g) > 0;
    }
  }
  int bad_coverage = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LinearWorldParams p;
    p.n = 120 + 20 * seed;
    p.d = 16;
    p.n_groups = 6 + seed;
    p.n_vars = 1;
    p.noise_sd = 0.3;
    p.seed = seed;
    LinearWorld w = gen_linear_world(p);
    for (std::size_t i = 0; i < w.dataset.size(); i += 7) w.dataset.columns[0].values[i].reset();
    ProbeConfig cfg;
    cfg.n_folds = 2 + static_cast<int>(seed % 4);
    cfg.seed = seed;
    const CvReport r = run_cv(w.dataset, w.embeddings.at("var0"), "var0", nullptr, cfg);
    std::vector<int> hits(w.dataset.size());
    for (std::size_t row : r.rows) hits[row]++;
    for (std::size_t i = 0; i < hits.size(); ++i) bad_coverage += hits[i] != (i % 7 == 0 ? 0 : 1);
  }
  return verdict(leaks == 0 && unbalanced == 0 && bad_coverage == 0,
                 "group leaks " + std::to_string(leaks) + ", unbalanced plans " + std::to_string(unbalanced) +
                     ", rows not predicted exactly once " + std::to_string(bad_coverage));
}

double recovery_rho(double noise, std::uint64_t seed) {
  LinearWorldParams p;
  p.n = 500;
  p.d = 64;
  p.n_groups = 10;
  p.n_vars = 1;
  p.noise_sd = noise;  // the signal sd is 1
  p.seed = seed;
  const LinearWorld w = gen_linear_world(p);
  ProbeConfig cfg;
  cfg.seed = seed;
  return run_cv(w.dataset, w.embeddings.at("var0"), "var0", nullptr, cfg).spearman_lme;
}

Result recovery() {
  const double clean = recovery_rho(0.1, 1);
  double lo = 1.0, hi = -1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double rho = recovery_rho(1.0, seed);
    lo = std::min(lo, rho);
    hi = std::max(hi, rho);
  }
  return verdict(clean >= 0.95 && lo >= 0.55 && hi <= 0.85,
                 "noise 0.1: " + num(clean) + "; noise 1.0 over 10 seeds: [" + num(lo) + ", " + num(hi) + "]");
}

LinearWorld transfer_world(WeightMode mode, std::uint64_t seed) {
  LinearWorldParams p;
  p.n = 500;
  p.d = 64;
  p.n_vars = 5;
  p.weight_mode = mode;
  p.noise_sd = 0.1;
  p.seed = seed;
  return gen_linear_world(p);
}

TransferSettings transfer_settings(std::uint64_t seed) {
  TransferSettings s;
  s.train.learning_rate = 1e-3;
  s.train.epochs = 30;
  s.train.seed = seed;
  return s;
}

Result transfer() {
  const LinearWorld indep = transfer_world(WeightMode::independent, 1);
  const double rho_indep =
      run_transfer(indep.dataset, indep.embeddings, "var0", PoolMode::exclude_target, nullptr, transfer_settings(1))
          .spearman_transfer;
  const LinearWorld shared = transfer_world(WeightMode::shared, 1);
  const double rho_shared =
      run_transfer(shared.dataset, shared.embeddings, "var0", PoolMode::exclude_target, nullptr, transfer_settings(1))
          .spearman_transfer;

  int wins = 0;
  double min_gain = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LinearWorld w = transfer_world(WeightMode::shared, 100 + seed);
    const auto& truth = w.dataset.column("var0").values;
    std::vector<double> t;
    for (const auto& v : truth) t.push_back(*v);
    const double mean = std::accumulate(t.begin(), t.end(), 0.0) / double(t.size());
    double ss = 0.0;
    for (double v : t) ss += (v - mean) * (v - mean);
    const double sigma = std::sqrt(ss / double(t.size() - 1));
    const TextEstimates text =
        gen_pseudo_text(w.dataset.entity_ids, truth, 0.5 * sigma, 0.5 * sigma, 8, 200 + seed, "var0");
    const TransferOutcome o =
        run_transfer(w.dataset, w.embeddings, "var0", PoolMode::noisy_target, &text, transfer_settings(seed));
    const double gain = o.spearman_transfer - o.spearman_text.value_or(1.0);
    min_gain = std::min(min_gain, gain);
    wins += gain >= 0.05;
  }
  return verdict(std::abs(rho_indep) < 0.2 && rho_shared >= 0.9 && wins >= 8,
                 "independent " + num(rho_indep) + ", shared " + num(rho_shared) + ", noisy-label gain >= 5 points in " +
                     std::to_string(wins) + "/10 seeds (smallest gain " + num(min_gain) + ")");
}

ImputeReport impute_grid(bool informative) {
  const ImputeWorld w = gen_impute_world(500, 6, 64, informative, 0.5, 1);
  const ImputeTable t = standardized_table(w.dataset);
  const ImputeConfig cfg;
  const Matrix f = embedding_features(t.entity_ids, w.generic, cfg.components);
  return run_experiment_grid(t, f, ImputeGrid{}, 25, 7, cfg, jobs());
}

Result imputation() {
  const ImputeReport informative = impute_grid(true);
  const ImputeReport null_world = impute_grid(false);
  const ImputeGrid grid;
  int min_wins = 25;
  double max_degrade = -1.0;
  for (std::size_t k : grid.ks)
    for (double p : grid.ps) {
      int wins = 0;
      for (const auto& r : informative.runs)
        if (r.k == k && r.p == p) wins += r.mae_embedding < r.mae_baseline;
      min_wins = std::min(min_wins, wins);
      double base = 0.0, emb = 0.0;
      for (const auto& r : null_world.runs)
        if (r.k == k && r.p == p) {
          base += r.mae_baseline;
          emb += r.mae_embedding;
        }
      max_degrade = std::max(max_degrade, emb / base - 1.0);
    }
  return verdict(min_wins >= 20 && max_degrade < 0.15,
                 "fewest embedding wins in a cell " + std::to_string(min_wins) +
                     "/25; largest null-world MAE change " + num(100.0 * max_degrade) + "%");
}

Result superres() {
  const TwoLevelWorld w = gen_two_level_world(50, 1000, 64, 0.1, 0.8, 1);
  const std::vector<double> pred =
      fit_high_predict_low({w.high, w.high_embeddings, "var0"}, {w.low.entity_ids, w.low_embeddings});
  std::vector<double> truth;
  for (const auto& v : w.low.column("var0").values) truth.push_back(*v);
  const double rho = spearman(pred, truth);

  std::map<std::string, double> high_values;
  for (std::size_t i = 0; i < w.high.size(); ++i) high_values[w.high.entity_ids[i]] = *w.high.columns[0].values[i];
  const std::vector<double> naive = naive_project(w.parents, high_values, w.low.entity_ids);
  std::map<std::string, std::set<double>> per_parent;
  for (std::size_t i = 0; i < naive.size(); ++i) per_parent[w.parents.at(w.low.entity_ids[i])].insert(naive[i]);
  std::size_t varying = 0;
  for (const auto& [parent, values] : per_parent) varying += values.size() != 1;
  return verdict(rho >= 0.9 && varying == 0,
                 "spearman " + num(rho) + ", parents with non-constant naive values " + std::to_string(varying));
}

Result parser() {
  const auto cases = test_oracles::corpus();
  int wrong = 0;
  for (const auto& c : cases) {
    const ParseResult r = parse_numeric(c.text, c.strategy, c.spec);
    const bool value_ok = r.value.has_value() == c.value.has_value() &&
                          (!r.value || std::abs(*r.value - *c.value) <= 1e-12 * std::max(1.0, std::abs(*c.value)));
    if (r.status != c.status || !value_ok) {
      ++wrong;
      std::cerr << "  corpus mismatch: \"" << c.text << "\"\n";
    }
  }
  const auto bases = test_oracles::date_fuzz_bases();
  auto rng = make_stream(51);
  int fuzz_wrong = 0;
  for (int t = 0; t < 500; ++t) {
    const auto& [text, spec] = bases[static_cast<std::size_t>(rng() % bases.size())];
    const std::string fuzzed = test_oracles::insert_date(text, rng);
    for (PromptKind k : {PromptKind::completion, PromptKind::qa}) {
      const ParseResult want = parse_numeric(text, k, spec);
      const ParseResult got = parse_numeric(fuzzed, k, spec);
      if (want.status != ParseStatus::ok || got.status != want.status || got.value != want.value) {
        ++fuzz_wrong;
        std::cerr << "  fuzz mismatch: \"" << fuzzed << "\"\n";
      }
    }
  }
  return verdict(cases.size() >= 30 && wrong == 0 && fuzz_wrong == 0,
                 std::to_string(cases.size() - static_cast<std::size_t>(wrong)) + "/" + std::to_string(cases.size()) +
                     " corpus answers, " + std::to_string(1000 - fuzz_wrong) + "/1000 date-fuzz parses");
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

bool rejected(const fs::path& p) {
  try {
    read_embeddings(p);
  } catch (const Error&) {
    return true;
  }
  return false;
}

Result format_round_trip() {
  const fs::path dir = fs::temp_directory_path() / ("latent_probe_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto rng = make_stream(404);
  int mismatched = 0, accepted_corrupt = 0;
  for (int t = 0; t < 100; ++t) {
    std::uniform_int_distribution<int> nd(1, 40), dd(1, 64);
    const int n = nd(rng), d = dd(rng);
    EmbeddingMatrix m;
    m.model_id = "model-" + std::to_string(t);
    m.prompt_kind = t % 2 ? PromptKind::completion : PromptKind::generic;
    if (t % 2) m.variable = "var" + std::to_string(t % 5);
    m.layer = static_cast<std::uint32_t>(t);
    for (int i = 0; i < n; ++i) m.entity_ids.push_back("id" + std::to_string(t) + "_" + std::to_string(i));
    m.data = gaussian(n, d, rng).cast<float>() * 1e3f;
    const fs::path a = dir / "a.lmeb", b = dir / "b.lmeb";
    write_embeddings(m, a);
    const EmbeddingMatrix back = read_embeddings(a);
    write_embeddings(back, b);
    if (read_bytes(a) != read_bytes(b) || read_bytes(fs::path(a.string() + ".meta")) != read_bytes(fs::path(b.string() + ".meta")) ||
        back.data != m.data || back.entity_ids != m.entity_ids)
      ++mismatched;

    const std::string bytes = read_bytes(a);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    write_bytes(a, bad_magic);
    accepted_corrupt += !rejected(a);
    write_bytes(a, bytes.substr(0, bytes.size() - 1 - static_cast<std::size_t>(t % 4)));
    accepted_corrupt += !rejected(a);
  }
  fs::remove_all(dir);
  return verdict(mismatched == 0 && accepted_corrupt == 0,
                 std::to_string(100 - mismatched) + "/100 byte-identical round trips, " +
                     std::to_string(accepted_corrupt) + " corrupted files accepted");
}

Result full_replication() {
  const char* root = std::getenv("LATENT_PROBE_REPLICATION_DIR");
  if (!root || !*root)
    return {Verdict::skip, "set LATENT_PROBE_REPLICATION_DIR to a directory with dataset.csv, manifest.json, "
                           "embeddings/ and text_estimates.csv"};
  const fs::path dir = root;
  const Dataset ds = load_dataset(dir / "dataset.csv", dir / "manifest.json");
  const EmbeddingMatrix e =
      read_embeddings(find_embeddings(dir / "embeddings", PromptKind::completion, std::string("population"), 25));
  const auto text = read_text_estimates(dir / "text_estimates.csv");
  ProbeConfig cfg;
  cfg.jobs = jobs();
  const CvReport r = run_cv(ds, e, "population", &text.at("population"), cfg);
  const double t = r.spearman_text.value_or(0.0);
  return verdict(std::abs(r.spearman_lme - 0.87) <= 0.05 && std::abs(t - 0.90) <= 0.05,
                 "spearman_lme " + num(r.spearman_lme) + " (want 0.87 +- 0.05), text " + num(t) +
                     " (want 0.90 +- 0.05)");
}

struct Criterion {
  std::string name;
  double limit_seconds;  // 0: no limit
  std::function<Result()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"ridge oracle equivalence", 1.0, ridge_oracle},
      {"rank-correlation oracle", 1.0, rank_oracle},
      {"leakage freedom", 5.0, leakage},
      {"end-to-end probe recovery", 10.0, recovery},
      {"transfer contract", 120.0, transfer},
      {"imputation contract", 120.0, imputation},
      {"super-resolution contract", 10.0, superres},
      {"parser corpus and date fuzz", 0.0, parser},
      {"embedding format round trip", 0.0, format_round_trip},
      {"full replication (optional)", 0.0, full_replication},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {Verdict::fail, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = num(secs, 2) + " s";
    if (c.limit_seconds > 0) {
      timing += " of " + num(c.limit_seconds, 3) + " s";
      if (r.verdict == Verdict::pass && secs >= c.limit_seconds) {
        r.verdict = Verdict::fail;
        r.detail += "; over the time limit";
      }
    }
    const char* tag = r.verdict == Verdict::pass ? "PASS" : r.verdict == Verdict::skip ? "SKIP" : "FAIL";
    failures += r.verdict == Verdict::fail;
    std::cout << tag << "  " << c.name << ": " << r.detail << " [" << timing << "]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
