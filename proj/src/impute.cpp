#include "latent_probe/impute.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "latent_probe/csv.hpp"
#include "latent_probe/pca.hpp"
#include "latent_probe/ridge.hpp"

namespace latent_probe {

ImputeTable standardized_table(const Dataset& ds) {
  ImputeTable t;
  t.entity_ids = ds.entity_ids;
  const auto n = static_cast<Eigen::Index>(ds.size());
  const auto k = static_cast<Eigen::Index>(ds.columns.size());
  t.values = Matrix::Zero(n, k);
  t.observed = BoolArray::Constant(n, k, false);
  for (Eigen::Index c = 0; c < k; ++c) {
    const VariableColumn& col = ds.columns[static_cast<std::size_t>(c)];
    t.columns.push_back(col.spec.name);
    std::vector<double> obs;
    for (const auto& v : col.values)
      if (v) obs.push_back(apply_transform(col.spec, *v));
    const Standardizer s = Standardizer::fit(obs);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& v = col.values[static_cast<std::size_t>(i)];
      if (!v) continue;
      t.values(i, c) = s.apply(apply_transform(col.spec, *v));
      t.observed(i, c) = true;
    }
  }
  return t;
}

MaskPlan make_mask_plan(const ImputeTable& table, std::size_t k, double p, std::uint64_t seed) {
  const auto n_cols = static_cast<std::size_t>(table.cols());
  if (k < 1 || k > n_cols)
    throw Error("mask plan: k=" + std::to_string(k) + " exceeds variable count " + std::to_string(n_cols));
  if (!(p > 0.0 && p < 1.0)) throw Error("mask plan: p must lie in (0, 1)");
  auto rng = make_stream(seed, 0, 0x3A5C);
  std::vector<std::size_t> cols(n_cols);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  std::shuffle(cols.begin(), cols.end(), rng);
  cols.resize(k);
  std::sort(cols.begin(), cols.end());

  MaskPlan plan;
  plan.columns = cols;
  plan.k = k;
  plan.p = p;
  plan.seed = seed;
  for (std::size_t c : cols) {
    std::vector<std::size_t> rows;
    for (Eigen::Index i = 0; i < table.rows(); ++i)
      if (table.observed(i, static_cast<Eigen::Index>(c))) rows.push_back(static_cast<std::size_t>(i));
    const std::size_t m = round_half_up(p * static_cast<double>(rows.size()));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(m);
    for (std::size_t r : rows) plan.cells.push_back({r, c});
  }
  std::sort(plan.cells.begin(), plan.cells.end());
  return plan;
}

MaskedDataset apply_mask(const ImputeTable& table, const MaskPlan& plan) {
  MaskedDataset dm{table, table, plan};
  for (const auto& cell : plan.cells) {
    const auto r = static_cast<Eigen::Index>(cell.row), c = static_cast<Eigen::Index>(cell.col);
    if (!table.observed(r, c)) throw Error("mask plan targets an unobserved cell");
    dm.masked.observed(r, c) = false;
    dm.masked.values(r, c) = 0.0;
  }
  return dm;
}

void ImputeConfig::validate() const {
  if (rounds < 1) throw Error("imputation needs rounds >= 1");
  if (augment && components < 1) throw Error("embedding augmentation needs components >= 1");
  if (lambda_grid.empty()) throw Error("imputation needs a lambda grid");
}

Matrix embedding_features(std::span<const std::string> entity_ids, const EmbeddingMatrix& embeddings,
                          int components) {
  const auto perm = align(entity_ids, embeddings.entity_ids);
  const Matrix X = embeddings.gather(perm);
  const PcaModel pca = pca_fit(X, components);
  return pca_transform(pca, X);
}

Matrix mice_impute(const ImputeTable& incomplete, const Matrix* features, const ImputeConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = incomplete.rows(), k = incomplete.cols();
  if (features && features->rows() != n) throw Error("imputation: feature rows do not match the table");
  const Eigen::Index extra = features ? features->cols() : 0;

  std::vector<std::pair<Eigen::Index, Eigen::Index>> visit;  // (missing count, column)
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index observed = incomplete.observed.col(c).count();
    if (observed == 0) throw Error("column '" + incomplete.columns[static_cast<std::size_t>(c)] + "' is entirely missing");
    if (observed < n) visit.emplace_back(n - observed, c);
  }
  std::sort(visit.begin(), visit.end());

  Matrix current = incomplete.values;
  for (Eigen::Index c = 0; c < k; ++c)
    for (Eigen::Index i = 0; i < n; ++i)
      if (!incomplete.observed(i, c)) current(i, c) = 0.0;
  if (visit.empty()) return current;

  Matrix design(n, k - 1 + extra);
  if (extra > 0) design.rightCols(extra) = *features;

  for (int round = 0; round < cfg.rounds; ++round) {
    for (const auto& [missing, c] : visit) {
      std::vector<Eigen::Index> obs_rows, miss_rows;
      for (Eigen::Index i = 0; i < n; ++i) (incomplete.observed(i, c) ? obs_rows : miss_rows).push_back(i);
      Vector y(static_cast<Eigen::Index>(obs_rows.size()));
      for (std::size_t t = 0; t < obs_rows.size(); ++t) y(static_cast<Eigen::Index>(t)) = current(obs_rows[t], c);

      if (design.cols() == 0) {
        const double mean = y.mean();
        for (Eigen::Index i : miss_rows) current(i, c) = mean;
        continue;
      }
      for (Eigen::Index j = 0, out = 0; j < k; ++j)
        if (j != c) design.col(out++) = current.col(j);
      Matrix Xo(static_cast<Eigen::Index>(obs_rows.size()), design.cols());
      Matrix Xm(static_cast<Eigen::Index>(miss_rows.size()), design.cols());
      for (std::size_t t = 0; t < obs_rows.size(); ++t) Xo.row(static_cast<Eigen::Index>(t)) = design.row(obs_rows[t]);
      for (std::size_t t = 0; t < miss_rows.size(); ++t) Xm.row(static_cast<Eigen::Index>(t)) = design.row(miss_rows[t]);

      Vector pred;
      try {
        pred = ridge_fit_auto(Xo, y, cfg.lambda_grid).predict(Xm);
      } catch (const Error&) {
        // regressors carry no variation on the observed rows: fall back to the mean
        pred = Vector::Constant(Xm.rows(), y.mean());
      }
      for (std::size_t t = 0; t < miss_rows.size(); ++t) current(miss_rows[t], c) = pred(static_cast<Eigen::Index>(t));
    }
  }
  return current;
}

Matrix mice_impute(const MaskedDataset& dm, const EmbeddingMatrix* generic, const ImputeConfig& cfg) {
  if (!cfg.augment) return mice_impute(dm.masked, nullptr, cfg);
  if (!generic) throw Error("embedding-augmented imputation needs generic embeddings");
  const Matrix features = embedding_features(dm.masked.entity_ids, *generic, cfg.components);
  return mice_impute(dm.masked, &features, cfg);
}

double evaluate_imputation(const Matrix& completed, const Matrix& original, const MaskPlan& plan) {
  if (plan.cells.empty()) return 0.0;
  double total = 0.0;
  for (const auto& cell : plan.cells) {
    const auto r = static_cast<Eigen::Index>(cell.row), c = static_cast<Eigen::Index>(cell.col);
    if (r >= completed.rows() || c >= completed.cols() || r >= original.rows() || c >= original.cols())
      throw Error("imputation evaluation: plan cell outside the table");
    total += std::abs(completed(r, c) - original(r, c));
  }
  return total / static_cast<double>(plan.cells.size());
}

ImputeReport run_experiment_grid(const ImputeTable& table, const Matrix& features,
                                 const ImputeGrid& grid, int reps, std::uint64_t seed,
                                 const ImputeConfig& cfg, unsigned jobs, std::string dataset_name) {
  if (reps < 1) throw Error("imputation grid needs reps >= 1");
  if (features.rows() != table.rows()) throw Error("imputation: feature rows do not match the table");
  ImputeReport report;
  report.dataset = std::move(dataset_name);
  const std::size_t n_cells = grid.ks.size() * grid.ps.size();
  const auto r = static_cast<std::size_t>(reps);
  report.runs.resize(n_cells * r);

  ImputeConfig base = cfg;
  base.augment = false;
  ImputeConfig augmented = cfg;
  augmented.augment = true;

  parallel_for(report.runs.size(), jobs, [&](std::size_t item) {
    const std::size_t cell = item / r, rep = item % r;
    const std::size_t k = grid.ks[cell / grid.ps.size()];
    const double p = grid.ps[cell % grid.ps.size()];
    // one seed per (k, p, rep) so every replication is reproducible on its own
    const std::uint64_t plan_seed = make_stream(seed, cell, rep)();
    ImputeRun run;
    run.k = k;
    run.p = p;
    run.rep = static_cast<int>(rep);
    run.plan = make_mask_plan(table, k, p, plan_seed);
    const MaskedDataset dm = apply_mask(table, run.plan);
    run.mae_baseline = evaluate_imputation(mice_impute(dm.masked, nullptr, base), dm.original.values, run.plan);
    run.mae_embedding =
        evaluate_imputation(mice_impute(dm.masked, &features, augmented), dm.original.values, run.plan);
    report.runs[item] = std::move(run);
  });
  return report;
}

void write_impute_csv(const ImputeReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"dataset", "k", "p", "rep", "mae_baseline", "mae_embedding"});
  for (const auto& run : report.runs)
    csv::write_row(out, {report.dataset, std::to_string(run.k), csv::format_number(run.p),
                         std::to_string(run.rep), csv::format_number(run.mae_baseline),
                         csv::format_number(run.mae_embedding)});
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace latent_probe
