#include "latent_probe/probe_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "latent_probe/correlation.hpp"
#include "latent_probe/csv.hpp"
#include "latent_probe/pca.hpp"

namespace latent_probe {

namespace {

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Vector to_vector(std::span<const double> v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string lambda_policy(const std::vector<double>& grid) {
  if (grid.size() == 1) return "fixed:" + csv::format_number(grid.front());
  std::string s = "loo:";
  for (std::size_t i = 0; i < grid.size(); ++i) s += (i ? ";" : "") + csv::format_number(grid[i]);
  return s;
}

std::string opt_number(const std::optional<double>& v) {
  return v ? csv::format_number(*v) : "";
}

double median(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Feature matrix for all dataset rows (PCA scores when configured with the
// all-observation protocol).
Matrix dataset_features(const Dataset& ds, const EmbeddingMatrix& embeddings,
                        const ProbeConfig& cfg) {
  const auto perm = align(ds, embeddings);
  Matrix X = embeddings.gather(perm);
  if (cfg.pca_components && !cfg.strict_pca) {
    const PcaModel pca = pca_fit(X, *cfg.pca_components);
    X = pca_transform(pca, X);
  }
  return X;
}

// Ridge fit on `train` rows of `features` and predictions for `test` rows.
std::pair<Vector, double> fit_predict(const Matrix& features, std::span<const std::size_t> train,
                                      std::span<const double> y_train,
                                      std::span<const std::size_t> test, const ProbeConfig& cfg) {
  Matrix Xtr = select_rows(features, train);
  Matrix Xte = select_rows(features, test);
  if (cfg.pca_components && cfg.strict_pca) {
    const PcaModel pca = pca_fit(Xtr, *cfg.pca_components);
    Xtr = pca_transform(pca, Xtr);
    Xte = pca_transform(pca, Xte);
  }
  const RidgeModel model = ridge_fit_auto(Xtr, to_vector(y_train), cfg.lambda_grid);
  return {model.predict(Xte), model.lambda};
}

}  // namespace

int FoldPlan::fold_of(const std::string& group) const {
  auto it = assignment.find(group);
  if (it == assignment.end()) throw Error("group '" + group + "' not in fold plan");
  return it->second;
}

FoldPlan make_grouped_folds(std::span<const std::string> groups, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw Error("grouped CV needs at least 2 folds");
  const std::set<std::string> distinct(groups.begin(), groups.end());
  if (distinct.size() < static_cast<std::size_t>(n_folds))
    throw Error("fewer groups (" + std::to_string(distinct.size()) + ") than folds (" +
                std::to_string(n_folds) + ")");
  std::vector<std::string> order(distinct.begin(), distinct.end());
  auto rng = make_stream(seed, 0, 0xF01D);
  std::shuffle(order.begin(), order.end(), rng);
  FoldPlan plan;
  plan.n_folds = n_folds;
  plan.seed = seed;
  for (std::size_t i = 0; i < order.size(); ++i)
    plan.assignment[order[i]] = static_cast<int>(i % static_cast<std::size_t>(n_folds));
  return plan;
}

EvaluableRows evaluable_rows(const Dataset& ds, const std::string& variable,
                             const TextEstimates* text) {
  const VariableColumn& col = ds.column(variable);
  std::vector<std::optional<double>> text_raw;
  if (text) text_raw = text->aligned_to(ds);
  EvaluableRows ev;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!col.values[i]) continue;
    std::optional<double> t;
    if (text) {
      const auto& raw = text_raw[i];
      if (!raw || !within_bounds(col.spec, *raw) || !transformable(col.spec.transform, *raw))
        continue;
      t = apply_transform(col.spec, *raw);
    }
    ev.rows.push_back(i);
    ev.truth.push_back(apply_transform(col.spec, *col.values[i]));
    ev.text.push_back(t);
  }
  return ev;
}

std::vector<std::optional<double>> CvReport::predictions_by_row(std::size_t n) const {
  std::vector<std::optional<double>> out(n);
  for (std::size_t i = 0; i < rows.size(); ++i) out.at(rows[i]) = predictions[i];
  return out;
}

CvReport run_cv(const Dataset& ds, const EmbeddingMatrix& embeddings, const std::string& variable,
                const TextEstimates* text, const ProbeConfig& cfg) {
  const EvaluableRows ev = evaluable_rows(ds, variable, text);
  const std::size_t n_eval = ev.rows.size();
  if (n_eval < 3 * static_cast<std::size_t>(std::max(cfg.n_folds, 1)))
    throw Error("insufficient evaluable rows for '" + variable + "': " + std::to_string(n_eval));

  const Matrix features = dataset_features(ds, embeddings, cfg);
  std::vector<std::string> groups;
  groups.reserve(n_eval);
  for (std::size_t r : ev.rows) groups.push_back(ds.group_ids[r]);
  const FoldPlan plan = make_grouped_folds(groups, cfg.n_folds, cfg.seed);

  CvReport report;
  report.variable = variable;
  report.n_evaluated = n_eval;
  report.layer = embeddings.layer;
  report.pca_components = cfg.pca_components;
  report.strict_pca = cfg.strict_pca;
  report.n_folds = cfg.n_folds;
  report.seed = cfg.seed;
  report.lambda_policy = lambda_policy(cfg.lambda_grid);
  report.rows = ev.rows;
  report.truth = ev.truth;
  report.text = ev.text;
  report.fold.resize(n_eval);
  for (std::size_t i = 0; i < n_eval; ++i) report.fold[i] = plan.fold_of(groups[i]);

  std::vector<double> oof(n_eval, std::numeric_limits<double>::quiet_NaN());
  std::vector<int> times_predicted(n_eval, 0);
  report.per_fold.resize(static_cast<std::size_t>(cfg.n_folds));

  parallel_for(static_cast<std::size_t>(cfg.n_folds), cfg.jobs, [&](std::size_t f) {
    std::vector<std::size_t> train, test, test_pos;
    std::vector<double> y_train;
    for (std::size_t i = 0; i < n_eval; ++i) {
      if (report.fold[i] == static_cast<int>(f)) {
        test.push_back(ev.rows[i]);
        test_pos.push_back(i);
      } else {
        train.push_back(ev.rows[i]);
        y_train.push_back(ev.truth[i]);
      }
    }
    auto [pred, lambda] = fit_predict(features, train, y_train, test, cfg);
    FoldMetrics fm;
    fm.fold = static_cast<int>(f);
    fm.n_test = test.size();
    fm.lambda = lambda;
    std::vector<double> truth_f, pred_f, text_f, truth_ft;
    for (std::size_t t = 0; t < test_pos.size(); ++t) {
      const std::size_t i = test_pos[t];
      oof[i] = pred(static_cast<Eigen::Index>(t));
      ++times_predicted[i];  // each i belongs to exactly one fold
      truth_f.push_back(ev.truth[i]);
      pred_f.push_back(oof[i]);
      if (ev.text[i]) {
        text_f.push_back(*ev.text[i]);
        truth_ft.push_back(ev.truth[i]);
      }
    }
    fm.spearman_lme = try_spearman(pred_f, truth_f);
    if (text) fm.spearman_text = try_spearman(text_f, truth_ft);
    report.per_fold[f] = fm;
  });

  for (int c : times_predicted)
    if (c != 1) throw Error("internal: out-of-fold prediction count " + std::to_string(c));
  report.predictions = oof;
  report.spearman_lme = spearman(oof, ev.truth);
  report.pearson_lme = pearson(oof, ev.truth);
  if (text) {
    std::vector<double> t(n_eval);
    for (std::size_t i = 0; i < n_eval; ++i) t[i] = *ev.text[i];
    // identical row set for both methods by construction of `ev`
    report.spearman_text = try_spearman(t, ev.truth);
    report.pearson_text = try_pearson(t, ev.truth);
  }
  return report;
}

LearningCurve learning_curve(const Dataset& ds, const EmbeddingMatrix& embeddings,
                             const std::string& variable, std::span<const std::size_t> sizes,
                             int repetitions, std::uint64_t seed, const ProbeConfig& cfg,
                             const TextEstimates* text) {
  if (repetitions < 1) throw Error("learning curve needs repetitions >= 1");
  if (sizes.empty()) throw Error("learning curve needs at least one size");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 3) throw Error("learning curve sizes must be >= 3");
    if (i && sizes[i] <= sizes[i - 1]) throw Error("learning curve sizes must be strictly increasing");
  }
  const EvaluableRows ev = evaluable_rows(ds, variable, text);
  constexpr std::size_t kMinTest = 3;
  if (ev.rows.size() < kMinTest || sizes.back() > ev.rows.size() - kMinTest)
    throw Error("learning curve size " + std::to_string(sizes.back()) + " unreachable with " +
                std::to_string(ev.rows.size()) + " evaluable rows");

  const Matrix features = dataset_features(ds, embeddings, cfg);
  std::map<std::string, std::vector<std::size_t>> by_group;  // group -> positions in ev
  for (std::size_t i = 0; i < ev.rows.size(); ++i) by_group[ds.group_ids[ev.rows[i]]].push_back(i);
  std::vector<std::string> group_names;
  for (const auto& [g, _] : by_group) group_names.push_back(g);

  LearningCurve curve;
  curve.variable = variable;
  curve.sizes.assign(sizes.begin(), sizes.end());
  curve.repetitions = repetitions;
  curve.values.assign(sizes.size(), std::vector<double>(static_cast<std::size_t>(repetitions)));

  const std::size_t reps = static_cast<std::size_t>(repetitions);
  parallel_for(sizes.size() * reps, cfg.jobs, [&](std::size_t item) {
    const std::size_t si = item / reps, rep = item % reps;
    const std::size_t target = sizes[si];
    auto rng = make_stream(seed, si, rep + 1);
    std::vector<std::string> order = group_names;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> train_pos, test_pos;
    std::size_t g = 0;
    for (; g < order.size() && train_pos.size() < target; ++g) {
      std::vector<std::size_t> members = by_group.at(order[g]);
      const std::size_t need = target - train_pos.size();
      if (members.size() > need) {
        std::shuffle(members.begin(), members.end(), rng);
        members.resize(need);
        std::sort(members.begin(), members.end());
      }
      train_pos.insert(train_pos.end(), members.begin(), members.end());
    }
    for (; g < order.size(); ++g) {
      const auto& members = by_group.at(order[g]);
      test_pos.insert(test_pos.end(), members.begin(), members.end());
    }
    if (train_pos.size() < target || test_pos.size() < kMinTest)
      throw Error("learning curve size " + std::to_string(target) + " unreachable");

    std::vector<std::size_t> train, test;
    std::vector<double> y_train, y_test;
    for (std::size_t p : train_pos) {
      train.push_back(ev.rows[p]);
      y_train.push_back(ev.truth[p]);
    }
    for (std::size_t p : test_pos) {
      test.push_back(ev.rows[p]);
      y_test.push_back(ev.truth[p]);
    }
    double value = std::numeric_limits<double>::quiet_NaN();
    try {
      auto [pred, lambda] = fit_predict(features, train, y_train, test, cfg);
      (void)lambda;
      std::vector<double> p(pred.data(), pred.data() + pred.size());
      value = try_spearman(p, y_test).value_or(value);
    } catch (const Error&) {
      // constant training target in a tiny sample: metric undefined
    }
    curve.values[si][rep] = value;
  });

  for (const auto& v : curve.values) curve.medians.push_back(median(v));
  if (text) {
    std::vector<double> t, y;
    for (std::size_t i = 0; i < ev.rows.size(); ++i) {
      t.push_back(*ev.text[i]);
      y.push_back(ev.truth[i]);
    }
    curve.text_baseline = try_spearman(t, y);
  }
  return curve;
}

GroupMetrics per_group_metrics(const Dataset& ds, std::span<const std::optional<double>> predictions,
                               const std::string& variable, std::size_t min_group_size,
                               const TextEstimates* text) {
  if (predictions.size() != ds.size()) throw Error("per-group metrics: prediction length mismatch");
  const EvaluableRows ev = evaluable_rows(ds, variable, text);
  struct Acc {
    std::vector<double> truth, pred, text;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t i = 0; i < ev.rows.size(); ++i) {
    const std::size_t r = ev.rows[i];
    if (!predictions[r]) continue;
    Acc& a = acc[ds.group_ids[r]];
    a.truth.push_back(ev.truth[i]);
    a.pred.push_back(*predictions[r]);
    if (ev.text[i]) a.text.push_back(*ev.text[i]);
  }
  GroupMetrics out;
  for (const auto& [group, a] : acc) {
    if (a.truth.size() < min_group_size) continue;
    const auto lme = try_spearman(a.pred, a.truth);
    if (!lme) {
      out.notes.push_back(group + ": correlation undefined (constant values), omitted");
      continue;
    }
    GroupScore s;
    s.n = a.truth.size();
    s.spearman_lme = *lme;
    if (text) {
      s.spearman_text = try_spearman(a.text, a.truth);
      if (!s.spearman_text) out.notes.push_back(group + ": text correlation undefined");
    }
    out.groups.emplace(group, s);
  }
  return out;
}

std::map<std::string, std::pair<std::size_t, std::size_t>> count_unique_per_group(
    const Dataset& ds, const TextEstimates* text, const std::string& variable) {
  const VariableColumn& col = ds.column(variable);
  std::vector<std::optional<double>> t;
  if (text) t = text->aligned_to(ds);
  std::map<std::string, std::pair<std::set<double>, std::set<double>>> sets;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& entry = sets[ds.group_ids[i]];
    if (!col.values[i]) continue;
    if (text) {
      if (!t[i] || !within_bounds(col.spec, *t[i])) continue;
      entry.second.insert(*t[i]);
    }
    entry.first.insert(*col.values[i]);
  }
  std::map<std::string, std::pair<std::size_t, std::size_t>> out;
  for (const auto& [g, s] : sets) out[g] = {s.first.size(), s.second.size()};
  return out;
}

void write_cv_csv(std::span<const CvReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"variable", "n_evaluated", "spearman_lme", "spearman_text", "pearson_lme",
                       "pearson_text", "layer", "pca_components", "strict_pca", "n_folds", "seed",
                       "lambda_policy"});
  for (const auto& r : reports)
    csv::write_row(out, {r.variable, std::to_string(r.n_evaluated), csv::format_number(r.spearman_lme),
                         opt_number(r.spearman_text), csv::format_number(r.pearson_lme),
                         opt_number(r.pearson_text), std::to_string(r.layer),
                         r.pca_components ? std::to_string(*r.pca_components) : "none",
                         r.strict_pca ? "true" : "false", std::to_string(r.n_folds),
                         std::to_string(r.seed), r.lambda_policy});
  if (!out) throw Error("write failed for " + path.string());
}

std::string cv_reports_json(std::span<const CvReport> reports) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.per_fold)
      folds.push_back({{"fold", f.fold},
                       {"n_test", f.n_test},
                       {"lambda", f.lambda},
                       {"spearman_lme", opt(f.spearman_lme)},
                       {"spearman_text", opt(f.spearman_text)}});
    doc.push_back({{"variable", r.variable},
                   {"n_evaluated", r.n_evaluated},
                   {"spearman_lme", r.spearman_lme},
                   {"spearman_text", opt(r.spearman_text)},
                   {"pearson_lme", r.pearson_lme},
                   {"pearson_text", opt(r.pearson_text)},
                   {"per_fold", folds},
                   {"config",
                    {{"layer", r.layer},
                     {"pca_components", r.pca_components ? nlohmann::json(*r.pca_components) : nlohmann::json()},
                     {"strict_pca", r.strict_pca},
                     {"n_folds", r.n_folds},
                     {"seed", r.seed},
                     {"lambda_policy", r.lambda_policy}}}});
  }
  return doc.dump(2) + "\n";
}

void write_cv_predictions_csv(const Dataset& ds, std::span<const CvReport> reports,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"entity_id", "group", "variable", "fold", "truth", "lme", "text"});
  for (const auto& r : reports)
    for (std::size_t i = 0; i < r.rows.size(); ++i)
      csv::write_row(out, {ds.entity_ids[r.rows[i]], ds.group_ids[r.rows[i]], r.variable,
                           std::to_string(r.fold[i]), csv::format_number(r.truth[i]),
                           csv::format_number(r.predictions[i]), opt_number(r.text[i])});
  if (!out) throw Error("write failed for " + path.string());
}

void write_learning_curve_csv(std::span<const LearningCurve> curves,
                              const std::filesystem::path& values_path,
                              const std::filesystem::path& summary_path) {
  std::ofstream values(values_path, std::ios::binary);
  std::ofstream summary(summary_path, std::ios::binary);
  if (!values || !summary) throw Error("cannot write learning curve reports");
  csv::write_row(values, {"variable", "size", "rep", "spearman_lme"});
  csv::write_row(summary, {"variable", "size", "median_spearman_lme", "spearman_text"});
  for (const auto& c : curves)
    for (std::size_t s = 0; s < c.sizes.size(); ++s) {
      for (std::size_t r = 0; r < c.values[s].size(); ++r)
        csv::write_row(values, {c.variable, std::to_string(c.sizes[s]), std::to_string(r),
                                csv::format_number(c.values[s][r])});
      csv::write_row(summary, {c.variable, std::to_string(c.sizes[s]), csv::format_number(c.medians[s]),
                               opt_number(c.text_baseline)});
    }
  if (!values || !summary) throw Error("write failed for learning curve reports");
}

}  // namespace latent_probe
