#include "latent_probe/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "latent_probe/common.hpp"
#include "latent_probe/correlation.hpp"
#include "latent_probe/csv.hpp"
#include "latent_probe/dataset.hpp"
#include "latent_probe/embedding_store.hpp"
#include "latent_probe/impute.hpp"
#include "latent_probe/probe_eval.hpp"
#include "latent_probe/superres.hpp"
#include "latent_probe/synth.hpp"
#include "latent_probe/textnum.hpp"
#include "latent_probe/transfer.hpp"

namespace latent_probe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Kind { text, integer, seed, real, flag, integers, reals };

struct OptionSpec {
  std::string key;
  Kind kind;
  json fallback;
  std::string help;
};

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

template <class T>
T parse_scalar(const std::string& key, const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty())
    throw UsageError("invalid value '" + s + "' for " + flag_name(key));
  return v;
}

json parse_flag_value(const OptionSpec& spec, const std::string& s) {
  switch (spec.kind) {
    case Kind::text: return s;
    case Kind::integer: return parse_scalar<long long>(spec.key, s);
    case Kind::seed: return parse_scalar<std::uint64_t>(spec.key, s);
    case Kind::real: return parse_scalar<double>(spec.key, s);
    case Kind::flag: return s == "true" || s == "1";
    case Kind::integers: {
      json arr = json::array();
      for (const auto& p : split_list(s)) arr.push_back(parse_scalar<long long>(spec.key, p));
      return arr;
    }
    case Kind::reals: {
      json arr = json::array();
      for (const auto& p : split_list(s)) arr.push_back(parse_scalar<double>(spec.key, p));
      return arr;
    }
  }
  return nullptr;
}

std::uint64_t env_seed() {
  const char* s = std::getenv("LATENT_PROBE_SEED");
  if (!s || !*s) return 0;
  std::uint64_t v = 0;
  const std::string str(s);
  auto [ptr, ec] = std::from_chars(str.data(), str.data() + str.size(), v);
  if (ec != std::errc() || ptr != str.data() + str.size())
    throw UsageError("LATENT_PROBE_SEED is not an unsigned integer: " + str);
  return v;
}

json to_json_list(const std::vector<double>& v) { return json(v); }

std::vector<OptionSpec> common_options() {
  return {
      {"out", Kind::text, "", "output directory"},
      {"jobs", Kind::integer, 0, "worker threads (0 = all cores)"},
      {"seed", Kind::seed, 0, "master seed (default: LATENT_PROBE_SEED or 0)"},
  };
}

std::vector<OptionSpec> probe_inputs() {
  return {
      {"dataset", Kind::text, "", "dataset CSV"},
      {"manifest", Kind::text, "", "variable manifest JSON"},
      {"embeddings_dir", Kind::text, "", "directory of .lmeb files"},
      {"variable", Kind::text, "", "comma-separated variables (default: all)"},
      {"text", Kind::text, "", "text estimates CSV for the comparison"},
      {"layer", Kind::integer, -1, "embedding layer (-1 = the only one present)"},
  };
}

std::map<std::string, std::vector<OptionSpec>> command_options() {
  std::map<std::string, std::vector<OptionSpec>> m;
  auto with = [](std::vector<OptionSpec> a, const std::vector<OptionSpec>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  m["cv"] = with(probe_inputs(), {
      {"folds", Kind::integer, 5, "number of grouped folds"},
      {"pca_components", Kind::integer, 0, "PCA components before ridge (0 = none)"},
      {"strict_pca", Kind::flag, false, "fit PCA inside each training fold"},
      {"lambda_grid", Kind::reals, to_json_list(kDefaultLambdaGrid), "ridge penalties"},
      {"min_group_size", Kind::integer, 0, "write per-group metrics for groups this large (0 = off)"},
  });
  m["learning-curve"] = with(probe_inputs(), {
      {"sizes", Kind::integers, json(kDefaultCurveSizes), "training sample sizes"},
      {"reps", Kind::integer, 10, "repetitions per size"},
      {"pca_components", Kind::integer, 0, "PCA components before ridge (0 = none)"},
      {"lambda_grid", Kind::reals, to_json_list(kDefaultLambdaGrid), "ridge penalties"},
  });
  m["transfer"] = with(probe_inputs(), {
      {"mode", Kind::text, "both", "exclude_target, noisy_target or both"},
      {"model", Kind::text, "mlp", "mlp or ridge"},
      {"lr", Kind::real, 1e-5, "Adam learning rate"},
      {"epochs", Kind::integer, 20, "training epochs"},
      {"batch_size", Kind::integer, 128, "minibatch size"},
      {"dropout", Kind::real, 0.5, "dropout after the first hidden layer"},
      {"lambda_grid", Kind::reals, to_json_list(kDefaultLambdaGrid), "ridge penalties"},
  });
  m["impute"] = {
      {"dataset", Kind::text, "", "dataset CSV"},
      {"manifest", Kind::text, "", "variable manifest JSON"},
      {"embeddings", Kind::text, "", "generic-prompt .lmeb file"},
      {"embeddings_dir", Kind::text, "", "directory holding the generic-prompt embeddings"},
      {"layer", Kind::integer, -1, "embedding layer (-1 = the only one present)"},
      {"ks", Kind::integers, json::array({1, 2, 5}), "numbers of masked columns"},
      {"ps", Kind::reals, json::array({0.1, 0.25, 0.5}), "masked share per column"},
      {"reps", Kind::integer, 25, "replications per cell"},
      {"rounds", Kind::integer, 10, "imputation rounds"},
      {"components", Kind::integer, 25, "principal components of the embeddings"},
      {"lambda_grid", Kind::reals, to_json_list(kImputeLambdaGrid), "ridge penalties"},
      {"name", Kind::text, "dataset", "dataset label in the report"},
  };
  m["superres"] = {
      {"high_dataset", Kind::text, "", "coarse-level dataset CSV"},
      {"high_manifest", Kind::text, "", "coarse-level manifest"},
      {"high_embeddings_dir", Kind::text, "", "coarse-level embeddings"},
      {"low_dataset", Kind::text, "", "fine-level dataset CSV (truth for scoring only)"},
      {"low_manifest", Kind::text, "", "fine-level manifest"},
      {"low_embeddings_dir", Kind::text, "", "fine-level embeddings"},
      {"mapping", Kind::text, "", "low_id,high_id CSV for the naive baseline"},
      {"variable", Kind::text, "", "comma-separated variables (default: all)"},
      {"text", Kind::text, "", "fine-level text estimates CSV"},
      {"layer", Kind::integer, -1, "embedding layer (-1 = the only one present)"},
      {"lambda_grid", Kind::reals, to_json_list(kDefaultLambdaGrid), "ridge penalties"},
  };
  m["parse-text"] = {
      {"answers", Kind::text, "", "CSV entity_id,variable,text"},
      {"manifest", Kind::text, "", "variable manifest JSON"},
      {"strategy", Kind::text, "completion", "prompt kind that produced the answers"},
  };
  m["synth"] = {
      {"preset", Kind::text, "shared", "shared, independent, two-level, impute or impute-null"},
      {"n", Kind::integer, 500, "entities"},
      {"d", Kind::integer, 64, "embedding dimension"},
      {"n_groups", Kind::integer, 10, "groups"},
      {"n_vars", Kind::integer, 5, "variables"},
      {"noise_sd", Kind::real, 0.1, "target noise"},
      {"text_bias", Kind::real, 0.5, "pseudo-text bias"},
      {"text_noise", Kind::real, 0.5, "pseudo-text noise"},
      {"text_clusters", Kind::integer, 8, "pseudo-text levels (0 = continuous)"},
      {"n_high", Kind::integer, 50, "coarse entities (two-level)"},
      {"n_low", Kind::integer, 1000, "fine entities (two-level)"},
      {"parent_share", Kind::real, 0.8, "parent weight in fine embeddings (two-level)"},
  };
  for (auto& [name, specs] : m) {
    auto common = common_options();
    specs.insert(specs.begin(), common.begin(), common.end());
  }
  return m;
}

const std::map<std::string, std::string> kDescriptions{
    {"cv", "grouped cross-validation of ridge probes against text estimates"},
    {"learning-curve", "probe accuracy as a function of training size"},
    {"transfer", "predict a variable from probes trained on the other variables"},
    {"impute", "masked-cell imputation with and without embedding features"},
    {"superres", "train on coarse entities, predict fine ones"},
    {"parse-text", "extract numeric estimates from answer text"},
    {"synth", "write a synthetic world with known ground truth"},
};

// Keys accepted only from a config document.
const std::map<std::string, std::vector<std::string>> kConfigOnly{{"transfer", {"train_sets"}}};

json load_config_document(const fs::path& path) {
  if (!fs::exists(path)) throw Error("config file " + path.string() + " does not exist");
  std::ifstream in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (doc.is_object() && doc.contains("config") && doc["config"].is_object()) doc = doc["config"];
  if (!doc.is_object()) throw Error("config file " + path.string() + " must hold a JSON object");
  return doc;
}

// ---------------------------------------------------------------------------

class Context {
 public:
  Context(std::string command, json cfg, bool force, std::ostream& out, std::ostream& err)
      : command_(std::move(command)), cfg_(std::move(cfg)), force_(force), out_(out), err_(err) {
    const std::string dir = str("out");
    if (dir.empty()) throw UsageError("--out is required");
    out_dir_ = dir;
    meta_path_ = output("run.meta");
  }

  const json& cfg() const { return cfg_; }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }

  std::string str(const std::string& key) const { return cfg_.at(key).get<std::string>(); }
  long long integer(const std::string& key) const { return cfg_.at(key).get<long long>(); }
  double real(const std::string& key) const { return cfg_.at(key).get<double>(); }
  bool flag(const std::string& key) const { return cfg_.at(key).get<bool>(); }
  std::uint64_t seed() const { return cfg_.at("seed").get<std::uint64_t>(); }
  unsigned jobs() const {
    const long long j = integer("jobs");
    if (j < 0) throw Error("jobs must be >= 0");
    return j == 0 ? std::max(1u, std::thread::hardware_concurrency()) : static_cast<unsigned>(j);
  }
  std::vector<double> reals(const std::string& key) const { return cfg_.at(key).get<std::vector<double>>(); }
  std::optional<std::uint32_t> layer() const {
    const long long l = integer("layer");
    if (l < 0) return std::nullopt;
    return static_cast<std::uint32_t>(l);
  }

  fs::path input(const std::string& key) const {
    const std::string p = str(key);
    if (p.empty()) throw UsageError(flag_name(key) + " is required");
    if (!fs::exists(p)) throw Error(key + " file " + p + " does not exist");
    return p;
  }
  std::optional<fs::path> optional_input(const std::string& key) const {
    if (str(key).empty()) return std::nullopt;
    return input(key);
  }

  // Claims an output file, refusing to replace an existing one without --force.
  fs::path output(const std::string& name) {
    const fs::path p = out_dir_ / name;
    if (fs::exists(p) && !force_) throw Error("refusing to overwrite " + p.string() + " (use --force)");
    outputs_.push_back(name);
    return p;
  }
  const fs::path& out_dir() const { return out_dir_; }

  void prepare() { fs::create_directories(out_dir_); }

  void write_meta() {
    const fs::path& p = meta_path_;
    json meta{{"command", command_},
              {"config", cfg_},
              {"seed", seed()},
              {"version", kVersion},
              {"outputs", outputs_}};
    std::ofstream o(p, std::ios::binary);
    if (!o) throw Error("cannot write " + p.string());
    o << meta.dump(2) << '\n';
  }

 private:
  std::string command_;
  json cfg_;
  bool force_;
  std::ostream& out_;
  std::ostream& err_;
  fs::path out_dir_;
  fs::path meta_path_;
  std::vector<std::string> outputs_;
};

std::vector<std::string> selected_variables(const Context& ctx, const Dataset& ds) {
  const std::string v = ctx.str("variable");
  std::vector<std::string> names;
  if (v.empty()) {
    for (const auto& col : ds.columns) names.push_back(col.spec.name);
  } else {
    for (auto& name : split_list(v)) {
      ds.column(name);  // throws for unknown variables
      names.push_back(name);
    }
  }
  return names;
}

std::map<std::string, TextEstimates> load_text(const Context& ctx) {
  auto p = ctx.optional_input("text");
  if (!p) return {};
  return read_text_estimates(*p);
}

const TextEstimates* find_text(const std::map<std::string, TextEstimates>& text, const std::string& var) {
  auto it = text.find(var);
  return it == text.end() ? nullptr : &it->second;
}

EmbeddingMatrix completion_embeddings(const fs::path& dir, const std::string& var,
                                      std::optional<std::uint32_t> layer) {
  return read_embeddings(find_embeddings(dir, PromptKind::completion, var, layer));
}

std::string fmt(std::optional<double> v) { return v ? csv::format_number(*v) : "NA"; }

void cmd_cv(Context& ctx) {
  const Dataset ds = load_dataset(ctx.input("dataset"), ctx.input("manifest"));
  const fs::path emb_dir = ctx.input("embeddings_dir");
  const auto text = load_text(ctx);
  ProbeConfig cfg;
  cfg.n_folds = static_cast<int>(ctx.integer("folds"));
  if (const long long k = ctx.integer("pca_components"); k > 0) cfg.pca_components = static_cast<int>(k);
  cfg.strict_pca = ctx.flag("strict_pca");
  cfg.lambda_grid = ctx.reals("lambda_grid");
  cfg.seed = ctx.seed();
  cfg.jobs = ctx.jobs();
  const long long min_group = ctx.integer("min_group_size");

  const fs::path csv_path = ctx.output("cv.csv");
  const fs::path json_path = ctx.output("cv.json");
  const fs::path pred_path = ctx.output("cv_predictions.csv");
  const std::optional<fs::path> group_path =
      min_group > 0 ? std::optional(ctx.output("cv_groups.csv")) : std::nullopt;
  ctx.prepare();

  std::vector<CvReport> reports;
  std::vector<GroupMetrics> groups;
  for (const auto& var : selected_variables(ctx, ds)) {
    const EmbeddingMatrix e = completion_embeddings(emb_dir, var, ctx.layer());
    const TextEstimates* t = find_text(text, var);
    reports.push_back(run_cv(ds, e, var, t, cfg));
    const CvReport& r = reports.back();
    ctx.out() << var << ": n=" << r.n_evaluated << " spearman_lme=" << csv::format_number(r.spearman_lme)
              << " spearman_text=" << fmt(r.spearman_text) << '\n';
    if (group_path)
      groups.push_back(per_group_metrics(ds, r.predictions_by_row(ds.size()), var,
                                         static_cast<std::size_t>(min_group), t));
  }
  write_cv_csv(reports, csv_path);
  {
    std::ofstream o(json_path, std::ios::binary);
    o << cv_reports_json(reports) << '\n';
  }
  write_cv_predictions_csv(ds, reports, pred_path);
  if (group_path) {
    std::ofstream o(*group_path, std::ios::binary);
    csv::write_row(o, {"variable", "group", "n", "spearman_lme", "spearman_text"});
    for (std::size_t i = 0; i < reports.size(); ++i) {
      for (const auto& [g, s] : groups[i].groups)
        csv::write_row(o, {reports[i].variable, g, std::to_string(s.n), csv::format_number(s.spearman_lme),
                           fmt(s.spearman_text)});
      for (const auto& note : groups[i].notes) ctx.err() << reports[i].variable << ": " << note << '\n';
    }
  }
}

void cmd_learning_curve(Context& ctx) {
  const Dataset ds = load_dataset(ctx.input("dataset"), ctx.input("manifest"));
  const fs::path emb_dir = ctx.input("embeddings_dir");
  const auto text = load_text(ctx);
  ProbeConfig cfg;
  if (const long long k = ctx.integer("pca_components"); k > 0) cfg.pca_components = static_cast<int>(k);
  cfg.lambda_grid = ctx.reals("lambda_grid");
  cfg.seed = ctx.seed();
  cfg.jobs = ctx.jobs();
  const auto sizes = ctx.cfg().at("sizes").get<std::vector<std::size_t>>();
  const int reps = static_cast<int>(ctx.integer("reps"));

  const fs::path values_path = ctx.output("learning_curve.csv");
  const fs::path summary_path = ctx.output("learning_curve_summary.csv");
  ctx.prepare();
  std::vector<LearningCurve> curves;
  for (const auto& var : selected_variables(ctx, ds)) {
    const EmbeddingMatrix e = completion_embeddings(emb_dir, var, ctx.layer());
    curves.push_back(learning_curve(ds, e, var, sizes, reps, ctx.seed(), cfg, find_text(text, var)));
    const LearningCurve& c = curves.back();
    ctx.out() << var << ":";
    for (std::size_t i = 0; i < c.sizes.size(); ++i)
      ctx.out() << ' ' << c.sizes[i] << '=' << csv::format_number(c.medians[i]);
    ctx.out() << '\n';
  }
  write_learning_curve_csv(curves, values_path, summary_path);
}

struct LoadedSource {
  Dataset dataset;
  EmbeddingMatrix embeddings;
  std::string variable;
};

void cmd_transfer(Context& ctx) {
  const Dataset ds = load_dataset(ctx.input("dataset"), ctx.input("manifest"));
  const fs::path emb_dir = ctx.input("embeddings_dir");
  const auto text = load_text(ctx);
  TransferSettings settings;
  settings.model = parse_transfer_model(ctx.str("model"));
  settings.train.learning_rate = ctx.real("lr");
  settings.train.epochs = static_cast<int>(ctx.integer("epochs"));
  settings.train.batch_size = static_cast<int>(ctx.integer("batch_size"));
  settings.train.seed = ctx.seed();
  settings.dropout = ctx.real("dropout");
  settings.lambda_grid = ctx.reals("lambda_grid");

  const json& train_sets = ctx.cfg().at("train_sets");
  if (!train_sets.is_null()) {
    // Cross-dataset: train on the listed sources, score on this dataset.
    const auto vars = selected_variables(ctx, ds);
    if (vars.size() != 1) throw Error("cross-dataset transfer needs exactly one --variable");
    if (!train_sets.is_array() || train_sets.empty()) throw Error("train_sets must be a non-empty array");
    std::vector<LoadedSource> loaded;
    for (const auto& src : train_sets) {
      const std::string dpath = src.at("dataset"), mpath = src.at("manifest"), edir = src.at("embeddings_dir");
      for (const auto& p : {dpath, mpath, edir})
        if (!fs::exists(p)) throw Error("train_sets file " + p + " does not exist");
      Dataset sds = load_dataset(dpath, mpath);
      std::string v = src.at("variable");
      EmbeddingMatrix se = completion_embeddings(edir, v, ctx.layer());
      loaded.push_back({std::move(sds), std::move(se), std::move(v)});
    }
    const fs::path pred_path = ctx.output("transfer_cross.csv");
    const fs::path sum_path = ctx.output("transfer_cross_summary.csv");
    ctx.prepare();
    std::vector<TransferSource> sources;
    for (const auto& l : loaded) sources.push_back({l.dataset, l.embeddings, l.variable});
    const EmbeddingMatrix te = completion_embeddings(emb_dir, vars[0], ctx.layer());
    const TransferSource test{ds, te, vars[0]};
    const std::vector<double> pred = cross_dataset_transfer(sources, test, settings);
    std::vector<double> a, b;
    const auto truth = transformed_values(ds.column(vars[0]));
    std::ofstream o(pred_path, std::ios::binary);
    csv::write_row(o, {"entity_id", "prediction", "truth"});
    for (std::size_t i = 0; i < ds.size(); ++i) {
      csv::write_row(o, {ds.entity_ids[i], csv::format_number(pred[i]), truth[i] ? csv::format_number(*truth[i]) : ""});
      if (truth[i]) {
        a.push_back(pred[i]);
        b.push_back(*truth[i]);
      }
    }
    const auto rho = try_spearman(a, b);
    std::ofstream s(sum_path, std::ios::binary);
    csv::write_row(s, {"variable", "n", "spearman_transfer"});
    csv::write_row(s, {vars[0], std::to_string(a.size()), fmt(rho)});
    ctx.out() << vars[0] << ": cross-dataset spearman=" << fmt(rho) << '\n';
    return;
  }

  std::vector<PoolMode> modes;
  const std::string mode = ctx.str("mode");
  if (mode == "both") modes = {PoolMode::exclude_target, PoolMode::noisy_target};
  else modes = {parse_pool_mode(mode)};

  std::map<std::string, EmbeddingMatrix> embeddings;
  for (const auto& col : ds.columns)
    embeddings.emplace(col.spec.name, completion_embeddings(emb_dir, col.spec.name, ctx.layer()));
  const auto targets = selected_variables(ctx, ds);
  for (PoolMode m : modes)
    if (m == PoolMode::noisy_target)
      for (const auto& t : targets)
        if (!find_text(text, t)) throw Error("noisy_target mode needs text estimates for '" + t + "'");

  const fs::path csv_path = ctx.output("transfer.csv");
  ctx.prepare();
  std::vector<std::pair<std::string, PoolMode>> items;
  for (const auto& t : targets)
    for (PoolMode m : modes) items.emplace_back(t, m);
  std::vector<TransferOutcome> outcomes(items.size());
  parallel_for(items.size(), ctx.jobs(), [&](std::size_t i) {
    const auto& [t, m] = items[i];
    outcomes[i] = run_transfer(ds, embeddings, t, m, find_text(text, t), settings);
  });
  for (const auto& o : outcomes)
    ctx.out() << o.variable << " [" << to_string(o.mode) << "]: spearman_transfer="
              << csv::format_number(o.spearman_transfer) << " spearman_text=" << fmt(o.spearman_text) << '\n';
  write_transfer_csv(outcomes, csv_path);
}

void cmd_impute(Context& ctx) {
  const Dataset ds = load_dataset(ctx.input("dataset"), ctx.input("manifest"));
  fs::path emb_path;
  if (!ctx.str("embeddings").empty()) {
    emb_path = ctx.input("embeddings");
  } else if (!ctx.str("embeddings_dir").empty()) {
    emb_path = find_embeddings(ctx.input("embeddings_dir"), PromptKind::generic, std::nullopt, ctx.layer());
  } else {
    throw UsageError("--embeddings or --embeddings-dir is required");
  }
  const EmbeddingMatrix generic = read_embeddings(emb_path);
  ImputeConfig cfg;
  cfg.rounds = static_cast<int>(ctx.integer("rounds"));
  cfg.components = static_cast<int>(ctx.integer("components"));
  cfg.lambda_grid = ctx.reals("lambda_grid");
  cfg.validate();
  ImputeGrid grid;
  grid.ks = ctx.cfg().at("ks").get<std::vector<std::size_t>>();
  grid.ps = ctx.reals("ps");
  const int reps = static_cast<int>(ctx.integer("reps"));

  const fs::path csv_path = ctx.output("impute.csv");
  const fs::path summary_path = ctx.output("impute_summary.csv");
  ctx.prepare();
  const ImputeTable table = standardized_table(ds);
  const Matrix features = embedding_features(table.entity_ids, generic, cfg.components);
  const ImputeReport report =
      run_experiment_grid(table, features, grid, reps, ctx.seed(), cfg, ctx.jobs(), ctx.str("name"));
  write_impute_csv(report, csv_path);

  std::ofstream s(summary_path, std::ios::binary);
  csv::write_row(s, {"dataset", "k", "p", "reps", "mean_mae_baseline", "mean_mae_embedding", "embedding_wins"});
  for (std::size_t k : grid.ks)
    for (double p : grid.ps) {
      double base = 0, emb = 0;
      int n = 0, wins = 0;
      for (const auto& r : report.runs)
        if (r.k == k && r.p == p) {
          base += r.mae_baseline;
          emb += r.mae_embedding;
          wins += r.mae_embedding < r.mae_baseline;
          ++n;
        }
      if (n == 0) continue;
      csv::write_row(s, {report.dataset, std::to_string(k), csv::format_number(p), std::to_string(n),
                         csv::format_number(base / n), csv::format_number(emb / n), std::to_string(wins)});
      ctx.out() << "k=" << k << " p=" << p << ": embedding better in " << wins << "/" << n << '\n';
    }
}

void cmd_superres(Context& ctx) {
  const Dataset high = load_dataset(ctx.input("high_dataset"), ctx.input("high_manifest"));
  const Dataset low = load_dataset(ctx.input("low_dataset"), ctx.input("low_manifest"));
  const fs::path high_dir = ctx.input("high_embeddings_dir");
  const fs::path low_dir = ctx.input("low_embeddings_dir");
  std::optional<ParentMap> mapping;
  if (auto p = ctx.optional_input("mapping")) mapping = load_parent_map(*p);
  const auto text = load_text(ctx);
  const auto grid = ctx.reals("lambda_grid");

  const fs::path csv_path = ctx.output("superres.csv");
  ctx.prepare();
  std::vector<SuperresRow> rows;
  for (const auto& var : selected_variables(ctx, high)) {
    const EmbeddingMatrix he = completion_embeddings(high_dir, var, ctx.layer());
    const EmbeddingMatrix le = completion_embeddings(low_dir, var, ctx.layer());
    std::map<std::string, std::vector<double>> predictions;
    predictions["lme_superres"] = fit_high_predict_low({high, he, var}, {low.entity_ids, le}, grid);
    if (mapping) {
      std::map<std::string, double> high_values;
      const auto t = transformed_values(high.column(var));
      for (std::size_t i = 0; i < high.size(); ++i)
        if (t[i]) high_values[high.entity_ids[i]] = *t[i];
      predictions["naive"] = naive_project(*mapping, high_values, low.entity_ids);
    }
    auto part = evaluate_superres(low, var, predictions, find_text(text, var));
    for (const auto& r : part) ctx.out() << var << " [" << r.method << "]: spearman=" << fmt(r.spearman) << '\n';
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_superres_csv(rows, csv_path);
}

void cmd_parse_text(Context& ctx) {
  const auto answers = read_answers(ctx.input("answers"));
  const Manifest manifest = load_manifest(ctx.input("manifest"));
  const PromptKind strategy = parse_prompt_kind(ctx.str("strategy"));
  const fs::path est_path = ctx.output("text_estimates.csv");
  const fs::path sum_path = ctx.output("parse_summary.csv");
  ctx.prepare();
  const BatchParse batch = parse_batch(answers, manifest, strategy);
  write_parse_results(batch, est_path);
  std::ofstream s(sum_path, std::ios::binary);
  csv::write_row(s, {"variable", "total", "ok", "no_number", "out_of_range", "refused"});
  for (const auto& [var, c] : batch.counts) {
    csv::write_row(s, {var, std::to_string(c.total()), std::to_string(c.ok), std::to_string(c.no_number),
                       std::to_string(c.out_of_range), std::to_string(c.refused)});
    ctx.out() << var << ": ok=" << c.ok << " no_number=" << c.no_number << " out_of_range=" << c.out_of_range
              << " refused=" << c.refused << '\n';
  }
}

std::size_t positive(const Context& ctx, const std::string& key) {
  const long long v = ctx.integer(key);
  if (v <= 0) throw Error(key + " must be positive");
  return static_cast<std::size_t>(v);
}

std::vector<TextEstimates> pseudo_text_for(const Dataset& ds, const Context& ctx) {
  std::vector<TextEstimates> text;
  for (std::size_t v = 0; v < ds.columns.size(); ++v)
    text.push_back(gen_pseudo_text(ds.entity_ids, ds.columns[v].values, ctx.real("text_bias"),
                                   ctx.real("text_noise"), static_cast<int>(ctx.integer("text_clusters")),
                                   ctx.seed() + 1000 + v, ds.columns[v].spec.name));
  return text;
}

void cmd_synth(Context& ctx) {
  const std::string preset = ctx.str("preset");
  for (const char* name : {"dataset.csv", "manifest.json"}) ctx.output(name);
  if (preset == "shared" || preset == "independent") {
    LinearWorldParams p;
    p.n = positive(ctx, "n");
    p.d = positive(ctx, "d");
    p.n_groups = positive(ctx, "n_groups");
    p.n_vars = positive(ctx, "n_vars");
    p.weight_mode = preset == "shared" ? WeightMode::shared : WeightMode::independent;
    p.noise_sd = ctx.real("noise_sd");
    p.seed = ctx.seed();
    const LinearWorld w = gen_linear_world(p);
    std::vector<EmbeddingMatrix> embs;
    for (const auto& col : w.dataset.columns) embs.push_back(w.embeddings.at(col.spec.name));
    ctx.output("text_estimates.csv");
    ctx.output("answers.csv");
    ctx.output("embeddings");
    ctx.prepare();
    write_world_files(ctx.out_dir(), w.dataset, embs, pseudo_text_for(w.dataset, ctx));
  } else if (preset == "two-level") {
    const TwoLevelWorld w = gen_two_level_world(positive(ctx, "n_high"), positive(ctx, "n_low"),
                                                positive(ctx, "d"), ctx.real("noise_sd"),
                                                ctx.real("parent_share"), ctx.seed());
    ctx.output("high");
    ctx.output("low");
    const fs::path map_path = ctx.output("mapping.csv");
    ctx.prepare();
    const std::vector<EmbeddingMatrix> he{w.high_embeddings}, le{w.low_embeddings};
    write_world_files(ctx.out_dir() / "high", w.high, he, {});
    write_world_files(ctx.out_dir() / "low", w.low, le, pseudo_text_for(w.low, ctx));
    write_parent_map(w.parents, map_path);
    // Top-level copies keep the generic file names valid for cv on the fine level.
    write_dataset_csv(w.low, ctx.out_dir() / "dataset.csv");
    fs::copy_file(ctx.out_dir() / "low" / "manifest.json", ctx.out_dir() / "manifest.json",
                  fs::copy_options::overwrite_existing);
  } else if (preset == "impute" || preset == "impute-null") {
    const ImputeWorld w = gen_impute_world(positive(ctx, "n"), positive(ctx, "n_vars"), positive(ctx, "d"),
                                           preset == "impute", ctx.real("noise_sd"), ctx.seed());
    ctx.output("embeddings");
    ctx.prepare();
    const std::vector<EmbeddingMatrix> embs{w.generic};
    write_world_files(ctx.out_dir(), w.dataset, embs, {});
  } else {
    throw UsageError("unknown preset '" + preset + "'");
  }
  ctx.out() << "wrote " << preset << " world to " << ctx.out_dir().string() << '\n';
}

const std::map<std::string, void (*)(Context&)> kCommands{
    {"cv", cmd_cv},           {"learning-curve", cmd_learning_curve},
    {"transfer", cmd_transfer}, {"impute", cmd_impute},
    {"superres", cmd_superres}, {"parse-text", cmd_parse_text},
    {"synth", cmd_synth},
};

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  const auto specs = command_options();
  CLI::App app{"latent-probe: linear probes of LLM hidden states for economic statistics"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::map<std::string, std::map<std::string, std::string>> raw;
  std::map<std::string, std::map<std::string, CLI::Option*>> opts;
  std::map<std::string, std::string> config_path;
  std::map<std::string, bool> force;
  for (const auto& [name, list] : specs) {
    CLI::App* sub = app.add_subcommand(name, kDescriptions.at(name));
    sub->add_option("--config", config_path[name], "JSON config document or a previous run.meta");
    sub->add_flag("--force", force[name], "replace existing output files");
    for (const auto& spec : list) {
      std::string& slot = raw[name][spec.key];
      CLI::Option* o = spec.kind == Kind::flag
                           ? sub->add_flag_function(flag_name(spec.key), [&slot](std::int64_t c) {
                               slot = c > 0 ? "true" : "false";
                             }, spec.help)
                           : sub->add_option(flag_name(spec.key), slot, spec.help);
      opts[name][spec.key] = o;
    }
  }

  std::vector<std::string> argv_store{"latent-probe"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    json cfg = json::object();
    for (const auto& spec : specs.at(command)) cfg[spec.key] = spec.fallback;
    cfg["seed"] = env_seed();
    auto config_only = kConfigOnly.count(command) ? kConfigOnly.at(command) : std::vector<std::string>{};
    for (const auto& key : config_only) cfg[key] = nullptr;
    if (!config_path[command].empty()) {
      const json doc = load_config_document(config_path[command]);
      for (const auto& [key, value] : doc.items()) {
        if (!cfg.contains(key)) throw Error("unknown config key '" + key + "' for " + command);
        cfg[key] = value;
      }
    }
    for (const auto& spec : specs.at(command))
      if (opts[command][spec.key]->count() > 0) cfg[spec.key] = parse_flag_value(spec, raw[command][spec.key]);

    Context ctx(command, cfg, force[command], out, err);
    kCommands.at(command)(ctx);
    ctx.write_meta();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.get_subcommand(command)->help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    err << "error: bad config value: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace latent_probe::cli
