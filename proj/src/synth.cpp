#include "latent_probe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "latent_probe/csv.hpp"

namespace latent_probe {

namespace {

std::string entity_name(const std::string& prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  return prefix + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

FloatMatrix normal_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  FloatMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<float>(normal(rng));
  return m;
}

Vector unit_vector(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = normal(rng);
  return v.normalized();
}

// Columns: orthonormal basis of a random d x k Gaussian matrix.
Matrix orthonormal_columns(std::size_t d, std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
}

VariableSpec synthetic_spec(std::size_t v) {
  VariableSpec spec;
  spec.name = "var" + std::to_string(v);
  spec.prompt_phrase = "synthetic variable " + std::to_string(v);
  return spec;
}

EmbeddingMatrix make_embedding(const std::vector<std::string>& ids, FloatMatrix data, PromptKind kind,
                               std::optional<std::string> variable) {
  EmbeddingMatrix m;
  m.model_id = "synthetic";
  m.prompt_kind = kind;
  m.variable = std::move(variable);
  m.layer = 25;
  m.entity_ids = ids;
  m.data = std::move(data);
  return m;
}

}  // namespace

LinearWorld gen_linear_world(const LinearWorldParams& p) {
  if (p.n_groups < 2 || p.n < p.n_groups) throw Error("synthetic world needs n >= n_groups >= 2");
  if (p.d < 1 || p.n_vars < 1) throw Error("synthetic world needs d >= 1 and n_vars >= 1");
  if (p.weight_mode == WeightMode::independent && p.n_vars > p.d)
    throw Error("independent weights need n_vars <= d");
  if (!(p.noise_sd >= 0.0)) throw Error("noise_sd must be >= 0");

  auto rng = make_stream(p.seed, 0, 0x5E7);
  LinearWorld world;
  Dataset& ds = world.dataset;
  ds.year = 2019;
  for (std::size_t i = 0; i < p.n; ++i) {
    ds.entity_ids.push_back(entity_name("e", i));
    ds.group_ids.push_back("g" + std::to_string(i % p.n_groups));
  }
  Matrix basis;
  if (p.weight_mode == WeightMode::independent) basis = orthonormal_columns(p.d, p.n_vars, rng);
  const Vector shared = unit_vector(p.d, rng);

  std::normal_distribution<double> normal;
  for (std::size_t v = 0; v < p.n_vars; ++v) {
    const Vector w = p.weight_mode == WeightMode::shared ? shared : Vector(basis.col(static_cast<Eigen::Index>(v)));
    FloatMatrix e = normal_matrix(p.n, p.d, rng);
    VariableColumn col{synthetic_spec(v), {}};
    col.values.reserve(p.n);
    for (Eigen::Index i = 0; i < e.rows(); ++i)
      col.values.push_back(e.row(i).cast<double>().dot(w.transpose()) + p.noise_sd * normal(rng));
    world.weights[col.spec.name] = w;
    world.embeddings.emplace(col.spec.name,
                             make_embedding(ds.entity_ids, std::move(e), PromptKind::completion, col.spec.name));
    ds.columns.push_back(std::move(col));
  }
  ds.validate();
  return world;
}

TextEstimates gen_pseudo_text(std::span<const std::string> entity_ids,
                              std::span<const std::optional<double>> truth, double bias,
                              double noise_sd, int cluster_levels, std::uint64_t seed,
                              std::string variable) {
  if (entity_ids.size() != truth.size()) throw Error("pseudo text: ids and truth differ in length");
  if (cluster_levels < 0) throw Error("pseudo text: cluster_levels must be >= 0");
  auto rng = make_stream(seed, 0, 0x7E47);
  std::normal_distribution<double> normal;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& t : truth)
    if (t) {
      lo = std::min(lo, *t);
      hi = std::max(hi, *t);
    }
  TextEstimates out;
  out.variable = std::move(variable);
  out.entity_ids.assign(entity_ids.begin(), entity_ids.end());
  out.values.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth[i]) continue;
    double v = *truth[i] + bias + noise_sd * normal(rng);
    if (cluster_levels == 1) {
      v = 0.5 * (lo + hi);
    } else if (cluster_levels > 1 && hi > lo) {
      const double step = (hi - lo) / double(cluster_levels - 1);
      const double level = std::clamp(std::round((v - lo) / step), 0.0, double(cluster_levels - 1));
      v = lo + level * step;
    }
    out.values[i] = v;
  }
  return out;
}

TwoLevelWorld gen_two_level_world(std::size_t n_high, std::size_t n_low, std::size_t d,
                                  double noise_sd, double parent_share, std::uint64_t seed) {
  if (n_high < 2 || n_low < n_high) throw Error("two-level world needs n_low >= n_high >= 2");
  if (!(parent_share >= 0.0 && parent_share <= 1.0)) throw Error("parent_share must lie in [0, 1]");
  auto rng = make_stream(seed, 0, 0x2BE7);
  std::normal_distribution<double> normal;
  TwoLevelWorld w;
  w.weights = unit_vector(d, rng);

  std::vector<std::string> high_ids, low_ids;
  for (std::size_t j = 0; j < n_high; ++j) high_ids.push_back(entity_name("s", j));
  for (std::size_t i = 0; i < n_low; ++i) low_ids.push_back(entity_name("c", i));

  FloatMatrix high_e = normal_matrix(n_high, d, rng);
  FloatMatrix low_e = normal_matrix(n_low, d, rng);
  const float own = static_cast<float>(std::sqrt(1.0 - parent_share * parent_share));
  for (std::size_t i = 0; i < n_low; ++i) {
    const auto parent = static_cast<Eigen::Index>(i % n_high);
    low_e.row(static_cast<Eigen::Index>(i)) =
        static_cast<float>(parent_share) * high_e.row(parent) + own * low_e.row(static_cast<Eigen::Index>(i));
    w.parents[low_ids[i]] = high_ids[static_cast<std::size_t>(parent)];
  }

  auto fill = [&](Dataset& ds, const std::vector<std::string>& ids, const FloatMatrix& e,
                  auto group_of) {
    ds.year = 2019;
    ds.entity_ids = ids;
    VariableColumn col{synthetic_spec(0), {}};
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ds.group_ids.push_back(group_of(i));
      col.values.push_back(e.row(static_cast<Eigen::Index>(i)).cast<double>().dot(w.weights.transpose()) +
                           noise_sd * normal(rng));
    }
    ds.columns.push_back(std::move(col));
    ds.validate();
  };
  fill(w.high, high_ids, high_e, [](std::size_t j) { return "r" + std::to_string(j % 5); });
  fill(w.low, low_ids, low_e, [&](std::size_t i) { return w.parents.at(low_ids[i]); });
  w.high_embeddings = make_embedding(high_ids, std::move(high_e), PromptKind::completion, "var0");
  w.low_embeddings = make_embedding(low_ids, std::move(low_e), PromptKind::completion, "var0");
  return w;
}

ImputeWorld gen_impute_world(std::size_t n, std::size_t n_vars, std::size_t d, bool informative,
                             double noise_sd, std::uint64_t seed) {
  constexpr std::size_t kFactors = 3;
  constexpr double kFactorScale = 4.0;
  if (n < 10 || n_vars < 1 || d < kFactors) throw Error("impute world: n >= 10, n_vars >= 1, d >= 3 required");
  auto rng = make_stream(seed, 0, 0x1A9C);
  std::normal_distribution<double> normal;
  ImputeWorld w;
  Dataset& ds = w.dataset;
  ds.year = 2019;
  for (std::size_t i = 0; i < n; ++i) {
    ds.entity_ids.push_back(entity_name("e", i));
    ds.group_ids.push_back("g" + std::to_string(i % 10));
  }
  FloatMatrix emb = normal_matrix(n, d, rng);
  Matrix factors = Matrix::Zero(static_cast<Eigen::Index>(n), kFactors);
  if (informative) {
    const Matrix loading = orthonormal_columns(d, kFactors, rng);
    for (Eigen::Index i = 0; i < factors.rows(); ++i)
      for (Eigen::Index f = 0; f < factors.cols(); ++f) factors(i, f) = normal(rng);
    emb += (kFactorScale * factors * loading.transpose()).cast<float>();
  }
  for (std::size_t v = 0; v < n_vars; ++v) {
    VariableColumn col{synthetic_spec(v), {}};
    const Vector b = unit_vector(kFactors, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double signal = informative ? factors.row(static_cast<Eigen::Index>(i)).dot(b) : 0.0;
      col.values.push_back(signal + (informative ? noise_sd : 1.0) * normal(rng));
    }
    ds.columns.push_back(std::move(col));
  }
  ds.validate();
  w.generic = make_embedding(ds.entity_ids, std::move(emb), PromptKind::generic, std::nullopt);
  return w;
}

void write_world_files(const std::filesystem::path& dir, const Dataset& ds,
                       std::span<const EmbeddingMatrix> embeddings,
                       std::span<const TextEstimates> text) {
  std::filesystem::create_directories(dir / "embeddings");
  write_dataset_csv(ds, dir / "dataset.csv");
  Manifest manifest;
  manifest.year = ds.year;
  for (const auto& col : ds.columns) manifest.variables.push_back(col.spec);
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
    out << manifest_to_json(manifest);
  }
  for (const auto& m : embeddings) write_embeddings(m, dir / "embeddings" / embedding_file_name(m));
  if (text.empty()) return;
  write_text_estimates({text.begin(), text.end()}, dir / "text_estimates.csv");
  // Raw answers in completion style, for exercising the parser end to end.
  std::ofstream answers(dir / "answers.csv", std::ios::binary);
  if (!answers) throw Error("cannot write " + (dir / "answers.csv").string());
  csv::write_row(answers, {"entity_id", "variable", "text"});
  for (const auto& est : text) {
    const VariableSpec& spec = ds.column(est.variable).spec;
    for (std::size_t i = 0; i < est.size(); ++i) {
      const std::string body = est.values[i]
                                   ? "The " + spec.prompt_phrase + " in " + est.entity_ids[i] + " in " +
                                         std::to_string(ds.year) + " was " + csv::format_number(*est.values[i]) + "."
                                   : "I do not know the " + spec.prompt_phrase + " for " + est.entity_ids[i] + ".";
      csv::write_row(answers, {est.entity_ids[i], est.variable, body});
    }
  }
}

}  // namespace latent_probe
