#ifndef LATENT_PROBE_IMPUTE_HPP
#define LATENT_PROBE_IMPUTE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latent_probe/dataset.hpp"
#include "latent_probe/embedding_store.hpp"

namespace latent_probe {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Numeric table on the transformed and standardized scale.
struct ImputeTable {
  std::vector<std::string> entity_ids;
  std::vector<std::string> columns;
  Matrix values;      // unobserved cells hold 0
  BoolArray observed;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Transforms every variable and standardizes it on its observed cells.
ImputeTable standardized_table(const Dataset& ds);

struct MaskCell {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const MaskCell&) const = default;
  auto operator<=>(const MaskCell&) const = default;
};

struct MaskPlan {
  std::vector<std::size_t> columns;  // chosen columns, ascending
  std::vector<MaskCell> cells;       // sorted
  std::size_t k = 0;
  double p = 0.0;
  std::uint64_t seed = 0;
};

// k columns drawn without replacement; in each, round(p * observed) of its
// observed cells (half-up) drawn without replacement.
MaskPlan make_mask_plan(const ImputeTable& table, std::size_t k, double p, std::uint64_t seed);

struct MaskedDataset {
  ImputeTable masked;
  ImputeTable original;
  MaskPlan plan;
};

MaskedDataset apply_mask(const ImputeTable& table, const MaskPlan& plan);

inline const std::vector<double> kImputeLambdaGrid{1e-6, 1e-4, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4};

struct ImputeConfig {
  int rounds = 10;
  std::vector<double> lambda_grid = kImputeLambdaGrid;
  int components = 25;
  bool augment = false;

  void validate() const;
};

// First `components` PCA scores of the embeddings, aligned to `entity_ids`,
// with PCA fitted on all those rows.
Matrix embedding_features(std::span<const std::string> entity_ids, const EmbeddingMatrix& embeddings,
                          int components);

// Iterative round-robin ridge imputation. Missing cells start at 0 (the
// standardized mean); each round visits incomplete columns in ascending
// missing count and refits that column on all others plus `features`.
// Observed cells are passed through untouched.
Matrix mice_impute(const ImputeTable& incomplete, const Matrix* features, const ImputeConfig& cfg);
Matrix mice_impute(const MaskedDataset& dm, const EmbeddingMatrix* generic, const ImputeConfig& cfg);

// Mean absolute difference over the plan's cells.
double evaluate_imputation(const Matrix& completed, const Matrix& original, const MaskPlan& plan);

struct ImputeGrid {
  std::vector<std::size_t> ks{1, 2, 5};
  std::vector<double> ps{0.1, 0.25, 0.5};
};

struct ImputeRun {
  std::size_t k = 0;
  double p = 0.0;
  int rep = 0;
  double mae_baseline = 0.0;
  double mae_embedding = 0.0;
  MaskPlan plan;  // shared by both strategies
};

struct ImputeReport {
  std::string dataset;
  std::vector<ImputeRun> runs;
};

// For each (k, p) and replication: a fresh mask plan, imputed once without
// and once with the embedding features.
ImputeReport run_experiment_grid(const ImputeTable& table, const Matrix& features,
                                 const ImputeGrid& grid, int reps, std::uint64_t seed,
                                 const ImputeConfig& cfg, unsigned jobs = 1,
                                 std::string dataset_name = "dataset");

void write_impute_csv(const ImputeReport& report, const std::filesystem::path& path);

}  // namespace latent_probe

#endif  // LATENT_PROBE_IMPUTE_HPP
