#ifndef LATENT_PROBE_PROBE_EVAL_HPP
#define LATENT_PROBE_PROBE_EVAL_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latent_probe/dataset.hpp"
#include "latent_probe/embedding_store.hpp"
#include "latent_probe/ridge.hpp"
#include "latent_probe/textnum.hpp"

namespace latent_probe {

struct FoldPlan {
  int n_folds = 0;
  std::map<std::string, int> assignment;  // group -> fold
  std::uint64_t seed = 0;

  int fold_of(const std::string& group) const;
};

// Distinct groups (sorted) are shuffled by `seed` and dealt to folds
// round-robin, so fold sizes in groups differ by at most one.
FoldPlan make_grouped_folds(std::span<const std::string> groups, int n_folds, std::uint64_t seed);

struct ProbeConfig {
  int n_folds = 5;
  std::optional<int> pca_components;  // nullopt: ridge on raw embeddings
  bool strict_pca = false;            // fit PCA inside each training fold
  std::vector<double> lambda_grid = kDefaultLambdaGrid;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

// Rows scored by both methods: ground truth present and, when text is given,
// a parsed value inside the variable's range that the transform accepts.
struct EvaluableRows {
  std::vector<std::size_t> rows;
  std::vector<double> truth;                // transformed
  std::vector<std::optional<double>> text;  // transformed; all nullopt without text
};

EvaluableRows evaluable_rows(const Dataset& ds, const std::string& variable,
                             const TextEstimates* text);

struct FoldMetrics {
  int fold = 0;
  std::size_t n_test = 0;
  double lambda = 0.0;
  std::optional<double> spearman_lme;
  std::optional<double> spearman_text;
};

struct CvReport {
  std::string variable;
  std::size_t n_evaluated = 0;
  double spearman_lme = 0.0;
  double pearson_lme = 0.0;
  std::optional<double> spearman_text;
  std::optional<double> pearson_text;
  std::vector<FoldMetrics> per_fold;

  // configuration echo
  std::uint32_t layer = 0;
  std::optional<int> pca_components;
  bool strict_pca = false;
  int n_folds = 0;
  std::uint64_t seed = 0;
  std::string lambda_policy;

  // out-of-fold details, parallel arrays over the evaluated rows
  std::vector<std::size_t> rows;
  std::vector<int> fold;
  std::vector<double> truth;
  std::vector<double> predictions;
  std::vector<std::optional<double>> text;

  // Dataset-length vector with predictions at evaluated rows.
  std::vector<std::optional<double>> predictions_by_row(std::size_t n) const;
};

CvReport run_cv(const Dataset& ds, const EmbeddingMatrix& embeddings, const std::string& variable,
                const TextEstimates* text, const ProbeConfig& cfg);

struct LearningCurve {
  std::string variable;
  std::vector<std::size_t> sizes;
  int repetitions = 0;
  std::vector<std::vector<double>> values;  // [size][rep], NaN when undefined
  std::vector<double> medians;
  std::optional<double> text_baseline;
};

inline const std::vector<std::size_t> kDefaultCurveSizes{10, 25, 50, 100, 200, 400};

// Training samples are built from whole groups drawn without replacement;
// the last drawn group is subsampled to hit the size exactly. Scoring uses
// every row of the groups that were not drawn.
LearningCurve learning_curve(const Dataset& ds, const EmbeddingMatrix& embeddings,
                             const std::string& variable, std::span<const std::size_t> sizes,
                             int repetitions, std::uint64_t seed, const ProbeConfig& cfg,
                             const TextEstimates* text = nullptr);

struct GroupScore {
  std::size_t n = 0;
  double spearman_lme = 0.0;
  std::optional<double> spearman_text;
};

struct GroupMetrics {
  std::map<std::string, GroupScore> groups;
  std::vector<std::string> notes;  // groups omitted or partly undefined
};

// `predictions` is dataset-length (nullopt where a row was not predicted).
GroupMetrics per_group_metrics(const Dataset& ds, std::span<const std::optional<double>> predictions,
                               const std::string& variable, std::size_t min_group_size,
                               const TextEstimates* text = nullptr);

// Distinct raw ground-truth and text values per group over evaluable rows.
std::map<std::string, std::pair<std::size_t, std::size_t>> count_unique_per_group(
    const Dataset& ds, const TextEstimates* text, const std::string& variable);

// Report serialization.
void write_cv_csv(std::span<const CvReport> reports, const std::filesystem::path& path);
std::string cv_reports_json(std::span<const CvReport> reports);
void write_cv_predictions_csv(const Dataset& ds, std::span<const CvReport> reports,
                              const std::filesystem::path& path);
void write_learning_curve_csv(std::span<const LearningCurve> curves,
                              const std::filesystem::path& values_path,
                              const std::filesystem::path& summary_path);

}  // namespace latent_probe

#endif  // LATENT_PROBE_PROBE_EVAL_HPP
