#ifndef LATENT_PROBE_SUPERRES_HPP
#define LATENT_PROBE_SUPERRES_HPP

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

struct CoarseLevel {
  const Dataset& dataset;
  const EmbeddingMatrix& embeddings;
  std::string variable;
};

// Only ids and embeddings of the fine level: its ground truth is never an
// input to fitting.
struct FineLevel {
  std::span<const std::string> entity_ids;
  const EmbeddingMatrix& embeddings;
};

// Ridge on every coarse row with ground truth (transformed scale), lambda by
// leave-one-out over `lambda_grid`. Returns one prediction per fine entity.
std::vector<double> fit_high_predict_low(const CoarseLevel& high, const FineLevel& low,
                                         std::span<const double> lambda_grid = kDefaultLambdaGrid);

using ParentMap = std::map<std::string, std::string>;  // fine id -> coarse id

// Two-column CSV low_id,high_id.
ParentMap load_parent_map(const std::filesystem::path& path);
void write_parent_map(const ParentMap& map, const std::filesystem::path& path);

// Each fine entity receives its parent's value.
std::vector<double> naive_project(const ParentMap& mapping,
                                  const std::map<std::string, double>& high_values,
                                  std::span<const std::string> low_ids);

struct SuperresRow {
  std::string variable;
  std::string method;  // lme_superres, text, naive
  std::optional<double> spearman;
  std::size_t n = 0;
  std::string note;
};

// Spearman of each method against the fine-level truth on one shared row set:
// truth present and, when text is given, a valid parsed text value.
std::vector<SuperresRow> evaluate_superres(const Dataset& low, const std::string& variable,
                                           const std::map<std::string, std::vector<double>>& predictions,
                                           const TextEstimates* text);

void write_superres_csv(std::span<const SuperresRow> rows, const std::filesystem::path& path);

}  // namespace latent_probe

#endif  // LATENT_PROBE_SUPERRES_HPP
