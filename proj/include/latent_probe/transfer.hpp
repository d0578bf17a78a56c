#ifndef LATENT_PROBE_TRANSFER_HPP
#define LATENT_PROBE_TRANSFER_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latent_probe/dataset.hpp"
#include "latent_probe/embedding_store.hpp"
#include "latent_probe/mlp.hpp"
#include "latent_probe/ridge.hpp"
#include "latent_probe/textnum.hpp"

namespace latent_probe {

enum class PoolMode { exclude_target, noisy_target };
enum class LabelSource { ground_truth, text };
enum class TransferModelKind { mlp, ridge };

std::string_view to_string(PoolMode m);
PoolMode parse_pool_mode(std::string_view s);
std::string_view to_string(TransferModelKind k);
TransferModelKind parse_transfer_model(std::string_view s);

struct Provenance {
  std::string variable;
  std::string entity_id;
  LabelSource source = LabelSource::ground_truth;
};

// Stacked (embedding, standardized label) pairs over several variables.
struct PooledTrainingSet {
  Matrix X;
  Vector y;
  std::vector<Provenance> provenance;

  std::size_t size() const { return provenance.size(); }
};

// Target-variable rows used for scoring: ground truth (transformed) with the
// target's own embeddings. With text, restricted to rows where the parsed
// text is valid so both methods see the same rows.
struct TransferTestSet {
  std::vector<std::string> entity_ids;
  Matrix X;
  std::vector<double> truth;
  std::vector<std::optional<double>> text;
};

// `embeddings` maps variable name to its completion-prompt embeddings. Every
// variable's labels are transformed and standardized on their own before
// stacking. noisy_target adds the target's text values as labels.
PooledTrainingSet build_pooled(const Dataset& ds,
                               const std::map<std::string, EmbeddingMatrix>& embeddings,
                               const std::string& target, PoolMode mode,
                               const TextEstimates* text = nullptr);

TransferTestSet build_transfer_test(const Dataset& ds,
                                    const std::map<std::string, EmbeddingMatrix>& embeddings,
                                    const std::string& target, const TextEstimates* text = nullptr);

struct TransferSettings {
  TransferModelKind model = TransferModelKind::mlp;
  TrainConfig train;       // lr 1e-5, 20 epochs
  double dropout = 0.5;
  std::vector<double> lambda_grid = kDefaultLambdaGrid;  // ridge variant
};

MlpModel train_transfer(const PooledTrainingSet& pool, const TrainConfig& cfg, double dropout = 0.5);
RidgeModel train_transfer_linear(const PooledTrainingSet& pool,
                                 std::span<const double> lambda_grid = kDefaultLambdaGrid);

struct TransferOutcome {
  std::string variable;
  PoolMode mode = PoolMode::exclude_target;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double spearman_transfer = 0.0;
  std::optional<double> spearman_text;
  std::vector<double> predictions;  // parallel to the test set
};

// Builds the pool and test set for `target`, trains, and scores with Spearman.
TransferOutcome run_transfer(const Dataset& ds,
                             const std::map<std::string, EmbeddingMatrix>& embeddings,
                             const std::string& target, PoolMode mode, const TextEstimates* text,
                             const TransferSettings& settings);

struct TransferSource {
  const Dataset& dataset;
  const EmbeddingMatrix& embeddings;
  std::string variable;
};

// Trains on the concatenation of the source datasets (each standardized on
// its own) and returns standardized-scale predictions for every entity of
// the test dataset, in dataset order.
std::vector<double> cross_dataset_transfer(std::span<const TransferSource> train_sets,
                                           const TransferSource& test,
                                           const TransferSettings& settings);

void write_transfer_csv(std::span<const TransferOutcome> outcomes, const std::filesystem::path& path);

}  // namespace latent_probe

#endif  // LATENT_PROBE_TRANSFER_HPP
