#ifndef LATENT_PROBE_SYNTH_HPP
#define LATENT_PROBE_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latent_probe/dataset.hpp"
#include "latent_probe/embedding_store.hpp"
#include "latent_probe/superres.hpp"
#include "latent_probe/textnum.hpp"

namespace latent_probe {

enum class WeightMode { shared, independent };

struct LinearWorldParams {
  std::size_t n = 500;
  std::size_t d = 64;
  std::size_t n_groups = 10;
  std::size_t n_vars = 5;
  WeightMode weight_mode = WeightMode::shared;
  double noise_sd = 0.0;  // weights have unit norm, so the signal sd is 1
  std::uint64_t seed = 0;
};

struct LinearWorld {
  Dataset dataset;
  std::map<std::string, EmbeddingMatrix> embeddings;  // completion prompt per variable
  std::map<std::string, Vector> weights;
};

// Standard-normal embeddings per variable; target_v = w_v . e + noise.
// shared: one w for all variables; independent: mutually orthogonal w_v.
// Entity i belongs to group i mod n_groups.
LinearWorld gen_linear_world(const LinearWorldParams& params);

// text = truth + bias + Normal(0, noise_sd), snapped to `cluster_levels`
// equally spaced levels spanning the truth range; 0 disables snapping.
// Missing truth yields no estimate.
TextEstimates gen_pseudo_text(std::span<const std::string> entity_ids,
                              std::span<const std::optional<double>> truth, double bias,
                              double noise_sd, int cluster_levels, std::uint64_t seed,
                              std::string variable = {});

struct TwoLevelWorld {
  Dataset high;
  Dataset low;
  EmbeddingMatrix high_embeddings;
  EmbeddingMatrix low_embeddings;
  ParentMap parents;
  Vector weights;
};

// Coarse entities with standard-normal embeddings; each fine entity mixes its
// parent's embedding (share rho) with its own. Both levels use one unit
// weight vector: value = w . e + noise. Variable name "var0".
TwoLevelWorld gen_two_level_world(std::size_t n_high, std::size_t n_low, std::size_t d,
                                  double noise_sd, double parent_share, std::uint64_t seed);

struct ImputeWorld {
  Dataset dataset;
  EmbeddingMatrix generic;
};

// informative: columns are noisy linear views of a few latent factors that the
// generic embeddings carry in their leading principal directions.
// Otherwise columns and embeddings are mutually independent noise.
ImputeWorld gen_impute_world(std::size_t n, std::size_t n_vars, std::size_t d, bool informative,
                             double noise_sd, std::uint64_t seed);

// Files consumed by the CLI: dataset.csv, manifest.json, embeddings/*.lmeb and
// optionally text_estimates.csv and answers.csv.
void write_world_files(const std::filesystem::path& dir, const Dataset& ds,
                       std::span<const EmbeddingMatrix> embeddings,
                       std::span<const TextEstimates> text);

}  // namespace latent_probe

#endif  // LATENT_PROBE_SYNTH_HPP
