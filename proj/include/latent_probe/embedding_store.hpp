#ifndef LATENT_PROBE_EMBEDDING_STORE_HPP
#define LATENT_PROBE_EMBEDDING_STORE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "latent_probe/common.hpp"

namespace latent_probe {

struct Dataset;

enum class PromptKind { completion, generic, qa, fewshot, cot };

std::string_view to_string(PromptKind k);
PromptKind parse_prompt_kind(std::string_view s);

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Last-token hidden states for one (model, prompt kind, variable, layer).
struct EmbeddingMatrix {
  std::string model_id;
  PromptKind prompt_kind = PromptKind::completion;
  std::optional<std::string> variable;  // absent for generic prompts
  std::uint32_t layer = 0;
  std::vector<std::string> entity_ids;
  FloatMatrix data;  // row i belongs to entity_ids[i]

  std::size_t rows() const { return static_cast<std::size_t>(data.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(data.cols()); }

  void validate() const;
  // Rows selected by `rows`, promoted to double.
  Matrix gather(std::span<const std::size_t> rows) const;
};

inline constexpr char kEmbeddingMagic[4] = {'L', 'M', 'E', 'B'};
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 28;

// Binary payload at `path` plus a JSON sidecar at `path` + ".meta".
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

// Entry p[i] is the row of `m` holding dataset.entity_ids[i].
std::vector<std::size_t> align(const Dataset& dataset, const EmbeddingMatrix& m);
std::vector<std::size_t> align(std::span<const std::string> wanted,
                               std::span<const std::string> available);

// Locates the file in `dir` whose sidecar matches. `variable` is ignored for
// generic prompts; `layer` is required when several layers are present.
std::filesystem::path find_embeddings(const std::filesystem::path& dir, PromptKind kind,
                                      const std::optional<std::string>& variable,
                                      std::optional<std::uint32_t> layer = std::nullopt);

// Canonical file name used when writing a directory of embeddings.
std::string embedding_file_name(const EmbeddingMatrix& m);

}  // namespace latent_probe

#endif  // LATENT_PROBE_EMBEDDING_STORE_HPP
