#include "latent_probe/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "latent_probe/dataset.hpp"

namespace latent_probe {

static_assert(std::endian::native == std::endian::little,
              "embedding files are written in host order; big-endian hosts need byte swapping");

namespace {

template <typename T>
void put(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta");
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

std::string_view to_string(PromptKind k) {
  switch (k) {
    case PromptKind::completion: return "completion";
    case PromptKind::generic: return "generic";
    case PromptKind::qa: return "qa";
    case PromptKind::fewshot: return "fewshot";
    case PromptKind::cot: return "cot";
  }
  return "completion";
}

PromptKind parse_prompt_kind(std::string_view s) {
  if (s == "completion") return PromptKind::completion;
  if (s == "generic") return PromptKind::generic;
  if (s == "qa") return PromptKind::qa;
  if (s == "fewshot") return PromptKind::fewshot;
  if (s == "cot") return PromptKind::cot;
  throw Error("unknown prompt kind '" + std::string(s) + "'");
}

void EmbeddingMatrix::validate() const {
  if (entity_ids.size() != rows())
    throw Error("embedding matrix has " + std::to_string(rows()) + " rows but " +
                std::to_string(entity_ids.size()) + " entity ids");
  if (!data.allFinite()) {
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      if (!data.row(i).allFinite())
        throw Error("non-finite value in embedding row " + std::to_string(i) + " (" +
                    entity_ids[static_cast<std::size_t>(i)] + ")");
  }
}

Matrix EmbeddingMatrix::gather(std::span<const std::size_t> rows) const {
  Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        data.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  return out;
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  m.validate();
  std::string buf;
  buf.reserve(kEmbeddingHeaderBytes + m.data.size() * sizeof(float));
  buf.append(kEmbeddingMagic, 4);
  put<std::uint32_t>(buf, kEmbeddingFormatVersion);
  put<std::uint64_t>(buf, m.rows());
  put<std::uint64_t>(buf, m.dim());
  put<std::uint32_t>(buf, m.layer);
  buf.append(reinterpret_cast<const char*>(m.data.data()), m.data.size() * sizeof(float));

  nlohmann::json meta{{"model_id", m.model_id},
                      {"prompt_kind", std::string(to_string(m.prompt_kind))},
                      {"variable", m.variable ? nlohmann::json(*m.variable) : nlohmann::json()},
                      {"layer", m.layer},
                      {"entity_ids", m.entity_ids}};

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write failed for " + path.string());
  std::ofstream side(sidecar_path(path), std::ios::binary | std::ios::trunc);
  if (!side) throw Error("cannot write " + sidecar_path(path).string());
  side << meta.dump(1) << '\n';
  if (!side) throw Error("write failed for " + sidecar_path(path).string());
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  const std::string buf = slurp(path);
  if (buf.size() < kEmbeddingHeaderBytes) throw Error(path.string() + ": truncated header");
  if (std::memcmp(buf.data(), kEmbeddingMagic, 4) != 0) throw Error(path.string() + ": bad magic");
  const auto version = get<std::uint32_t>(buf, 4);
  if (version != kEmbeddingFormatVersion)
    throw Error(path.string() + ": unsupported format version " + std::to_string(version));
  const auto n = get<std::uint64_t>(buf, 8);
  const auto d = get<std::uint64_t>(buf, 16);
  const auto layer = get<std::uint32_t>(buf, 24);
  const std::uint64_t payload = buf.size() - kEmbeddingHeaderBytes;
  if (d != 0 && n > payload / sizeof(float) / d)
    throw Error(path.string() + ": truncated payload (header declares " + std::to_string(n) +
                "x" + std::to_string(d) + " floats)");
  if (payload != n * d * sizeof(float))
    throw Error(path.string() + ": payload size does not match header");

  EmbeddingMatrix m;
  m.layer = layer;
  m.data.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::memcpy(m.data.data(), buf.data() + kEmbeddingHeaderBytes, payload);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(slurp(sidecar_path(path)));
    m.model_id = meta.at("model_id").get<std::string>();
    m.prompt_kind = parse_prompt_kind(meta.at("prompt_kind").get<std::string>());
    if (!meta.at("variable").is_null()) m.variable = meta.at("variable").get<std::string>();
    m.entity_ids = meta.at("entity_ids").get<std::vector<std::string>>();
    if (meta.at("layer").get<std::uint32_t>() != layer)
      throw Error("sidecar/binary layer mismatch");
  } catch (const nlohmann::json::exception& e) {
    throw Error(sidecar_path(path).string() + ": malformed sidecar: " + e.what());
  }
  if (m.entity_ids.size() != n)
    throw Error(path.string() + ": sidecar/binary N mismatch (" +
                std::to_string(m.entity_ids.size()) + " ids, " + std::to_string(n) + " rows)");
  m.validate();
  return m;
}

std::vector<std::size_t> align(std::span<const std::string> wanted,
                               std::span<const std::string> available) {
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(available.size());
  for (std::size_t i = 0; i < available.size(); ++i) index.emplace(available[i], i);
  std::vector<std::size_t> perm;
  perm.reserve(wanted.size());
  for (const auto& id : wanted) {
    auto it = index.find(id);
    if (it == index.end()) throw Error("entity '" + id + "' has no embedding row");
    perm.push_back(it->second);
  }
  return perm;
}

std::vector<std::size_t> align(const Dataset& dataset, const EmbeddingMatrix& m) {
  return align(dataset.entity_ids, m.entity_ids);
}

std::string embedding_file_name(const EmbeddingMatrix& m) {
  std::string name(to_string(m.prompt_kind));
  if (m.variable && m.prompt_kind != PromptKind::generic) name += "__" + *m.variable;
  name += "__L" + std::to_string(m.layer) + ".lmeb";
  return name;
}

std::filesystem::path find_embeddings(const std::filesystem::path& dir, PromptKind kind,
                                      const std::optional<std::string>& variable,
                                      std::optional<std::uint32_t> layer) {
  if (!std::filesystem::is_directory(dir))
    throw Error("embeddings directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> matches;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".lmeb") continue;
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(slurp(sidecar_path(entry.path())));
    } catch (const std::exception&) {
      continue;  // unreadable sidecar: not a candidate
    }
    if (meta.value("prompt_kind", std::string()) != to_string(kind)) continue;
    if (kind != PromptKind::generic) {
      const auto& v = meta["variable"];
      if (!variable || !v.is_string() || v.get<std::string>() != *variable) continue;
    }
    if (layer && meta.value("layer", -1LL) != static_cast<long long>(*layer)) continue;
    matches.push_back(entry.path());
  }
  const std::string what = std::string(to_string(kind)) +
                           (variable && kind != PromptKind::generic ? " embeddings for '" + *variable + "'"
                                                                    : " embeddings") +
                           (layer ? " at layer " + std::to_string(*layer) : "");
  if (matches.empty()) throw Error("no " + what + " in " + dir.string());
  if (matches.size() > 1)
    throw Error("several " + what + " in " + dir.string() + "; select a layer");
  return matches.front();
}

}  // namespace latent_probe
