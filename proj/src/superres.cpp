#include "latent_probe/superres.hpp"

#include <fstream>

#include "latent_probe/correlation.hpp"
#include "latent_probe/csv.hpp"
#include "latent_probe/probe_eval.hpp"

namespace latent_probe {

std::vector<double> fit_high_predict_low(const CoarseLevel& high, const FineLevel& low,
                                         std::span<const double> lambda_grid) {
  if (high.embeddings.dim() != low.embeddings.dim())
    throw Error("super-resolution: embedding dimension mismatch (" + std::to_string(high.embeddings.dim()) +
                " vs " + std::to_string(low.embeddings.dim()) + ")");
  const VariableColumn& col = high.dataset.column(high.variable);
  const auto perm = align(high.dataset, high.embeddings);
  std::vector<std::size_t> rows;
  std::vector<double> y;
  for (std::size_t i = 0; i < high.dataset.size(); ++i) {
    if (!col.values[i]) continue;
    rows.push_back(perm[i]);
    y.push_back(apply_transform(col.spec, *col.values[i]));
  }
  const Matrix X = high.embeddings.gather(rows);
  const RidgeModel model =
      ridge_fit_auto(X, Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size())), lambda_grid);
  const auto low_perm = align(low.entity_ids, low.embeddings.entity_ids);
  const Vector pred = model.predict(low.embeddings.gather(low_perm));
  return {pred.data(), pred.data() + pred.size()};
}

ParentMap load_parent_map(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("mapping file " + path.string() + " does not exist");
  const csv::Table table = csv::read_file(path);
  if (table.header.size() != 2) throw Error(path.string() + ": mapping CSV must have two columns low_id,high_id");
  ParentMap map;
  for (const auto& row : table.rows)
    if (!map.emplace(row[0], row[1]).second)
      throw Error(path.string() + ": low entity '" + row[0] + "' mapped twice");
  return map;
}

void write_parent_map(const ParentMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"low_id", "high_id"});
  for (const auto& [low, high] : map) csv::write_row(out, {low, high});
}

std::vector<double> naive_project(const ParentMap& mapping,
                                  const std::map<std::string, double>& high_values,
                                  std::span<const std::string> low_ids) {
  std::vector<double> out;
  out.reserve(low_ids.size());
  for (const auto& id : low_ids) {
    auto parent = mapping.find(id);
    if (parent == mapping.end()) throw Error("low entity '" + id + "' has no parent in the mapping");
    auto value = high_values.find(parent->second);
    if (value == high_values.end())
      throw Error("parent '" + parent->second + "' of '" + id + "' has no value");
    out.push_back(value->second);
  }
  return out;
}

std::vector<SuperresRow> evaluate_superres(const Dataset& low, const std::string& variable,
                                           const std::map<std::string, std::vector<double>>& predictions,
                                           const TextEstimates* text) {
  const EvaluableRows ev = evaluable_rows(low, variable, text);
  std::vector<SuperresRow> out;
  auto score = [&](const std::string& method, const std::vector<double>& values) {
    SuperresRow row{variable, method, try_spearman(values, ev.truth), ev.rows.size(), ""};
    if (!row.spearman) row.note = "undefined correlation (constant predictions)";
    out.push_back(std::move(row));
  };
  for (const auto& [method, pred] : predictions) {
    if (pred.size() != low.size())
      throw Error("super-resolution: method '" + method + "' does not predict every fine entity");
    std::vector<double> v;
    v.reserve(ev.rows.size());
    for (std::size_t r : ev.rows) v.push_back(pred[r]);
    score(method, v);
  }
  if (text) {
    std::vector<double> v;
    for (const auto& t : ev.text) v.push_back(*t);
    score("text", v);
  }
  return out;
}

void write_superres_csv(std::span<const SuperresRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"variable", "method", "spearman"});
  for (const auto& r : rows)
    csv::write_row(out, {r.variable, r.method, r.spearman ? csv::format_number(*r.spearman) : ""});
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace latent_probe
