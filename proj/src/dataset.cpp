#include "latent_probe/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "latent_probe/common.hpp"
#include "latent_probe/csv.hpp"

namespace latent_probe {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_cell(std::string_view cell, std::size_t row,
                                 const std::string& column) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value))
    throw Error("non-numeric cell '" + std::string(cell) + "' in column '" +
                column + "' at data row " + std::to_string(row + 1));
  return value;
}

std::optional<double> optional_number(const nlohmann::json& record,
                                      const char* key) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw Error(std::string("manifest field '") + key + "' must be a number");
  return it->get<double>();
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

std::string_view to_string(Transform t) {
  switch (t) {
    case Transform::none: return "none";
    case Transform::log: return "log";
    case Transform::cubic: return "cubic";
  }
  return "none";
}

std::string_view to_string(UnitKind u) {
  switch (u) {
    case UnitKind::count: return "count";
    case UnitKind::currency: return "currency";
    case UnitKind::percent: return "percent";
    case UnitKind::ratio: return "ratio";
    case UnitKind::years: return "years";
  }
  return "ratio";
}

Transform parse_transform(std::string_view s) {
  if (s == "none") return Transform::none;
  if (s == "log") return Transform::log;
  if (s == "cubic") return Transform::cubic;
  throw Error("unknown transform '" + std::string(s) + "'");
}

UnitKind parse_unit_kind(std::string_view s) {
  if (s == "count") return UnitKind::count;
  if (s == "currency") return UnitKind::currency;
  if (s == "percent") return UnitKind::percent;
  if (s == "ratio") return UnitKind::ratio;
  if (s == "years") return UnitKind::years;
  throw Error("unknown unit_kind '" + std::string(s) + "'");
}

void VariableSpec::validate() const {
  if (name.empty()) throw Error("variable with empty name");
  if (valid_min && valid_max && !(*valid_min < *valid_max))
    throw Error("variable '" + name + "': valid_min must be below valid_max");
}

const VariableColumn& Dataset::column(std::string_view name) const {
  return columns[column_index(name)];
}

std::size_t Dataset::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].spec.name == name) return i;
  throw Error("unknown variable '" + std::string(name) + "'");
}

void Dataset::validate() const {
  const std::size_t n = entity_ids.size();
  std::unordered_set<std::string> seen;
  for (const auto& id : entity_ids)
    if (!seen.insert(id).second) throw Error("duplicate entity id '" + id + "'");
  if (group_ids.size() != n) throw Error("group label count differs from entity count");
  std::set<std::string_view> groups(group_ids.begin(), group_ids.end());
  if (groups.size() < 2) throw Error("dataset needs at least 2 distinct groups");
  for (const auto& col : columns) {
    col.spec.validate();
    if (col.values.size() != n)
      throw Error("column '" + col.spec.name + "' does not have one cell per entity");
    if (col.spec.transform == Transform::log)
      for (const auto& v : col.values)
        if (v && !(*v > 0.0))
          throw Error("log transform on variable '" + col.spec.name +
                      "' requires all observed values > 0");
  }
}

const VariableSpec& Manifest::variable(std::string_view name) const {
  for (const auto& v : variables)
    if (v.name == name) return v;
  throw Error("unknown variable '" + std::string(name) + "'");
}

Manifest parse_manifest(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("manifest is not valid JSON: ") + e.what());
  }
  Manifest manifest;
  const nlohmann::json* records = &doc;
  if (doc.is_object()) {
    manifest.year = doc.value("year", 0);
    auto it = doc.find("variables");
    if (it == doc.end()) throw Error("manifest has no 'variables' list");
    records = &*it;
  }
  if (!records->is_array()) throw Error("manifest variables must be a list");
  std::set<std::string> names;
  for (const auto& rec : *records) {
    VariableSpec spec;
    try {
      spec.name = rec.at("name").get<std::string>();
      spec.prompt_phrase = rec.value("prompt_phrase", spec.name);
      spec.transform = parse_transform(rec.value("transform", std::string("none")));
      spec.unit_kind = parse_unit_kind(rec.value("unit_kind", std::string("ratio")));
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("malformed manifest record: ") + e.what());
    }
    spec.valid_min = optional_number(rec, "valid_min");
    spec.valid_max = optional_number(rec, "valid_max");
    spec.validate();
    if (!names.insert(spec.name).second)
      throw Error("manifest lists variable '" + spec.name + "' twice");
    manifest.variables.push_back(std::move(spec));
  }
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path) {
  try {
    return parse_manifest(read_text(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string manifest_to_json(const Manifest& manifest) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : manifest.variables) {
    nlohmann::json rec;
    rec["name"] = v.name;
    rec["prompt_phrase"] = v.prompt_phrase;
    rec["transform"] = std::string(to_string(v.transform));
    rec["valid_min"] = v.valid_min ? nlohmann::json(*v.valid_min) : nlohmann::json();
    rec["valid_max"] = v.valid_max ? nlohmann::json(*v.valid_max) : nlohmann::json();
    rec["unit_kind"] = std::string(to_string(v.unit_kind));
    vars.push_back(std::move(rec));
  }
  nlohmann::json doc{{"year", manifest.year}, {"variables", std::move(vars)}};
  return doc.dump(2) + "\n";
}

Dataset dataset_from_csv(const std::string& csv_text, const Manifest& manifest) {
  const csv::Table table = csv::parse(csv_text);
  if (table.header.size() < 2 || table.header[0] != "entity_id" || table.header[1] != "group")
    throw Error("CSV must start with columns entity_id,group");
  const std::size_t n_vars = table.header.size() - 2;
  if (n_vars != manifest.variables.size())
    throw Error("manifest/CSV column mismatch: CSV has " + std::to_string(n_vars) +
                " variable columns, manifest lists " +
                std::to_string(manifest.variables.size()));

  Dataset ds;
  ds.year = manifest.year;
  for (std::size_t c = 0; c < n_vars; ++c) {
    const std::string& name = table.header[c + 2];
    auto it = std::find_if(manifest.variables.begin(), manifest.variables.end(),
                           [&](const VariableSpec& v) { return v.name == name; });
    if (it == manifest.variables.end())
      throw Error("manifest/CSV column mismatch: column '" + name + "' not in manifest");
    ds.columns.push_back({*it, {}});
    ds.columns.back().values.reserve(table.rows.size());
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    ds.entity_ids.push_back(row[0]);
    ds.group_ids.push_back(row[1]);
    for (std::size_t c = 0; c < n_vars; ++c)
      ds.columns[c].values.push_back(parse_cell(row[c + 2], r, table.header[c + 2]));
  }
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::filesystem::path& csv_path,
                     const std::filesystem::path& manifest_path) {
  const Manifest manifest = load_manifest(manifest_path);
  const std::string text = read_text(csv_path);
  try {
    return dataset_from_csv(text, manifest);
  } catch (const Error& e) {
    throw Error(csv_path.string() + ": " + e.what());
  }
}

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  std::vector<std::string> fields{"entity_id", "group"};
  for (const auto& col : ds.columns) fields.push_back(col.spec.name);
  csv::write_row(out, fields);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    fields = {ds.entity_ids[i], ds.group_ids[i]};
    for (const auto& col : ds.columns)
      fields.push_back(col.values[i] ? csv::format_number(*col.values[i]) : "");
    csv::write_row(out, fields);
  }
  if (!out) throw Error("write failed for " + path.string());
}

bool transformable(Transform t, double x) {
  if (!std::isfinite(x)) return false;
  return t != Transform::log || x > 0.0;
}

double apply_transform(Transform t, double x) {
  switch (t) {
    case Transform::none:
      return x;
    case Transform::log:
      if (!(x > 0.0)) throw Error("log transform of non-positive value " + csv::format_number(x));
      return std::log(x);
    case Transform::cubic:
      return std::cbrt(x);  // odd, so sign is preserved
  }
  return x;
}

double apply_transform(const VariableSpec& spec, double x) {
  return apply_transform(spec.transform, x);
}

Standardizer Standardizer::fit(std::span<const double> values) {
  if (values.size() < 2) throw Error("standardization needs at least 2 values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0) || sd <= 1e-12 * std::max(1.0, std::abs(mean)))
    throw Error("constant column cannot be standardized");
  return {mean, sd};
}

std::pair<Standardizer, std::vector<double>> standardize(
    std::span<const double> column, std::span<const std::size_t> fit_rows) {
  if (fit_rows.empty()) throw Error("standardize: empty fit row set");
  std::vector<double> fit_values;
  fit_values.reserve(fit_rows.size());
  for (std::size_t r : fit_rows) {
    if (r >= column.size()) throw Error("standardize: fit row out of range");
    fit_values.push_back(column[r]);
  }
  const Standardizer s = Standardizer::fit(fit_values);
  std::vector<double> out(column.size());
  std::transform(column.begin(), column.end(), out.begin(),
                 [&](double x) { return s.apply(x); });
  return {s, std::move(out)};
}

bool within_bounds(const VariableSpec& spec, double x) {
  if (spec.valid_min && x < *spec.valid_min) return false;
  if (spec.valid_max && x > *spec.valid_max) return false;
  return true;
}

std::vector<std::size_t> filter_valid(const VariableSpec& spec,
                                      std::span<const std::optional<double>> values) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] && within_bounds(spec, *values[i])) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> filter_valid(const VariableColumn& column) {
  return filter_valid(column.spec, column.values);
}

std::vector<std::optional<double>> transformed_values(const VariableColumn& column) {
  std::vector<std::optional<double>> out(column.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (column.values[i]) out[i] = apply_transform(column.spec, *column.values[i]);
  return out;
}

}  // namespace latent_probe
