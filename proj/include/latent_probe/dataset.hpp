#ifndef LATENT_PROBE_DATASET_HPP
#define LATENT_PROBE_DATASET_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace latent_probe {

enum class Transform { none, log, cubic };
enum class UnitKind { count, currency, percent, ratio, years };

std::string_view to_string(Transform t);
std::string_view to_string(UnitKind u);
Transform parse_transform(std::string_view s);
UnitKind parse_unit_kind(std::string_view s);

struct VariableSpec {
  std::string name;
  std::string prompt_phrase;
  Transform transform = Transform::none;
  std::optional<double> valid_min;
  std::optional<double> valid_max;
  UnitKind unit_kind = UnitKind::ratio;

  // Throws Error when the bounds are inverted.
  void validate() const;
};

struct VariableColumn {
  VariableSpec spec;
  std::vector<std::optional<double>> values;  // raw units, nullopt = missing
};

struct Dataset {
  std::vector<std::string> entity_ids;
  std::vector<std::string> group_ids;
  std::vector<VariableColumn> columns;
  int year = 0;

  std::size_t size() const { return entity_ids.size(); }
  const VariableColumn& column(std::string_view name) const;
  std::size_t column_index(std::string_view name) const;

  // Checks the structural invariants: unique ids, one group per entity,
  // N cells per column, at least two groups, log only on positive data.
  void validate() const;
};

struct Manifest {
  int year = 0;
  std::vector<VariableSpec> variables;

  const VariableSpec& variable(std::string_view name) const;
};

// Manifest document: {"year": 2019, "variables": [{"name", "prompt_phrase",
// "transform", "valid_min", "valid_max", "unit_kind"}, ...]}. A bare array of
// variable records is accepted as well (year 0).
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(const std::string& json_text);
std::string manifest_to_json(const Manifest& manifest);

Dataset load_dataset(const std::filesystem::path& csv_path,
                     const std::filesystem::path& manifest_path);
Dataset dataset_from_csv(const std::string& csv_text, const Manifest& manifest);
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

double apply_transform(const VariableSpec& spec, double x);
double apply_transform(Transform t, double x);
// True when apply_transform(t, x) is defined.
bool transformable(Transform t, double x);

struct Standardizer {
  double mean = 0.0;
  double sd = 1.0;

  double apply(double x) const { return (x - mean) / sd; }
  double invert(double z) const { return z * sd + mean; }

  // Sample statistics (divisor n-1) over `values`; throws on constant input
  // or fewer than two values.
  static Standardizer fit(std::span<const double> values);
};

std::pair<Standardizer, std::vector<double>> standardize(
    std::span<const double> column, std::span<const std::size_t> fit_rows);

// Rows of present values inside the closed interval [valid_min, valid_max].
std::vector<std::size_t> filter_valid(const VariableColumn& column);
std::vector<std::size_t> filter_valid(
    const VariableSpec& spec, std::span<const std::optional<double>> values);
bool within_bounds(const VariableSpec& spec, double x);

// Transformed copy of a column; missing cells stay missing.
std::vector<std::optional<double>> transformed_values(const VariableColumn& column);

}  // namespace latent_probe

#endif  // LATENT_PROBE_DATASET_HPP
