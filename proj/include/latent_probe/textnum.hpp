#ifndef LATENT_PROBE_TEXTNUM_HPP
#define LATENT_PROBE_TEXTNUM_HPP

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latent_probe/dataset.hpp"
#include "latent_probe/embedding_store.hpp"

namespace latent_probe {

enum class ParseStatus { ok, no_number, out_of_range, refused };

std::string_view to_string(ParseStatus s);
ParseStatus parse_status(std::string_view s);

struct ParseResult {
  std::optional<double> value;  // present iff ok or out_of_range
  ParseStatus status = ParseStatus::no_number;
  // Byte range [begin, end) of the selected token in the original answer.
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
};

// One numeric estimate per entity parsed from LLM answers for one variable,
// in raw variable units.
struct TextEstimates {
  std::string variable;
  PromptKind prompt_kind = PromptKind::completion;
  std::vector<std::string> entity_ids;
  std::vector<std::optional<double>> values;

  std::size_t size() const { return entity_ids.size(); }
  // Values reordered to `ds`; entities without an estimate are nullopt.
  std::vector<std::optional<double>> aligned_to(const Dataset& ds) const;
};

// Number extraction: scrub dates, drop digit-group commas, tokenize numbers
// with sign, decimals, exponent, currency, percent and magnitude words, pick
// the first token for qa answers and the last otherwise, then range check.
ParseResult parse_numeric(std::string_view text, PromptKind strategy, const VariableSpec& spec);

// Answer text with date expressions replaced by spaces. Exposed for tests.
std::string strip_dates(std::string_view text);

struct AnswerRow {
  std::string entity_id;
  std::string variable;
  std::string text;
};

struct StatusCounts {
  std::size_t ok = 0, no_number = 0, out_of_range = 0, refused = 0;
  std::size_t total() const { return ok + no_number + out_of_range + refused; }
};

struct BatchParse {
  std::vector<AnswerRow> rows;
  std::vector<ParseResult> results;            // parallel to rows
  std::map<std::string, TextEstimates> estimates;  // ok values only
  std::map<std::string, StatusCounts> counts;
};

std::vector<AnswerRow> read_answers(const std::filesystem::path& path);
std::vector<AnswerRow> answers_from_csv(const std::string& csv_text);

BatchParse parse_batch(const std::vector<AnswerRow>& answers, const Manifest& manifest,
                       PromptKind strategy);

// TextEstimates CSV: entity_id,variable,value,status.
void write_parse_results(const BatchParse& batch, const std::filesystem::path& path);
void write_text_estimates(const std::vector<TextEstimates>& estimates,
                          const std::filesystem::path& path);
// Rows with status ok only, grouped by variable.
std::map<std::string, TextEstimates> read_text_estimates(const std::filesystem::path& path,
                                                        PromptKind kind = PromptKind::completion);

}  // namespace latent_probe

#endif  // LATENT_PROBE_TEXTNUM_HPP
