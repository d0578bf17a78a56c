#include "latent_probe/textnum.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <unordered_map>

#include "latent_probe/common.hpp"
#include "latent_probe/csv.hpp"

namespace latent_probe {

namespace {

// Text under edit, remembering where each byte came from in the original.
struct Scrubbed {
  std::string text;
  std::vector<std::size_t> origin;

  explicit Scrubbed(std::string_view s) : text(s), origin(s.size()) {
    for (std::size_t i = 0; i < s.size(); ++i) origin[i] = i;
  }

  // Replaces every match of `re` with a single space.
  void blank(const std::regex& re) {
    std::string out;
    std::vector<std::size_t> out_origin;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator();
         ++it) {
      const auto pos = static_cast<std::size_t>(it->position(0));
      const auto len = static_cast<std::size_t>(it->length(0));
      if (len == 0) continue;
      out.append(text, last, pos - last);
      out_origin.insert(out_origin.end(), origin.begin() + long(last), origin.begin() + long(pos));
      out.push_back(' ');
      out_origin.push_back(origin[pos]);
      last = pos + len;
    }
    if (last == 0 && out.empty()) return;
    out.append(text, last, std::string::npos);
    out_origin.insert(out_origin.end(), origin.begin() + long(last), origin.end());
    text = std::move(out);
    origin = std::move(out_origin);
  }

  void erase_at(std::size_t i) {
    text.erase(i, 1);
    origin.erase(origin.begin() + long(i));
  }
};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }

const std::string kMonth =
    "(?:January|February|March|April|May|June|July|August|September|October|November|December|"
    "Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sept|Sep|Oct|Nov|Dec)\\.?";
const std::string kDay = "(?:[0-3]?\\d)(?:st|nd|rd|th)?";
const std::string kYear = "(?:1[6-9]|20)\\d{2}";
const std::string kIso = "\\b\\d{4}-\\d{1,2}-\\d{1,2}\\b";
const std::string kSlash = "\\b\\d{1,2}/\\d{1,2}/(?:\\d{4}|\\d{2})\\b";
const std::string kMonthDate = "(?:" + kMonth + "\\s+" + kDay + ",?\\s+" + kYear + "\\b|" +
                               "\\b" + kDay + "\\s+(?:of\\s+)?" + kMonth + ",?\\s+" + kYear +
                               "\\b|" + kMonth + ",?\\s+" + kYear + "\\b)";

struct DatePatterns {
  std::vector<std::regex> passes;
  std::regex empty_parens{"\\(\\s*\\)|\\[\\s*\\]"};

  DatePatterns() {
    const auto ecma = std::regex::ECMAScript | std::regex::optimize;
    const std::string any_date =
        "(?:" + kMonthDate + "|" + kIso + "|" + kSlash + "|\\b" + kMonth + "\\s+" + kDay +
        "\\b|\\b" + kYear + "\\b)";
    // "as of <date>" first so the phrase goes with its date.
    passes.emplace_back("\\b[Aa][Ss]\\s+[Oo][Ff]\\s+" + any_date, ecma);
    passes.emplace_back(kMonthDate, ecma);
    passes.emplace_back(kIso, ecma);
    passes.emplace_back(kSlash, ecma);
    // Month and day without a year: "July 1", not "May 5%".
    passes.emplace_back("\\b(?:January|February|March|April|May|June|July|August|September|"
                        "October|November|December)\\s+" +
                            kDay + "\\b(?![.,]?\\d|\\s*%)",
                        ecma);
    passes.emplace_back("\\(\\s*\\)|\\[\\s*\\]", ecma);
    // Year ranges and years attached to temporal prepositions.
    passes.emplace_back("\\b(?:19|20)\\d{2}\\s*(?:-|/|\xE2\x80\x93|to)\\s*(?:(?:19|20)\\d{2}|\\d{2})\\b",
                        ecma);
    passes.emplace_back("\\b(?:[Ii]n|IN|[Oo]f|[Ff]or|[Dd]uring|[Ss]ince|[Ff]rom|[Uu]ntil|[Tt]hrough|"
                        "[Ff]iscal\\s+[Yy]ear|FY|[Yy]ear|[Tt]he\\s+year|[Yy]ear-end)\\s*'?(?:the\\s+year\\s+)?"
                        "(?:19|20)\\d{2}\\b(?![.,]\\d)",
                        ecma);
    passes.emplace_back("\\(\\s*(?:19|20)\\d{2}\\s*\\)|\\[\\s*(?:19|20)\\d{2}\\s*\\]", ecma);
    passes.emplace_back("\\(\\s*\\)|\\[\\s*\\]", ecma);
  }
};

const DatePatterns& date_patterns() {
  static const DatePatterns p;
  return p;
}

void scrub_dates(Scrubbed& s) {
  for (const auto& re : date_patterns().passes) s.blank(re);
}

// Commas between a digit and exactly three following digits.
void drop_group_separators(Scrubbed& s) {
  for (std::size_t i = 1; i + 3 < s.text.size() + 0; ) {
    const std::string& t = s.text;
    const bool sep = t[i] == ',' && is_digit(t[i - 1]) && is_digit(t[i + 1]) && is_digit(t[i + 2]) &&
                     is_digit(t[i + 3]) && (i + 4 >= t.size() || !is_digit(t[i + 4]));
    if (sep)
      s.erase_at(i);
    else
      ++i;
  }
}

const std::regex& number_pattern() {
  static const std::regex re(
      "((?:-|\\+|\xE2\x88\x92)\\s?)?"                                   // 1 sign before currency
      "((?:US\\$|\\$|\xE2\x82\xAC|\xC2\xA3|\xC2\xA5|USD|EUR|GBP)\\s*)?"  // 2 currency
      "((?:-|\\+|\xE2\x88\x92))?"                                        // 3 sign after currency
      "(\\d+(?:\\.\\d+)?|\\.\\d+)"                                       // 4 mantissa
      "(?:[eE]([-+]?\\d{1,3}))?"                                         // 5 exponent
      "(\\s*(?:%|percent\\b|per\\s?cent\\b|percentage\\s+points?\\b))?"  // 6 percent
      "(?:\\s*(thousand|million|billion|trillion)s?\\b)?",               // 7 magnitude
      std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  return re;
}

struct Token {
  double value = 0.0;       // magnitude-expanded unless percent
  double as_written = 0.0;  // sign, mantissa and exponent only
  bool percent = false;
  std::size_t begin = 0, end = 0;  // in scrubbed text
};

double magnitude_factor(std::string word) {
  for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (word == "thousand") return 1e3;
  if (word == "million") return 1e6;
  if (word == "billion") return 1e9;
  if (word == "trillion") return 1e12;
  return 1.0;
}

std::vector<Token> tokenize(const std::string& t) {
  std::vector<Token> tokens;
  for (auto it = std::sregex_iterator(t.begin(), t.end(), number_pattern()); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    const auto mantissa_pos = static_cast<std::size_t>(m.position(4));
    const auto start = static_cast<std::size_t>(m.position(0));
    // Digits glued to a word ("H1", "COVID-19") are identifiers, not values.
    if (mantissa_pos > 0 && is_alpha(t[mantissa_pos - 1]) && !m[2].matched) continue;
    std::string sign_text = m[3].matched ? m[3].str() : (m[1].matched ? m[1].str() : "");
    const std::size_t sign_pos = m[3].matched ? static_cast<std::size_t>(m.position(3))
                                              : (m[1].matched ? start : mantissa_pos);
    bool negative = !sign_text.empty() && sign_text[0] != '+';
    if (negative && sign_pos > 0) {
      if (is_alpha(t[sign_pos - 1])) continue;  // hyphenated word
      std::size_t b = sign_pos;
      while (b > 0 && t[b - 1] == ' ') --b;
      const char before = b > 0 ? t[b - 1] : ' ';
      if (is_digit(before) || before == '.' || before == '%') negative = false;  // range "5-10", "5 - 10"
    }
    const std::size_t num_end = m[5].matched
                                    ? static_cast<std::size_t>(m.position(5) + m.length(5))
                                    : static_cast<std::size_t>(m.position(4) + m.length(4));
    if (!m[6].matched && !m[7].matched && num_end + 2 <= t.size()) {
      const std::string suffix = t.substr(num_end, 2);
      const bool ordinal = suffix == "st" || suffix == "nd" || suffix == "rd" || suffix == "th";
      if (ordinal && (num_end + 2 == t.size() || !is_alpha(t[num_end + 2]))) continue;
    }

    std::string literal = m[4].str();
    if (m[5].matched) literal += "e" + m[5].str();
    double x = 0.0;
    const char* first = literal.data();
    if (*first == '.') literal.insert(literal.begin(), '0');
    first = literal.data();
    auto [p, ec] = std::from_chars(first, first + literal.size(), x);
    if (ec != std::errc{} || p != first + literal.size() || !std::isfinite(x)) continue;
    if (negative) x = -x;

    Token tok;
    tok.as_written = x;
    tok.percent = m[6].matched;
    tok.value = tok.percent || !m[7].matched ? x : x * magnitude_factor(m[7].str());
    tok.begin = start;
    const bool dropped_sign = !sign_text.empty() && sign_text[0] != '+' && !negative;
    if (dropped_sign && m[1].matched)
      tok.begin = m[2].matched ? static_cast<std::size_t>(m.position(2)) : mantissa_pos;
    else if (dropped_sign)
      tok.begin = m[2].matched ? start : mantissa_pos;
    tok.end = static_cast<std::size_t>(start + static_cast<std::size_t>(m.length(0)));
    while (tok.end > tok.begin && std::isspace(static_cast<unsigned char>(t[tok.end - 1]))) --tok.end;
    tokens.push_back(tok);
  }
  return tokens;
}

const std::regex& refusal_pattern() {
  static const std::regex re(
      "\\bI\\s+(?:do\\s+not|don't|don\xE2\x80\x99t|cannot|can't|can\xE2\x80\x99t|am\\s+unable|am\\s+not\\s+able|"
      "have\\s+no|do\\s+not\\s+have|don't\\s+have)\\b|\\bI'm\\s+(?:unable|not\\s+able|sorry)\\b|"
      "\\bunable\\s+to\\b|\\bcannot\\s+(?:provide|give|determine|estimate|answer|find)\\b|"
      "\\bcan't\\s+(?:provide|give|determine|estimate|answer|find)\\b|"
      "\\bnot\\s+(?:available|possible\\s+to|able\\s+to)\\b|\\bno\\s+(?:reliable\\s+)?(?:data|information)\\b|"
      "\\bI\\s+apologi[sz]e\\b|\\bunknown\\b",
      std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  return re;
}

}  // namespace

std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::no_number: return "no_number";
    case ParseStatus::out_of_range: return "out_of_range";
    case ParseStatus::refused: return "refused";
  }
  return "no_number";
}

ParseStatus parse_status(std::string_view s) {
  if (s == "ok") return ParseStatus::ok;
  if (s == "no_number") return ParseStatus::no_number;
  if (s == "out_of_range") return ParseStatus::out_of_range;
  if (s == "refused") return ParseStatus::refused;
  throw Error("unknown parse status '" + std::string(s) + "'");
}

std::vector<std::optional<double>> TextEstimates::aligned_to(const Dataset& ds) const {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < entity_ids.size(); ++i) index.emplace(entity_ids[i], i);
  std::vector<std::optional<double>> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto it = index.find(ds.entity_ids[i]);
    if (it != index.end()) out[i] = values[it->second];
  }
  return out;
}

std::string strip_dates(std::string_view text) {
  Scrubbed s(text);
  scrub_dates(s);
  return s.text;
}

ParseResult parse_numeric(std::string_view text, PromptKind strategy, const VariableSpec& spec) {
  Scrubbed s(text);
  scrub_dates(s);
  drop_group_separators(s);
  const std::vector<Token> tokens = tokenize(s.text);

  ParseResult result;
  if (tokens.empty()) {
    result.status = std::regex_search(std::string(text), refusal_pattern()) ? ParseStatus::refused
                                                                            : ParseStatus::no_number;
    return result;
  }
  const Token& tok = strategy == PromptKind::qa ? tokens.front() : tokens.back();
  const double value = spec.unit_kind == UnitKind::percent ? tok.as_written : tok.value;
  result.value = value;
  result.span_begin = s.origin[tok.begin];
  result.span_end = s.origin[tok.end - 1] + 1;
  result.status = within_bounds(spec, value) ? ParseStatus::ok : ParseStatus::out_of_range;
  return result;
}

std::vector<AnswerRow> answers_from_csv(const std::string& csv_text) {
  const csv::Table table = csv::parse(csv_text);
  const std::size_t ce = table.column("entity_id"), cv = table.column("variable"),
                    ct = table.column("text");
  std::vector<AnswerRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows) rows.push_back({r[ce], r[cv], r[ct]});
  return rows;
}

std::vector<AnswerRow> read_answers(const std::filesystem::path& path) {
  const csv::Table table = csv::read_file(path);
  const std::size_t ce = table.column("entity_id"), cv = table.column("variable"),
                    ct = table.column("text");
  std::vector<AnswerRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& r : table.rows) rows.push_back({r[ce], r[cv], r[ct]});
  return rows;
}

BatchParse parse_batch(const std::vector<AnswerRow>& answers, const Manifest& manifest,
                       PromptKind strategy) {
  BatchParse batch;
  batch.rows = answers;
  batch.results.reserve(answers.size());
  for (const auto& row : answers) {
    const VariableSpec& spec = manifest.variable(row.variable);
    ParseResult r = parse_numeric(row.text, strategy, spec);
    StatusCounts& counts = batch.counts[row.variable];
    auto [it, inserted] = batch.estimates.try_emplace(row.variable);
    if (inserted) {
      it->second.variable = row.variable;
      it->second.prompt_kind = strategy;
    }
    switch (r.status) {
      case ParseStatus::ok:
        ++counts.ok;
        it->second.entity_ids.push_back(row.entity_id);
        it->second.values.push_back(r.value);
        break;
      case ParseStatus::no_number: ++counts.no_number; break;
      case ParseStatus::out_of_range: ++counts.out_of_range; break;
      case ParseStatus::refused: ++counts.refused; break;
    }
    batch.results.push_back(r);
  }
  return batch;
}

void write_parse_results(const BatchParse& batch, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"entity_id", "variable", "value", "status"});
  for (std::size_t i = 0; i < batch.rows.size(); ++i) {
    const auto& r = batch.results[i];
    csv::write_row(out, {batch.rows[i].entity_id, batch.rows[i].variable,
                         r.value ? csv::format_number(*r.value) : "",
                         std::string(to_string(r.status))});
  }
  if (!out) throw Error("write failed for " + path.string());
}

void write_text_estimates(const std::vector<TextEstimates>& estimates,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"entity_id", "variable", "value", "status"});
  for (const auto& est : estimates)
    for (std::size_t i = 0; i < est.size(); ++i)
      csv::write_row(out, {est.entity_ids[i], est.variable,
                           est.values[i] ? csv::format_number(*est.values[i]) : "",
                           est.values[i] ? "ok" : "no_number"});
  if (!out) throw Error("write failed for " + path.string());
}

std::map<std::string, TextEstimates> read_text_estimates(const std::filesystem::path& path,
                                                        PromptKind kind) {
  const csv::Table table = csv::read_file(path);
  const std::size_t ce = table.column("entity_id"), cv = table.column("variable"),
                    cval = table.column("value"), cs = table.column("status");
  std::map<std::string, TextEstimates> out;
  for (const auto& r : table.rows) {
    auto [it, inserted] = out.try_emplace(r[cv]);
    if (inserted) {
      it->second.variable = r[cv];
      it->second.prompt_kind = kind;
    }
    if (parse_status(r[cs]) != ParseStatus::ok) continue;
    double x = 0.0;
    const std::string& v = r[cval];
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(x))
      throw Error(path.string() + ": bad value '" + v + "' for entity " + r[ce]);
    it->second.entity_ids.push_back(r[ce]);
    it->second.values.push_back(x);
  }
  return out;
}

}  // namespace latent_probe
