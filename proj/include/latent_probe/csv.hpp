#ifndef LATENT_PROBE_CSV_HPP
#define LATENT_PROBE_CSV_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace latent_probe::csv {

// RFC 4180 style tables: comma separated, double-quote escaping, quoted
// fields may span lines. A trailing newline does not create an empty row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or throws Error naming the column.
  std::size_t column(const std::string& name) const;
};

Table parse(const std::string& text);
Table read_file(const std::filesystem::path& path);

std::string escape(const std::string& field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Shortest representation that round-trips a double.
std::string format_number(double value);

}  // namespace latent_probe::csv

#endif  // LATENT_PROBE_CSV_HPP
