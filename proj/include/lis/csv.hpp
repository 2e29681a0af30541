#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lis {

/// Shortest decimal string that parses back to exactly `x`.
std::string format_double(double x);

/// Parses a whole field as a double; false on any trailing garbage.
bool parse_double(std::string_view text, double& out);

/// RFC-4180 field quoting: fields containing comma, quote, CR or LF are
/// wrapped in quotes with embedded quotes doubled.
std::string csv_escape(std::string_view field);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void row(const std::vector<std::string>& fields);
  void row(const std::vector<double>& values);

 private:
  std::ostream& os_;
};

/// Splits one CSV record (no embedded newlines) honoring quotes.
std::vector<std::string> csv_split(std::string_view line);

/// Writes `contents` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace lis
