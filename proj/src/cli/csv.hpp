#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace dra::cli {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// RFC-4180 quoting: fields containing commas, quotes or newlines are
/// wrapped in double quotes with embedded quotes doubled.
std::string csv_escape(std::string_view field);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  void write_header(const std::vector<std::string>& names);
  void write_row(const std::vector<double>& values);

 private:
  std::ostream& out_;
};

}  // namespace dra::cli
