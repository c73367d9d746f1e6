#include "cli/csv.hpp"

#include <charconv>
#include <system_error>

namespace dra::cli {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void CsvWriter::write_header(const std::vector<std::string>& names) {
  for (size_t k = 0; k < names.size(); ++k) {
    if (k) out_ << ',';
    out_ << csv_escape(names[k]);
  }
  out_ << '\n';
}

void CsvWriter::write_row(const std::vector<double>& values) {
  for (size_t k = 0; k < values.size(); ++k) {
    if (k) out_ << ',';
    out_ << format_double(values[k]);
  }
  out_ << '\n';
}

}  // namespace dra::cli
