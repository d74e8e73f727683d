#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace multires {

// Minimal RFC-4180-ish reader: comma separated, optional double quotes,
// header row required. Used for every input bundle file.
struct CsvTable {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row

  // Index of a header column; throws ValidationError if missing.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  // "<file>:<line>" for error messages.
  std::string where(std::size_t row) const;
  double number(std::size_t row, std::size_t col) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace multires
