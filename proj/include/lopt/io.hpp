#pragma once

// File and CSV helpers shared by the command-line tools.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lopt {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Throws std::runtime_error when a file cannot be created at `path`.
void check_writable(const std::filesystem::path& path);

/// In-memory CSV with a fixed header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  CsvTable& row();
  CsvTable& add(double v);
  CsvTable& add(std::int64_t v);
  CsvTable& add(int v) { return add(static_cast<std::int64_t>(v)); }
  CsvTable& add(std::string_view v);

  std::size_t rows() const { return rows_.size(); }
  const std::vector<std::string>& header() const { return header_; }
  std::string str() const;
  void save(const std::filesystem::path& path) const { write_file_atomic(path, str()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Header and rows of a CSV file written by CsvTable.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};
CsvData parse_csv(std::string_view text);

}  // namespace lopt
