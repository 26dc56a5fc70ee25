#include "lopt/io.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <unistd.h>

namespace lopt {

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot replace " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_writable(const std::filesystem::path& path) {
  std::filesystem::path probe = path;
  probe += ".probe" + std::to_string(::getpid());
  {
    std::ofstream out(probe, std::ios::binary);
    if (!out) throw std::runtime_error("output path not writable: " + path.string());
  }
  std::filesystem::remove(probe);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row() {
  if (!rows_.empty() && rows_.back().size() != header_.size()) {
    throw std::logic_error("csv row has " + std::to_string(rows_.back().size()) + " fields, header has " +
                           std::to_string(header_.size()));
  }
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(double v) { return add(std::string_view(format_double(v))); }

CsvTable& CsvTable::add(std::int64_t v) { return add(std::string_view(std::to_string(v))); }

CsvTable& CsvTable::add(std::string_view v) {
  if (rows_.empty()) throw std::logic_error("csv add before row");
  if (v.find_first_of(",\n\"") != std::string_view::npos) throw std::invalid_argument("csv field needs quoting");
  rows_.back().emplace_back(v);
  return *this;
}

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += fields[i];
    }
    out += '\n';
  };
  line(header_);
  for (const auto& r : rows_) {
    if (r.size() != header_.size()) throw std::logic_error("incomplete csv row");
    line(r);
  }
  return out;
}

std::size_t CsvData::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::out_of_range("no csv column '" + std::string(name) + "'");
}

CsvData parse_csv(std::string_view text) {
  CsvData data;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::vector<std::string> fields;
    std::string_view line = text.substr(pos, end - pos);
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.emplace_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (first) {
      data.header = std::move(fields);
      first = false;
    } else if (!line.empty()) {
      data.rows.push_back(std::move(fields));
    }
    pos = end + 1;
  }
  return data;
}

}  // namespace lopt
