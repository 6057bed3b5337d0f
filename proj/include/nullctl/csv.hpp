#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace nullctl {

/// Shortest decimal string that round-trips to the same double.
inline std::string csv_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) {
    throw std::runtime_error("csv: failed to format a number");
  }
  return std::string(buf, res.ptr);
}

/// Minimal CSV accumulator: fixed header, comma separation, '\n' line ends.
/// Cells must not contain commas, quotes or newlines (enforced).
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) {
    append_row(header);
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) {
      throw std::invalid_argument("csv: row width does not match the header");
    }
    append_row(cells);
  }

  [[nodiscard]] const std::string& str() const { return body_; }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("csv: cannot open '" + path.string() + "' for writing");
    }
    out << body_;
    if (!out) {
      throw std::runtime_error("csv: short write to '" + path.string() + "'");
    }
  }

 private:
  void append_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (char c : cells[i]) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
          throw std::invalid_argument("csv: cell contains a reserved character");
        }
      }
      if (i) body_ += ',';
      body_ += cells[i];
    }
    body_ += '\n';
  }

  std::size_t columns_;
  std::string body_;
};

}  // namespace nullctl
