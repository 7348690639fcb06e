#pragma once

#include <filesystem>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hemalimit {

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// Quotes a CSV field when it contains a separator, quote or line break.
std::string csv_field(std::string_view text);

/// Row-oriented CSV builder; the header row is mandatory.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add_row(const std::vector<double>& values);
  void add_row(const std::vector<std::string>& fields);

  std::size_t columns() const { return header_.size(); }
  std::size_t rows() const { return rows_; }
  std::string str() const { return text_; }

 private:
  std::vector<std::string> header_;
  std::string text_;
  std::size_t rows_ = 0;
};

/// I/O failure (CLI exit status 4).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes via a temporary sibling file and rename, so readers never see a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Lower-case hex SHA-256 of `content`.
std::string sha256_hex(std::string_view content);

}  // namespace hemalimit
