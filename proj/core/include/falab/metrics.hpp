#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace falab {

/// Shortest exact decimal for a double (round-trips bit-for-bit, so reruns
/// with identical state produce byte-identical files).
std::string format_double(double v);

/// Fixed-column CSV with the header written up front. Values are formatted
/// with format_double; rows are flushed on close.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::vector<std::string> columns);

  void row(const std::vector<double>& values);
  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::ofstream out_;
  std::vector<std::string> columns_;
  std::string path_;
};

/// One serialized JSON object per line. Serialization is the caller's
/// problem; this just enforces the one-line framing.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path);

  void row(const std::string& json_object);

 private:
  std::ofstream out_;
  std::string path_;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(const std::string& name) const;
  /// All values of one column, in row order.
  std::vector<double> column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

std::vector<std::string> read_lines(const std::string& path);

}  // namespace falab
