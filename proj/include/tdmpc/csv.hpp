#ifndef TDMPC_CSV_HPP_
#define TDMPC_CSV_HPP_

// Minimal CSV writer/reader. Numbers are written in shortest round-trip form
// so that identical runs produce byte-identical files.

#include <charconv>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tdmpc {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_number(double v);

class CsvWriter {
 public:
  /// Writes an optional "# <version>" line and the header.
  CsvWriter(std::ostream& os, const std::vector<std::string>& columns,
            std::string_view version = {});

  template <typename... Ts>
  void row(const Ts&... values) {
    if (sizeof...(Ts) != columns_) throw SchemaError("csv row has the wrong number of fields");
    std::string line;
    bool first = true;
    (append(line, first, values), ...);
    write_line(line);
  }

  void row(const std::vector<double>& values);

 private:
  static void append(std::string& line, bool& first, double v) {
    if (!first) line += ',';
    first = false;
    line += format_number(v);
  }
  static void append(std::string& line, bool& first, int v) {
    append(line, first, static_cast<long long>(v));
  }
  static void append(std::string& line, bool& first, long v) {
    append(line, first, static_cast<long long>(v));
  }
  static void append(std::string& line, bool& first, long long v) {
    if (!first) line += ',';
    first = false;
    line += std::to_string(v);
  }
  static void append(std::string& line, bool& first, const std::string& v) {
    if (!first) line += ',';
    first = false;
    line += v;
  }
  static void append(std::string& line, bool& first, const char* v) {
    append(line, first, std::string(v));
  }

  void write_line(const std::string& line);

  std::ostream& os_;
  std::size_t columns_;
};

/// Numeric table read back from a CSV file. Comment lines starting with '#'
/// are collected separately.
class CsvTable {
 public:
  static CsvTable read(std::istream& is);
  static CsvTable read_file(const std::string& path);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::string>& comments() const { return comments_; }
  std::size_t rows() const { return data_.empty() ? 0 : data_.front().size(); }
  bool has(const std::string& column) const { return index_.count(column) > 0; }

  /// Throws SchemaError naming the column if it is absent.
  const std::vector<double>& column(const std::string& name) const;
  void require(const std::vector<std::string>& names) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::string> comments_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<double>> data_;
};

}  // namespace tdmpc

#endif  // TDMPC_CSV_HPP_
