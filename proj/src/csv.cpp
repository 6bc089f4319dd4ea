#include "tdmpc/csv.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace tdmpc {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

CsvWriter::CsvWriter(std::ostream& os, const std::vector<std::string>& columns,
                     std::string_view version)
    : os_(os), columns_(columns.size()) {
  if (!version.empty()) os_ << "# " << version << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i > 0) os_ << ',';
    os_ << columns[i];
  }
  os_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw SchemaError("csv row has the wrong number of fields");
  std::string line;
  bool first = true;
  for (double v : values) append(line, first, v);
  write_line(line);
}

void CsvWriter::write_line(const std::string& line) { os_ << line << '\n'; }

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw SchemaError("non-numeric csv field '" + s + "'");
  }
  return v;
}

}  // namespace

CsvTable CsvTable::read(std::istream& is) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      t.comments_.push_back(line.substr(line.size() > 1 && line[1] == ' ' ? 2 : 1));
      continue;
    }
    if (!have_header) {
      t.columns_ = split(line);
      for (std::size_t i = 0; i < t.columns_.size(); ++i) t.index_[t.columns_[i]] = i;
      t.data_.assign(t.columns_.size(), {});
      have_header = true;
      continue;
    }
    const auto fields = split(line);
    if (fields.size() != t.columns_.size()) {
      throw SchemaError("csv line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(t.columns_.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) t.data_[i].push_back(parse_number(fields[i]));
  }
  if (!have_header) throw SchemaError("csv input has no header line");
  return t;
}

CsvTable CsvTable::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path);
  return read(in);
}

const std::vector<double>& CsvTable::column(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw SchemaError("missing csv column '" + name + "'");
  return data_[it->second];
}

void CsvTable::require(const std::vector<std::string>& names) const {
  for (const auto& n : names) {
    if (!has(n)) throw SchemaError("missing csv column '" + n + "'");
  }
}

}  // namespace tdmpc
