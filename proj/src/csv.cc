#include "abrsim/csv.h"

#include <charconv>
#include <cmath>

#include "abrsim/error.h"

namespace abrsim {
namespace {

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitFields(std::string_view line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(Trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

CsvTable CsvTable::Parse(std::string_view text, std::string_view source) {
  CsvTable table;
  table.source_ = source;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = Trim(text.substr(pos, nl == std::string_view::npos ? nl : nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    auto fields = SplitFields(line);
    if (table.header_.empty()) {
      table.header_ = std::move(fields);
      continue;
    }
    if (fields.size() != table.header_.size()) {
      throw Error(table.source_ + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(table.header_.size()) + " fields, got " +
                  std::to_string(fields.size()));
    }
    table.rows_.push_back(std::move(fields));
  }
  if (table.header_.empty()) throw Error(table.source_ + ": missing header line");
  return table;
}

bool CsvTable::has_column(std::string_view name) const {
  for (const auto& h : header_) {
    if (h == name) return true;
  }
  return false;
}

size_t CsvTable::column(std::string_view name) const {
  for (size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  throw Error(source_ + ": missing column '" + std::string(name) + "'");
}

double CsvTable::number(size_t row, size_t col) const {
  return ParseNumber(rows_[row][col], source_ + " row " + std::to_string(row + 1) + " column '" +
                                          header_[col] + "'");
}

double ParseNumber(std::string_view field, std::string_view context) {
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty()) {
    throw Error(std::string(context) + ": not a number: '" + std::string(field) + "'");
  }
  return value;
}

std::string FormatNumber(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf, ptr);
}

}  // namespace abrsim
