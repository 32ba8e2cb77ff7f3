#ifndef ABRSIM_CSV_H_
#define ABRSIM_CSV_H_

#include <string>
#include <string_view>
#include <vector>

namespace abrsim {

// Minimal comma-separated table: first non-empty line is the header, fields
// are trimmed, no quoting. Lines starting with '#' are skipped.
class CsvTable {
 public:
  static CsvTable Parse(std::string_view text, std::string_view source = "csv");

  const std::vector<std::string>& header() const { return header_; }
  size_t rows() const { return rows_.size(); }
  // Throws naming the source and the missing column.
  size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  const std::string& at(size_t row, size_t col) const { return rows_[row][col]; }
  double number(size_t row, size_t col) const;

 private:
  std::string source_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

double ParseNumber(std::string_view field, std::string_view context);

// Shortest representation that reads back to the same double.
std::string FormatNumber(double x);

}  // namespace abrsim

#endif  // ABRSIM_CSV_H_
