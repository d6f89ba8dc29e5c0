#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace knockint::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column_index(const std::string& name) const;  // throws if absent
};

// Reads a rectangular comma-separated file with a header row. Cells are kept
// as raw strings; ragged rows are an error.
Table read_table(const std::string& path);

// Numeric view of a table; empty or non-numeric cells raise with the
// offending row numbers listed.
Eigen::MatrixXd to_matrix(const Table& table);

void write_matrix(const std::string& path, const std::vector<std::string>& header,
                  const Eigen::MatrixXd& values);

// Round-trip formatting used everywhere a double is persisted.
std::string format_double(double v);
double parse_double(const std::string& cell, const std::string& context);

}  // namespace knockint::csv
