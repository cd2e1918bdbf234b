#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hetlmm::csv {

/// A numeric table read from a comma-separated file.
struct NumericTable {
  std::vector<std::string> header;  // empty when the file has no header row
  Eigen::MatrixXd values;
};

/// Parse comma-separated numeric text. A first row that fails to parse as
/// numbers is treated as a header. Every other cell must be a finite number
/// (scientific notation accepted); errors name the source and 1-based row.
NumericTable parse_numeric(const std::string& text, const std::string& source_name);

NumericTable read_numeric(const std::filesystem::path& path);

/// Write with round-trip precision (17 significant digits).
void write_numeric(std::ostream& out, const Eigen::MatrixXd& values,
                   const std::vector<std::string>& header = {});
void write_numeric(const std::filesystem::path& path, const Eigen::MatrixXd& values,
                   const std::vector<std::string>& header = {});

/// Format a double so that parsing it back yields the same value.
std::string format_double(double value);

/// A table of raw string cells with a mandatory header row, for files that
/// mix labels and numbers.
struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int column(const std::string& name) const;
};

/// Parse text whose first non-empty line is a header; every row must have
/// the header's width.
TextTable parse_table(const std::string& text, const std::string& source_name);
TextTable read_table(const std::filesystem::path& path);

/// Split one CSV line on commas (no quoting support; cells are trimmed).
std::vector<std::string> split_line(const std::string& line);

}  // namespace hetlmm::csv
