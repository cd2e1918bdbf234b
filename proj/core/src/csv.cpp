#include "hetlmm/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "hetlmm/errors.hpp"

namespace hetlmm::csv {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

enum class CellKind { number, non_finite, text };

CellKind parse_cell(const std::string& cell, double& value) {
  if (cell.empty()) return CellKind::text;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec == std::errc::result_out_of_range) return CellKind::non_finite;
  if (ec != std::errc() || ptr != end) return CellKind::text;
  return std::isfinite(value) ? CellKind::number : CellKind::non_finite;
}

}  // namespace

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

NumericTable parse_numeric(const std::string& text, const std::string& source_name) {
  NumericTable table;
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool first_content_row = true;

  // Skip a UTF-8 byte order mark if present.
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    in.seekg(3);
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    std::vector<double> parsed;
    parsed.reserve(cells.size());
    std::optional<std::size_t> bad_cell;
    bool non_finite = false;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const auto kind = parse_cell(cells[c], v);
      if (kind != CellKind::number) {
        bad_cell = c;
        non_finite = kind == CellKind::non_finite;
        break;
      }
      parsed.push_back(v);
    }
    if (bad_cell) {
      if (first_content_row && !non_finite) {
        table.header = std::move(cells);
        width = table.header.size();
        first_content_row = false;
        continue;
      }
      throw DataError(source_name + ": row " + std::to_string(line_no) + ", column " +
                      std::to_string(*bad_cell + 1) + ": cannot parse '" + cells[*bad_cell] +
                      "' as a finite number");
    }
    if (first_content_row) {
      width = parsed.size();
      first_content_row = false;
    }
    if (parsed.size() != width) {
      throw DataError(source_name + ": row " + std::to_string(line_no) + " has " +
                      std::to_string(parsed.size()) + " columns, expected " +
                      std::to_string(width));
    }
    rows.push_back(std::move(parsed));
  }

  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

NumericTable read_numeric(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_numeric(buffer.str(), path.string());
}

int TextTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == name) return static_cast<int>(c);
  return -1;
}

TextTable parse_table(const std::string& text, const std::string& source_name) {
  TextTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      throw DataError(source_name + ": row " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " columns, expected " +
                      std::to_string(table.header.size()));
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw DataError(source_name + ": missing header row");
  return table;
}

TextTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_table(buffer.str(), path.string());
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, ptr);
}

void write_numeric(std::ostream& out, const Eigen::MatrixXd& values,
                   const std::vector<std::string>& header) {
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
  }
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      out << (c ? "," : "") << format_double(values(r, c));
    out << '\n';
  }
}

void write_numeric(const std::filesystem::path& path, const Eigen::MatrixXd& values,
                   const std::vector<std::string>& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  write_numeric(out, values, header);
}

}  // namespace hetlmm::csv
