#include "amx/io/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "amx/error.hpp"

namespace amx::io {

std::string format_number(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

namespace {

template <class T>
void write_csv(std::ostream& out, std::span<const T> values, std::size_t rows, std::size_t cols,
               int digits) {
  if (values.size() != rows * cols) throw DimensionError("csv: value count does not match shape");
  std::string line;
  for (std::size_t r = 0; r < rows; ++r) {
    line.clear();
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) line.push_back(',');
      line += format_number(static_cast<double>(values[r * cols + c]), digits);
    }
    line.push_back('\n');
    out << line;
  }
}

}  // namespace

void write_matrix_csv(std::ostream& out, std::span<const double> values, std::size_t rows,
                      std::size_t cols, int digits) {
  write_csv(out, values, rows, cols, digits);
}

void write_matrix_csv(std::ostream& out, std::span<const float> values, std::size_t rows,
                      std::size_t cols, int digits) {
  write_csv(out, values, rows, cols, digits);
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("csv: cannot open " + path.string());
  Matrix m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t cols = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto* begin = cell.data();
      const auto* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(begin, end, v);
      if (ec != std::errc() || ptr != end) {
        throw ParseError("csv: bad number '" + cell + "' in " + path.string());
      }
      m.values.push_back(v);
      ++cols;
    }
    if (m.rows == 0) {
      m.cols = cols;
    } else if (cols != m.cols) {
      throw ParseError("csv: ragged row " + std::to_string(m.rows + 1) + " in " + path.string());
    }
    ++m.rows;
  }
  return m;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace amx::io
