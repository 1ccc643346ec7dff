#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace amx::io {

// printf-style %.{digits}g
std::string format_number(double v, int digits);

// Writes rows x cols values, comma separated, one row per line.
void write_matrix_csv(std::ostream& out, std::span<const double> values, std::size_t rows,
                      std::size_t cols, int digits);
void write_matrix_csv(std::ostream& out, std::span<const float> values, std::size_t rows,
                      std::size_t cols, int digits);

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

// Reads a purely numeric CSV; ragged rows raise ParseError.
Matrix read_matrix_csv(const std::filesystem::path& path);

// Opens for writing, creating parent directories; throws on failure.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace amx::io
