#pragma once

#include <cstddef>
#include <vector>

#include "wam/error.hpp"

namespace wam {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }

  bool operator==(const Matrix&) const = default;
};

/// x (n x in) times w^T where w is (out x in); plain double accumulation.
inline Matrix matmul_transposed(const Matrix& x, const Matrix& w) {
  require(x.cols == w.cols, "matmul: inner dimensions differ");
  Matrix y(x.rows, w.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < w.rows; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < x.cols; ++k) acc += x(i, k) * w(j, k);
      y(i, j) = acc;
    }
  return y;
}

}  // namespace wam
