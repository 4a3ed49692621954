#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ledf {

/// Library-wide error type. Every precondition failure surfaces as one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Order-3 tensor of shape n x c x s with the depth axis contiguous.
///
/// Entry (i, j, a) lives at flat index (i * c + j) * s + a, so the storage is
/// exactly an (n*c) x s row-major matrix. A mode-3 product with an s x t matrix
/// is therefore one dense matrix product on that view.
struct Tensor3 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t s = 0;
  Matrix flat;  // (n*c) x s

  Tensor3() = default;
  Tensor3(std::size_t n_, std::size_t c_, std::size_t s_) : n(n_), c(c_), s(s_), flat(n_ * c_, s_) {}

  double& operator()(std::size_t i, std::size_t j, std::size_t a) { return flat.data[(i * c + j) * s + a]; }
  double operator()(std::size_t i, std::size_t j, std::size_t a) const { return flat.data[(i * c + j) * s + a]; }

  Matrix slice(std::size_t a) const {
    Matrix out(n, c);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) out(i, j) = (*this)(i, j, a);
    return out;
  }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

}  // namespace ledf
