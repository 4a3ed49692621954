#include "ledf/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>

namespace ledf::kernels {

namespace {

void check_matmul(const Matrix& x, const Matrix& w) {
  require(x.cols == w.rows, "matmul: shape mismatch " + shape_str(x) + " * " + shape_str(w));
}

void check_spmm(const CsrMatrix& a, const Matrix& x) {
  require(a.n == x.rows, "spmm: adjacency is " + std::to_string(a.n) + "x" + std::to_string(a.n) +
                             " but dense operand is " + shape_str(x));
}

}  // namespace

void set_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int max_threads() { return omp_get_max_threads(); }

Matrix spmm(const CsrMatrix& a, const Matrix& x) {
  check_spmm(a, x);
  Matrix out(a.n, x.cols);
  const std::size_t k = x.cols;
  const auto n = static_cast<std::int64_t>(a.n);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* dst = out.data.data() + i * k;
    for (std::size_t e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e) {
      const double v = a.val[e];
      const double* src = x.data.data() + static_cast<std::size_t>(a.col[e]) * k;
      for (std::size_t t = 0; t < k; ++t) dst[t] += v * src[t];
    }
  }
  return out;
}

Matrix matmul(const Matrix& x, const Matrix& w) {
  check_matmul(x, w);
  Matrix out(x.rows, w.cols);
  const std::size_t inner = x.cols, b = w.cols;
  const auto n = static_cast<std::int64_t>(x.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* dst = out.data.data() + i * b;
    const double* xr = x.data.data() + i * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double v = xr[k];
      if (v == 0.0) continue;
      const double* wr = w.data.data() + k * b;
      for (std::size_t j = 0; j < b; ++j) dst[j] += v * wr[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& x, const Matrix& g) {
  require(x.rows == g.rows, "matmul_tn: shape mismatch " + shape_str(x) + "^T * " + shape_str(g));
  const std::size_t a = x.cols, b = g.cols, n = x.rows;
  Matrix out(a, b);
  // Output rows are split into contiguous blocks; every block walks all n
  // input rows in order so each entry sums over i in the same sequence.
  const std::size_t block = 32;
  const auto nblocks = static_cast<std::int64_t>((a + block - 1) / block);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t bb = 0; bb < nblocks; ++bb) {
    const std::size_t k0 = static_cast<std::size_t>(bb) * block;
    const std::size_t k1 = std::min(a, k0 + block);
    for (std::size_t i = 0; i < n; ++i) {
      const double* xr = x.data.data() + i * a;
      const double* gr = g.data.data() + i * b;
      for (std::size_t k = k0; k < k1; ++k) {
        const double v = xr[k];
        if (v == 0.0) continue;
        double* dst = out.data.data() + k * b;
        for (std::size_t j = 0; j < b; ++j) dst[j] += v * gr[j];
      }
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& g, const Matrix& w) {
  require(g.cols == w.cols, "matmul_nt: shape mismatch " + shape_str(g) + " * " + shape_str(w) + "^T");
  const std::size_t a = w.rows, b = g.cols;
  Matrix out(g.rows, a);
  const auto n = static_cast<std::int64_t>(g.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* gr = g.data.data() + i * b;
    for (std::size_t k = 0; k < a; ++k) {
      const double* wr = w.data.data() + k * b;
      double acc = 0.0;
      for (std::size_t j = 0; j < b; ++j) acc += gr[j] * wr[j];
      out(i, k) = acc;
    }
  }
  return out;
}

void lsc_row_scores(const BitRows& bits, std::size_t i, double gamma, std::span<double> out) {
  require(out.size() == bits.rows, "lsc_row_scores: output span has wrong length");
  const auto bi = bits.row(i);
  const std::size_t w = bits.words_per_row;
  const auto n = static_cast<std::int64_t>(bits.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t jj = 0; jj < n; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    const std::uint64_t* bj = bits.words.data() + j * w;
    std::int64_t both = 0, diff = 0;
    for (std::size_t t = 0; t < w; ++t) {
      both += std::popcount(bi[t] & bj[t]);
      diff += std::popcount(bi[t] ^ bj[t]);
    }
    out[j] = static_cast<double>(both) - gamma * static_cast<double>(diff);
  }
}

namespace serial {

Matrix spmm(const CsrMatrix& a, const Matrix& x) {
  check_spmm(a, x);
  Matrix out(a.n, x.cols);
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e)
      for (std::size_t t = 0; t < x.cols; ++t) out(i, t) += a.val[e] * x(a.col[e], t);
  return out;
}

Matrix matmul(const Matrix& x, const Matrix& w) {
  check_matmul(x, w);
  Matrix out(x.rows, w.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      if (x(i, k) == 0.0) continue;
      for (std::size_t j = 0; j < w.cols; ++j) out(i, j) += x(i, k) * w(k, j);
    }
  return out;
}

Matrix matmul_tn(const Matrix& x, const Matrix& g) {
  require(x.rows == g.rows, "matmul_tn: shape mismatch " + shape_str(x) + "^T * " + shape_str(g));
  Matrix out(x.cols, g.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      if (x(i, k) == 0.0) continue;
      for (std::size_t j = 0; j < g.cols; ++j) out(k, j) += x(i, k) * g(i, j);
    }
  return out;
}

Matrix matmul_nt(const Matrix& g, const Matrix& w) {
  require(g.cols == w.cols, "matmul_nt: shape mismatch " + shape_str(g) + " * " + shape_str(w) + "^T");
  Matrix out(g.rows, w.rows);
  for (std::size_t i = 0; i < g.rows; ++i)
    for (std::size_t k = 0; k < w.rows; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < g.cols; ++j) acc += g(i, j) * w(k, j);
      out(i, k) = acc;
    }
  return out;
}

void lsc_row_scores(const BitRows& bits, std::size_t i, double gamma, std::span<double> out) {
  require(out.size() == bits.rows, "lsc_row_scores: output span has wrong length");
  for (std::size_t j = 0; j < bits.rows; ++j) {
    std::int64_t both = 0, diff = 0;
    for (std::size_t t = 0; t < bits.words_per_row; ++t) {
      both += std::popcount(bits.row(i)[t] & bits.row(j)[t]);
      diff += std::popcount(bits.row(i)[t] ^ bits.row(j)[t]);
    }
    out[j] = static_cast<double>(both) - gamma * static_cast<double>(diff);
  }
}

}  // namespace serial
}  // namespace ledf::kernels
