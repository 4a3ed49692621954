#pragma once

// Data-parallel kernels used by propagation, the differentiable layers and the
// similarity pass. Each kernel has an OpenMP version and a plain serial
// reference in kernels::serial. Parallel versions partition output rows, so a
// given output entry is always accumulated in the same order and results are
// bitwise identical to the serial reference for any thread count.

#include <cstdint>
#include <span>

#include "ledf/graph.hpp"
#include "ledf/matrix.hpp"

namespace ledf::kernels {

/// Sets the OpenMP thread count used by the kernels (0 keeps the runtime default).
void set_threads(int threads);
int max_threads();

Matrix spmm(const CsrMatrix& a, const Matrix& x);

/// x * w. Zero entries of x are skipped, which makes sparse bag-of-words
/// features cheap without a separate sparse path.
Matrix matmul(const Matrix& x, const Matrix& w);

/// x^T * g  (x: n x a, g: n x b) -> a x b
Matrix matmul_tn(const Matrix& x, const Matrix& g);

/// g * w^T  (g: n x b, w: a x b) -> n x a
Matrix matmul_nt(const Matrix& g, const Matrix& w);

/// Packed bit rows: words_per_row 64-bit words per node.
struct BitRows {
  std::size_t rows = 0;
  std::size_t bits = 0;
  std::size_t words_per_row = 0;
  std::vector<std::uint64_t> words;

  std::span<const std::uint64_t> row(std::size_t r) const {
    return {words.data() + r * words_per_row, words_per_row};
  }
};

/// score[j] = popcount(b_i & b_j) - gamma * popcount(b_i ^ b_j) for all j.
void lsc_row_scores(const BitRows& bits, std::size_t i, double gamma, std::span<double> out);

namespace serial {

Matrix spmm(const CsrMatrix& a, const Matrix& x);
Matrix matmul(const Matrix& x, const Matrix& w);
Matrix matmul_tn(const Matrix& x, const Matrix& g);
Matrix matmul_nt(const Matrix& g, const Matrix& w);
void lsc_row_scores(const BitRows& bits, std::size_t i, double gamma, std::span<double> out);

}  // namespace serial
}  // namespace ledf::kernels
