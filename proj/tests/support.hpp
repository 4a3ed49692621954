#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ledf/graph.hpp"
#include "ledf/matrix.hpp"

namespace ledf::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data) v = u(rng);
  return m;
}

/// Erdos-Renyi edge list with probability p, canonical form.
inline std::vector<Edge> random_edges(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (coin(rng)) edges.emplace_back(i, j);
  return edges;
}

/// Small labelled graph with a train/valid/test split covering every node.
inline Graph random_graph(std::size_t n, std::size_t d, std::size_t c, double p, std::mt19937_64& rng) {
  Graph g;
  g.name = "random";
  g.n = n;
  g.c = c;
  g.edges = random_edges(n, p, rng);
  g.features = random_matrix(n, d, rng);
  g.labels.resize(n);
  g.split.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.labels[i] = static_cast<int>(i % c);
    g.split[i] = i % 3 == 0 ? Split::train : (i % 3 == 1 ? Split::valid : Split::test);
  }
  return g;
}

inline Matrix dense_adjacency(std::size_t n, const std::vector<Edge>& edges) {
  Matrix a(n, n);
  for (auto [i, j] : edges) a(i, j) = a(j, i) = 1.0;
  return a;
}

/// D^{-1/2}(A+I)D^{-1/2} computed entry by entry.
inline Matrix dense_normalize(std::size_t n, const std::vector<Edge>& edges) {
  Matrix a = dense_adjacency(n, edges);
  for (std::size_t i = 0; i < n; ++i) a(i, i) += 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= std::sqrt(deg[i]) * std::sqrt(deg[j]);
  return a;
}

inline Matrix dense_product(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < a.cols; ++t) acc += a(i, t) * b(t, j);
      out(i, j) = acc;
    }
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return INFINITY;
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a.data[k] - b.data[k]));
  return worst;
}

}  // namespace ledf::testing
