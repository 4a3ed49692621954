#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ledf/matrix.hpp"

namespace ledf {

enum class Split : std::uint8_t { none, train, valid, test };

std::string to_string(Split s);
Split parse_split(const std::string& tag);

/// Undirected edge stored canonically with first < second.
using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Node-labelled undirected graph with dense features and fixed split tags.
struct Graph {
  std::string name;
  std::size_t n = 0;
  std::size_t c = 0;
  std::vector<Edge> edges;  // sorted, unique, i < j
  Matrix features;          // n x d
  std::vector<int> labels;  // n entries in [0, c)
  std::vector<Split> split; // n entries

  std::size_t d() const { return features.cols; }

  std::vector<std::size_t> nodes_in(Split s) const;

  /// Throws if any structural invariant is broken.
  void validate() const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

/// Sorts, removes self-loops and duplicates (including reversed pairs).
std::vector<Edge> canonicalize_edges(std::vector<Edge> edges);

/// Compressed-row sparse matrix; used for the normalized adjacency.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;  // n + 1
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }
  Matrix to_dense() const;
  static CsrMatrix identity(std::size_t n);
};

/// Symmetric D^{-1/2}(A + I)D^{-1/2}.
using NormAdj = CsrMatrix;

NormAdj normalize(const Graph& g);
NormAdj normalize(std::size_t n, const std::vector<Edge>& edges);

/// Returns adj^q * x through q sparse-dense products.
Matrix propagate(const NormAdj& adj, const Matrix& x, std::size_t q);

double edge_homophily(const Graph& g);
double edge_homophily(const std::vector<Edge>& edges, const std::vector<int>& labels);

struct SbmSpec {
  std::size_t n = 500;
  std::size_t c = 2;
  double target_homophily = 0.5;
  double avg_degree = 10.0;
  std::size_t d = 32;
  double feature_signal = 0.5;
  std::uint64_t seed = 0;
  // split sizes per class for train; valid/test are fractions of the rest
  std::size_t train_per_class = 20;
  double valid_fraction = 0.3;
};

/// Stochastic block model with balanced classes and one-hot-block class means.
Graph sbm_generate(const SbmSpec& spec);

/// Relative Frobenius distance between adj^l and its best rank-1 approximation.
double rank1_distance(const NormAdj& adj, int l);

}  // namespace ledf
