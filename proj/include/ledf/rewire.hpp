#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ledf/graph.hpp"
#include "ledf/kernels.hpp"

namespace ledf::rewire {

/// Node features discretized to one bit per dimension.
using BitFeatureMatrix = kernels::BitRows;

enum class MeanScope {
  per_node,    // threshold each node's |f| against that node's own mean
  per_column,  // threshold against the feature column's mean (sensitivity check)
};

/// Bit (i, j) is set iff |F_ij| is strictly above the mean absolute value.
BitFeatureMatrix discretize(const Matrix& features, MeanScope scope = MeanScope::per_node);

bool bit(const BitFeatureMatrix& bits, std::size_t row, std::size_t col);

/// popcount(a & b) - gamma * popcount(a ^ b)
double lsc_pair(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, double gamma);

/// Cosine of two raw feature rows; a zero row scores 0.
double cosine_pair(std::span<const double> a, std::span<const double> b);

/// Fills out[j] with the similarity of node i to every node j (out.size() == n).
using ScoreProvider = std::function<void(std::size_t i, std::span<double> out)>;

/// For every node, the k highest-scoring other nodes in descending score
/// order; equal scores go to the smaller index.
std::vector<std::vector<std::uint32_t>> topk_select(std::size_t n, const ScoreProvider& scores, std::size_t k);

/// Score providers over all nodes. Both own whatever preprocessed copy of the
/// features they need; extra_bytes() reports the size of that working set.
class LscScorer {
 public:
  LscScorer(const Matrix& features, double gamma, MeanScope scope = MeanScope::per_node);
  void operator()(std::size_t i, std::span<double> out) const;
  std::size_t extra_bytes() const;
  const BitFeatureMatrix& bits() const { return bits_; }

 private:
  BitFeatureMatrix bits_;
  double gamma_;
};

class CosineScorer {
 public:
  explicit CosineScorer(const Matrix& features);
  void operator()(std::size_t i, std::span<double> out) const;
  std::size_t extra_bytes() const;

 private:
  // Unit-normalized rows in compressed form: dot products cost O(nnz).
  std::size_t n_ = 0, d_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_;
  std::vector<double> val_;
};

enum class Mode { rewire_origin, from_empty };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct RewireResult {
  std::vector<Edge> edges;  // canonical, symmetrized
  Mode mode = Mode::rewire_origin;
  std::vector<std::vector<std::uint32_t>> topk;
  std::size_t added_edges = 0;  // edges not present in the original graph
  double homophily_before = 0.0;
  double homophily_after = 0.0;
};

RewireResult reconstruct(const Graph& g, const std::vector<std::vector<std::uint32_t>>& topk, Mode mode);

enum class Metric { lsc, cosine };
std::string to_string(Metric m);
Metric parse_metric(const std::string& s);

/// Top-k lists of one metric over the whole graph plus pass cost.
struct SimilarityPass {
  std::vector<std::vector<std::uint32_t>> topk;
  double seconds = 0.0;
  std::size_t peak_extra_bytes = 0;
};

SimilarityPass similarity_topk(const Graph& g, Metric metric, std::size_t k, double gamma,
                               MeanScope scope = MeanScope::per_node);

struct BenchmarkRow {
  Metric metric;
  Mode mode;
  std::size_t k;
  double gamma;
  double homophily_before;
  double homophily_after;
  double seconds;
  std::size_t peak_extra_bytes;
};

/// Homophily of LSC and cosine reconstructions in both modes.
std::vector<BenchmarkRow> rewire_benchmark(const Graph& g, std::size_t k, double gamma);

}  // namespace ledf::rewire
