#include "ledf/rewire.hpp"

#include <omp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace ledf::rewire {

namespace {

// Neumaier-compensated sum of absolute values.
double abs_sum(const double* first, std::size_t count, std::size_t stride) {
  double sum = 0.0, comp = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const double v = std::abs(first[k * stride]);
    const double t = sum + v;
    comp += std::abs(sum) >= v ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

void set_bit(BitFeatureMatrix& b, std::size_t r, std::size_t c) {
  b.words[r * b.words_per_row + c / 64] |= std::uint64_t{1} << (c % 64);
}

}  // namespace

BitFeatureMatrix discretize(const Matrix& features, MeanScope scope) {
  BitFeatureMatrix b;
  b.rows = features.rows;
  b.bits = features.cols;
  b.words_per_row = (features.cols + 63) / 64;
  b.words.assign(b.rows * b.words_per_row, 0);
  const std::size_t n = features.rows, d = features.cols;
  if (d == 0) return b;

  if (scope == MeanScope::per_node) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = features.data.data() + i * d;
      double lo = std::abs(row[0]), hi = lo;
      for (std::size_t j = 1; j < d; ++j) {
        lo = std::min(lo, std::abs(row[j]));
        hi = std::max(hi, std::abs(row[j]));
      }
      if (lo == hi) continue;  // nothing is strictly above the mean of a constant row
      const double mean = abs_sum(row, d, 1) / static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j)
        if (std::abs(row[j]) - mean > 0.0) set_bit(b, i, j);
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      const double* col = features.data.data() + j;
      double lo = std::abs(col[0]), hi = lo;
      for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, std::abs(col[i * d]));
        hi = std::max(hi, std::abs(col[i * d]));
      }
      if (lo == hi) continue;
      const double mean = abs_sum(col, n, d) / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        if (std::abs(features(i, j)) - mean > 0.0) set_bit(b, i, j);
    }
  }
  return b;
}

bool bit(const BitFeatureMatrix& bits, std::size_t row, std::size_t col) {
  return (bits.words[row * bits.words_per_row + col / 64] >> (col % 64)) & 1u;
}

double lsc_pair(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, double gamma) {
  require(a.size() == b.size(), "lsc_pair: bit rows differ in length");
  std::int64_t both = 0, diff = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    both += std::popcount(a[t] & b[t]);
    diff += std::popcount(a[t] ^ b[t]);
  }
  return static_cast<double>(both) - gamma * static_cast<double>(diff);
}

double cosine_pair(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "cosine_pair: rows differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    dot += a[t] * b[t];
    na += a[t] * a[t];
    nb += b[t] * b[t];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::vector<std::uint32_t>> topk_select(std::size_t n, const ScoreProvider& scores, std::size_t k) {
  require(k >= 1, "topk_select: k must be >= 1");
  require(n >= 2, "topk_select: need at least two nodes");
  require(k < n, "topk_select: k=" + std::to_string(k) + " must be smaller than n=" + std::to_string(n));
  std::vector<std::vector<std::uint32_t>> out(n);
  const auto total = static_cast<std::int64_t>(n);
#pragma omp parallel
  {
    std::vector<double> buf(n);
    std::vector<std::uint32_t> idx(n);
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t ii = 0; ii < total; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      scores(i, buf);
      std::iota(idx.begin(), idx.end(), 0u);
      std::swap(idx[i], idx[n - 1]);  // drop the self pair from the candidate range
      auto better = [&buf](std::uint32_t a, std::uint32_t b) {
        return buf[a] > buf[b] || (buf[a] == buf[b] && a < b);
      };
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                        idx.begin() + static_cast<std::ptrdiff_t>(n - 1), better);
      out[i].assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    }
  }
  return out;
}

LscScorer::LscScorer(const Matrix& features, double gamma, MeanScope scope)
    : bits_(discretize(features, scope)), gamma_(gamma) {
  require(gamma >= 0.0, "LSC gamma must be >= 0");
}

void LscScorer::operator()(std::size_t i, std::span<double> out) const {
  kernels::lsc_row_scores(bits_, i, gamma_, out);
}

std::size_t LscScorer::extra_bytes() const { return bits_.words.size() * sizeof(std::uint64_t); }

CosineScorer::CosineScorer(const Matrix& features) : n_(features.rows), d_(features.cols) {
  row_ptr_.assign(n_ + 1, 0);
  for (std::size_t i = 0; i < n_; ++i) {
    double norm = 0.0;
    for (double v : features.row(i)) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d_; ++j) {
      const double v = features(i, j);
      if (v == 0.0) continue;
      col_.push_back(static_cast<std::uint32_t>(j));
      val_.push_back(v / norm);
    }
    row_ptr_[i + 1] = col_.size();
  }
}

void CosineScorer::operator()(std::size_t i, std::span<double> out) const {
  require(out.size() == n_, "cosine scorer: output span has wrong length");
  std::vector<double> dense(d_, 0.0);
  for (std::size_t e = row_ptr_[i]; e < row_ptr_[i + 1]; ++e) dense[col_[e]] = val_[e];
  for (std::size_t j = 0; j < n_; ++j) {
    double acc = 0.0;
    for (std::size_t e = row_ptr_[j]; e < row_ptr_[j + 1]; ++e) acc += val_[e] * dense[col_[e]];
    out[j] = acc;
  }
}

std::size_t CosineScorer::extra_bytes() const {
  return row_ptr_.size() * sizeof(std::size_t) + col_.size() * sizeof(std::uint32_t) +
         val_.size() * sizeof(double);
}

std::string to_string(Mode m) { return m == Mode::rewire_origin ? "origin" : "empty"; }

Mode parse_mode(const std::string& s) {
  if (s == "origin" || s == "rewire-origin") return Mode::rewire_origin;
  if (s == "empty" || s == "from-empty") return Mode::from_empty;
  throw Error("unknown rewire mode '" + s + "' (expected origin or empty)");
}

std::string to_string(Metric m) { return m == Metric::lsc ? "lsc" : "cosine"; }

Metric parse_metric(const std::string& s) {
  if (s == "lsc") return Metric::lsc;
  if (s == "cosine") return Metric::cosine;
  throw Error("unknown similarity metric '" + s + "' (expected lsc or cosine)");
}

RewireResult reconstruct(const Graph& g, const std::vector<std::vector<std::uint32_t>>& topk, Mode mode) {
  require(topk.size() == g.n, "reconstruct: top-k lists do not cover the graph's nodes");
  std::vector<Edge> selected;
  for (std::size_t i = 0; i < topk.size(); ++i)
    for (auto j : topk[i]) {
      require(j < g.n, "reconstruct: top-k index out of range");
      if (j != i) selected.emplace_back(static_cast<std::uint32_t>(i), j);
    }
  selected = canonicalize_edges(std::move(selected));

  RewireResult r;
  r.mode = mode;
  r.topk = topk;
  if (mode == Mode::rewire_origin) {
    std::set_union(g.edges.begin(), g.edges.end(), selected.begin(), selected.end(), std::back_inserter(r.edges));
  } else {
    r.edges = std::move(selected);
  }
  std::vector<Edge> added;
  std::set_difference(r.edges.begin(), r.edges.end(), g.edges.begin(), g.edges.end(), std::back_inserter(added));
  r.added_edges = added.size();
  r.homophily_before = g.edges.empty() ? 0.0 : edge_homophily(g);
  r.homophily_after = r.edges.empty() ? 0.0 : edge_homophily(r.edges, g.labels);
  return r;
}

SimilarityPass similarity_topk(const Graph& g, Metric metric, std::size_t k, double gamma, MeanScope scope) {
  SimilarityPass pass;
  const auto start = std::chrono::steady_clock::now();
  std::size_t working = 0;
  if (metric == Metric::lsc) {
    LscScorer scorer(g.features, gamma, scope);
    working = scorer.extra_bytes();
    pass.topk = topk_select(g.n, std::cref(scorer), k);
  } else {
    CosineScorer scorer(g.features);
    working = scorer.extra_bytes() + g.d() * sizeof(double) * static_cast<std::size_t>(omp_get_max_threads());
    pass.topk = topk_select(g.n, std::cref(scorer), k);
  }
  pass.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto threads = static_cast<std::size_t>(omp_get_max_threads());
  pass.peak_extra_bytes = working + threads * g.n * (sizeof(double) + sizeof(std::uint32_t)) +
                          g.n * k * sizeof(std::uint32_t);
  return pass;
}

std::vector<BenchmarkRow> rewire_benchmark(const Graph& g, std::size_t k, double gamma) {
  std::vector<BenchmarkRow> rows;
  for (Metric metric : {Metric::lsc, Metric::cosine}) {
    const SimilarityPass pass = similarity_topk(g, metric, k, gamma);
    for (Mode mode : {Mode::from_empty, Mode::rewire_origin}) {
      const RewireResult r = reconstruct(g, pass.topk, mode);
      rows.push_back({metric, mode, k, gamma, r.homophily_before, r.homophily_after, pass.seconds,
                      pass.peak_extra_bytes});
    }
  }
  return rows;
}

}  // namespace ledf::rewire
