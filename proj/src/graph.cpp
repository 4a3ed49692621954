#include "ledf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ledf/kernels.hpp"

namespace ledf {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    case Split::none: break;
  }
  return "none";
}

Split parse_split(const std::string& tag) {
  if (tag == "train") return Split::train;
  if (tag == "valid") return Split::valid;
  if (tag == "test") return Split::test;
  if (tag == "none") return Split::none;
  throw Error("unknown split tag '" + tag + "'");
}

std::vector<std::size_t> Graph::nodes_in(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

void Graph::validate() const {
  require(features.rows == n, "graph: features have " + std::to_string(features.rows) + " rows, expected " +
                                  std::to_string(n));
  require(labels.size() == n, "graph: label count differs from node count");
  require(split.size() == n, "graph: split count differs from node count");
  for (const auto& [a, b] : edges) {
    require(a < n && b < n, "graph: edge endpoint out of range");
    require(a < b, "graph: edges must be canonical pairs (i < j) without self-loops");
  }
  require(std::is_sorted(edges.begin(), edges.end()) &&
              std::adjacent_find(edges.begin(), edges.end()) == edges.end(),
          "graph: edge list must be sorted and unique");
  for (int y : labels) require(y >= 0 && static_cast<std::size_t>(y) < c, "graph: label out of range");
}

std::vector<Edge> canonicalize_edges(std::vector<Edge> edges) {
  for (auto& e : edges)
    if (e.first > e.second) std::swap(e.first, e.second);
  std::erase_if(edges, [](const Edge& e) { return e.first == e.second; });
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

Matrix CsrMatrix::to_dense() const {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) m(i, col[e]) += val[e];
  return m;
}

CsrMatrix CsrMatrix::identity(std::size_t n) {
  CsrMatrix m;
  m.n = n;
  m.row_ptr.resize(n + 1);
  m.col.resize(n);
  m.val.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    m.row_ptr[i] = i;
    m.col[i] = static_cast<std::uint32_t>(i);
  }
  m.row_ptr[n] = n;
  return m;
}

NormAdj normalize(const Graph& g) { return normalize(g.n, g.edges); }

NormAdj normalize(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::vector<std::uint32_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i) nbrs[i].push_back(static_cast<std::uint32_t>(i));
  for (const auto& [a, b] : edges) {
    require(a < n && b < n && a != b, "normalize: invalid edge");
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(nbrs[i].begin(), nbrs[i].end());
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(nbrs[i].size()));
  }
  NormAdj adj;
  adj.n = n;
  adj.row_ptr.reserve(n + 1);
  adj.row_ptr.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : nbrs[i]) {
      adj.col.push_back(j);
      adj.val.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    adj.row_ptr.push_back(adj.col.size());
  }
  return adj;
}

Matrix propagate(const NormAdj& adj, const Matrix& x, std::size_t q) {
  require(adj.n == x.rows, "propagate: adjacency has " + std::to_string(adj.n) + " nodes but features have " +
                               std::to_string(x.rows) + " rows");
  Matrix cur = x;
  for (std::size_t step = 0; step < q; ++step) cur = kernels::spmm(adj, cur);
  return cur;
}

double edge_homophily(const std::vector<Edge>& edges, const std::vector<int>& labels) {
  require(!edges.empty(), "edge_homophily: graph has no edges");
  std::size_t same = 0;
  for (const auto& [a, b] : edges) same += labels.at(a) == labels.at(b);
  return static_cast<double>(same) / static_cast<double>(edges.size());
}

double edge_homophily(const Graph& g) { return edge_homophily(g.edges, g.labels); }

Graph sbm_generate(const SbmSpec& spec) {
  require(spec.n >= 2 && spec.c >= 1 && spec.c <= spec.n, "sbm: need n >= 2 and 1 <= c <= n");
  require(spec.avg_degree > 0.0, "sbm: avg_degree must be positive");
  require(spec.target_homophily >= 0.0 && spec.target_homophily <= 1.0, "sbm: homophily must lie in [0, 1]");
  require(spec.feature_signal >= 0.0 && spec.feature_signal <= 1.0, "sbm: feature_signal must lie in [0, 1]");

  const double n = static_cast<double>(spec.n);
  const double per_class = n / static_cast<double>(spec.c);
  const double intra_slots = per_class - 1.0;
  const double inter_slots = n - per_class;
  const double h = spec.target_homophily;
  const double p_in = intra_slots > 0.0 ? h * spec.avg_degree / intra_slots : (h > 0.0 ? 2.0 : 0.0);
  const double p_out = inter_slots > 0.0 ? (1.0 - h) * spec.avg_degree / inter_slots : (h < 1.0 ? 2.0 : 0.0);
  if (p_in > 1.0 || p_out > 1.0)
    throw Error("sbm: infeasible spec (p_in=" + std::to_string(p_in) + ", p_out=" + std::to_string(p_out) + ")");

  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  Graph g;
  g.name = "sbm";
  g.n = spec.n;
  g.c = spec.c;
  g.labels.resize(spec.n);
  std::vector<std::size_t> order(spec.n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t r = 0; r < spec.n; ++r) g.labels[order[r]] = static_cast<int>(r % spec.c);

  for (std::size_t i = 0; i < spec.n; ++i)
    for (std::size_t j = i + 1; j < spec.n; ++j) {
      const double p = g.labels[i] == g.labels[j] ? p_in : p_out;
      if (uniform() < p) g.edges.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }

  const std::size_t block = (spec.d + spec.c - 1) / spec.c;
  g.features = Matrix(spec.n, spec.d);
  for (std::size_t i = 0; i < spec.n; ++i)
    for (std::size_t j = 0; j < spec.d; ++j) {
      const double mean = (j / block) == static_cast<std::size_t>(g.labels[i]) ? 1.0 : 0.0;
      g.features(i, j) = spec.feature_signal * mean + (1.0 - spec.feature_signal) * uniform();
    }

  // Stratified split: first train_per_class of each class in shuffled order.
  g.split.assign(spec.n, Split::none);
  std::vector<std::size_t> taken(spec.c, 0);
  std::vector<std::size_t> rest;
  std::shuffle(order.begin(), order.end(), rng);
  for (auto i : order) {
    auto& t = taken[static_cast<std::size_t>(g.labels[i])];
    if (t < spec.train_per_class) {
      g.split[i] = Split::train;
      ++t;
    } else {
      rest.push_back(i);
    }
  }
  const auto n_valid = static_cast<std::size_t>(std::lround(spec.valid_fraction * static_cast<double>(rest.size())));
  for (std::size_t r = 0; r < rest.size(); ++r) g.split[rest[r]] = r < n_valid ? Split::valid : Split::test;
  return g;
}

double rank1_distance(const NormAdj& adj, int l) {
  require(l >= 1, "rank1_distance: l must be >= 1");
  const std::size_t n = adj.n;
  require(n >= 1, "rank1_distance: empty graph");

  // Dominant eigenpair by power iteration.
  Matrix v(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Matrix w = kernels::spmm(adj, v);
    double dot = 0.0, norm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dot += v.data[i] * w.data[i];
      norm2 += w.data[i] * w.data[i];
    }
    lambda = dot;
    const double norm = std::sqrt(norm2);
    require(norm > 0.0, "rank1_distance: power iteration collapsed");
    const double sign = dot < 0.0 ? -1.0 : 1.0;
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double next = sign * w.data[i] / norm;
      delta += (next - v.data[i]) * (next - v.data[i]);
      v.data[i] = next;
    }
    if (std::sqrt(delta) < 1e-10) break;
  }

  // adj^l = R + lambda^l v v^T with R = adj^l (I - v v^T) orthogonal to v v^T.
  Matrix deflated = Matrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deflated(i, j) -= v.data[i] * v.data[j];
  const Matrix r = propagate(adj, deflated, static_cast<std::size_t>(l));
  double r2 = 0.0;
  for (double x : r.data) r2 += x * x;
  const double top = std::pow(std::abs(lambda), 2.0 * l);
  const double total = r2 + top;
  return total > 0.0 ? std::sqrt(r2 / total) : 0.0;
}

}  // namespace ledf
