#include "ledf/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace ledf::io {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

[[noreturn]] void fail_at(const fs::path& file, std::size_t line, const std::string& what) {
  throw Error(file.string() + ", line " + std::to_string(line) + ": " + what);
}

std::ifstream open_in(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  return in;
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + file.string());
  return out;
}

template <typename T>
T parse_number(std::string_view tok, const fs::path& file, std::size_t line) {
  T value{};
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end) fail_at(file, line, "cannot parse '" + std::string(tok) + "'");
  return value;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string format_real(double v) {
  std::array<char, 32> buf{};
  const int len = std::snprintf(buf.data(), buf.size(), "%.9g", v);
  return std::string(buf.data(), static_cast<std::size_t>(len));
}

Matrix read_dense_features(const fs::path& file, std::size_t n, std::size_t d) {
  auto in = open_in(file);
  Matrix f(n, d);
  std::string line;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    if (r >= n) fail_at(file, r + 1, "more rows than n=" + std::to_string(n));
    const auto toks = split_ws(line);
    if (toks.size() != d)
      fail_at(file, r + 1, "expected " + std::to_string(d) + " values, found " + std::to_string(toks.size()));
    for (std::size_t j = 0; j < d; ++j) f(r, j) = parse_number<double>(toks[j], file, r + 1);
    ++r;
  }
  if (r != n) fail_at(file, r, "expected " + std::to_string(n) + " rows, found " + std::to_string(r));
  return f;
}

Matrix read_sparse_features(const fs::path& file, std::size_t n, std::size_t d) {
  auto in = open_in(file);
  Matrix f(n, d);
  std::string line;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    if (r >= n) fail_at(file, r + 1, "more rows than n=" + std::to_string(n));
    for (auto tok : split_ws(line)) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) fail_at(file, r + 1, "expected col:value, got '" + std::string(tok) + "'");
      const auto col = parse_number<std::size_t>(tok.substr(0, colon), file, r + 1);
      if (col >= d) fail_at(file, r + 1, "feature column " + std::to_string(col) + " out of range");
      f(r, col) = parse_number<double>(tok.substr(colon + 1), file, r + 1);
    }
    ++r;
  }
  if (r != n) fail_at(file, r, "expected " + std::to_string(n) + " rows, found " + std::to_string(r));
  return f;
}

struct PresetRow {
  const char* name;
  int k;
  int mlp_q1, mlp_q2;
  int gcn_q1, gcn_q2;
  SplitSizes split;
};

// k, Q1/Q2 per backbone and the fixed split sizes of each dataset.
constexpr std::array<PresetRow, 13> kPresets{{
    {"Cora", 2, 10, 3, 15, 11, {140, 500, 1000}},
    {"CiteSeer", 3, 10, 9, 6, 20, {120, 500, 1000}},
    {"PubMed", 2, 2, 7, 7, 10, {60, 500, 1000}},
    {"ACM", 7, 1, 9, 7, 18, {60, 600, 1200}},
    {"Coauthor-CS", 10, 3, 10, 10, 10, {300, 500, 1000}},
    {"Arxiv2023", 10, 7, 8, 3, 9, {27718, 9239, 9239}},
    {"MNIST", 10, 7, 10, 6, 9, {200, 300, 1500}},
    {"BlogCatalog", 20, 3, 8, 16, 14, {120, 500, 1000}},
    {"Texas", 20, 3, 8, 8, 16, {10, 50, 100}},
    {"Wisconsin", 20, 2, 10, 11, 15, {10, 50, 100}},
    {"Cornell", 20, 9, 7, 18, 2, {10, 50, 100}},
    {"Chameleon", 40, 7, 3, 10, 16, {114, 500, 1000}},
    {"Squirrel", 40, 2, 10, 10, 18, {260, 500, 1000}},
}};

const PresetRow* find_row(const std::string& dataset) {
  std::string key = lower(dataset);
  if (key == "cs" || key == "coauthorcs" || key == "coauthor_cs") key = "coauthor-cs";
  for (const auto& row : kPresets)
    if (lower(row.name) == key) return &row;
  return nullptr;
}

}  // namespace

std::string to_string(Backbone b) { return b == Backbone::mlp ? "mlp" : "gcn"; }

Backbone parse_backbone(const std::string& s) {
  const auto l = lower(s);
  if (l == "mlp") return Backbone::mlp;
  if (l == "gcn") return Backbone::gcn;
  throw Error("unknown backbone '" + s + "' (expected mlp or gcn)");
}

HyperPreset preset(const std::string& dataset, Backbone backbone) {
  const PresetRow* row = find_row(dataset);
  if (row == nullptr) {
    std::string known;
    for (const auto& [name, bb] : known_presets()) known += " " + name + "/" + to_string(bb);
    throw Error("no preset for (" + dataset + ", " + to_string(backbone) + "); known:" + known);
  }
  HyperPreset p;
  p.dataset = row->name;
  p.backbone = backbone;
  p.k = row->k;
  p.q1 = backbone == Backbone::mlp ? row->mlp_q1 : row->gcn_q1;
  p.q2 = backbone == Backbone::mlp ? row->mlp_q2 : row->gcn_q2;
  return p;
}

std::vector<std::pair<std::string, Backbone>> known_presets() {
  std::vector<std::pair<std::string, Backbone>> out;
  for (const auto& row : kPresets) {
    out.emplace_back(row.name, Backbone::mlp);
    out.emplace_back(row.name, Backbone::gcn);
  }
  return out;
}

SplitSizes published_split_sizes(const std::string& dataset) {
  const PresetRow* row = find_row(dataset);
  if (row == nullptr) throw Error("no published split sizes for dataset '" + dataset + "'");
  return row->split;
}

void assign_stratified_split(Graph& g, SplitSizes sizes, std::uint64_t seed) {
  require(sizes.train + sizes.valid + sizes.test <= g.n, "split sizes exceed node count");
  require(g.c >= 1, "graph has no classes");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_class(g.c);
  for (std::size_t i = 0; i < g.n; ++i) by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  g.split.assign(g.n, Split::none);
  // Equal train quota per class; classes too small to fill theirs pass the
  // remainder on round-robin.
  std::vector<std::size_t> cursor(g.c, 0);
  std::size_t placed = 0;
  for (bool progress = true; placed < sizes.train && progress;) {
    progress = false;
    for (std::size_t cls = 0; cls < g.c && placed < sizes.train; ++cls) {
      if (cursor[cls] < by_class[cls].size()) {
        g.split[by_class[cls][cursor[cls]++]] = Split::train;
        ++placed;
        progress = true;
      }
    }
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < g.n; ++i)
    if (g.split[i] == Split::none) rest.push_back(i);
  std::shuffle(rest.begin(), rest.end(), rng);
  for (std::size_t r = 0; r < rest.size(); ++r) {
    if (r < sizes.valid)
      g.split[rest[r]] = Split::valid;
    else if (r < sizes.valid + sizes.test)
      g.split[rest[r]] = Split::test;
  }
}

Graph load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  nlohmann::json meta;
  try {
    auto in = open_in(meta_path);
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(meta_path.string() + ": " + e.what());
  }
  Graph g;
  std::size_t d = 0;
  try {
    g.name = meta.at("name").get<std::string>();
    g.n = meta.at("n").get<std::size_t>();
    d = meta.at("d").get<std::size_t>();
    g.c = meta.at("c").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(meta_path.string() + ": " + e.what());
  }

  {
    const fs::path file = dir / "edges.tsv";
    auto in = open_in(file);
    std::string line;
    std::size_t ln = 0;
    std::vector<Edge> edges;
    while (std::getline(in, line)) {
      ++ln;
      const auto toks = split_ws(line);
      if (toks.empty()) continue;
      if (toks.size() != 2) fail_at(file, ln, "expected 'src<TAB>dst'");
      const auto a = parse_number<std::uint32_t>(toks[0], file, ln);
      const auto b = parse_number<std::uint32_t>(toks[1], file, ln);
      if (a >= g.n || b >= g.n) fail_at(file, ln, "endpoint out of range for n=" + std::to_string(g.n));
      edges.emplace_back(a, b);
    }
    g.edges = canonicalize_edges(std::move(edges));
  }

  if (fs::exists(dir / "features.tsv"))
    g.features = read_dense_features(dir / "features.tsv", g.n, d);
  else if (fs::exists(dir / "features.sparse.tsv"))
    g.features = read_sparse_features(dir / "features.sparse.tsv", g.n, d);
  else
    throw Error("missing " + (dir / "features.tsv").string() + " (or features.sparse.tsv)");

  {
    const fs::path file = dir / "labels.tsv";
    auto in = open_in(file);
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      const auto toks = split_ws(line);
      if (toks.size() != 1) fail_at(file, ln, "expected one label");
      const auto y = parse_number<int>(toks[0], file, ln);
      if (y < 0 || static_cast<std::size_t>(y) >= g.c)
        fail_at(file, ln, "label " + std::to_string(y) + " outside [0, " + std::to_string(g.c) + ")");
      g.labels.push_back(y);
    }
    if (g.labels.size() != g.n)
      fail_at(file, ln, "expected " + std::to_string(g.n) + " labels, found " + std::to_string(g.labels.size()));
  }

  const fs::path split_file = dir / "splits.tsv";
  if (fs::exists(split_file)) {
    auto in = open_in(split_file);
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      const auto toks = split_ws(line);
      if (toks.size() != 1) fail_at(split_file, ln, "expected one split tag");
      try {
        g.split.push_back(parse_split(std::string(toks[0])));
      } catch (const Error& e) {
        fail_at(split_file, ln, e.what());
      }
    }
    if (g.split.size() != g.n)
      fail_at(split_file, ln, "expected " + std::to_string(g.n) + " tags, found " + std::to_string(g.split.size()));
  } else {
    // Generated once with a fixed seed and persisted next to the data.
    assign_stratified_split(g, published_split_sizes(g.name), 0);
    auto out = open_out(split_file);
    for (auto s : g.split) out << to_string(s) << '\n';
  }

  g.validate();
  return g;
}

void save_dataset(const Graph& g, const fs::path& dir, FeatureLayout layout) {
  g.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());

  {
    nlohmann::json meta = {{"name", g.name}, {"n", g.n}, {"d", g.d()}, {"c", g.c}};
    auto out = open_out(dir / "meta.json");
    out << meta.dump(2) << '\n';
  }
  {
    auto out = open_out(dir / "edges.tsv");
    for (const auto& [a, b] : g.edges) out << a << '\t' << b << '\n';
  }
  if (layout == FeatureLayout::automatic) {
    const auto nonzero = static_cast<std::size_t>(
        std::count_if(g.features.data.begin(), g.features.data.end(), [](double v) { return v != 0.0; }));
    layout = nonzero * 10 < g.features.size() ? FeatureLayout::sparse : FeatureLayout::dense;
  }
  fs::remove(dir / "features.tsv");
  fs::remove(dir / "features.sparse.tsv");
  if (layout == FeatureLayout::dense) {
    auto out = open_out(dir / "features.tsv");
    for (std::size_t i = 0; i < g.n; ++i) {
      for (std::size_t j = 0; j < g.d(); ++j) {
        if (j) out << '\t';
        out << format_real(g.features(i, j));
      }
      out << '\n';
    }
  } else {
    auto out = open_out(dir / "features.sparse.tsv");
    for (std::size_t i = 0; i < g.n; ++i) {
      bool first = true;
      for (std::size_t j = 0; j < g.d(); ++j) {
        if (g.features(i, j) == 0.0) continue;
        if (!first) out << '\t';
        out << j << ':' << format_real(g.features(i, j));
        first = false;
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "labels.tsv");
    for (int y : g.labels) out << y << '\n';
  }
  {
    auto out = open_out(dir / "splits.tsv");
    for (auto s : g.split) out << to_string(s) << '\n';
  }
}

}  // namespace ledf::io
