#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "ledf/dataset_io.hpp"
#include "support.hpp"

using namespace ledf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ledf_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put(const fs::path& file, const std::string& text) { std::ofstream(file, std::ios::binary) << text; }

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_toy(const fs::path& dir) {
  put(dir / "meta.json", R"({"name": "toy", "n": 3, "d": 2, "c": 2})");
  put(dir / "edges.tsv", "0\t1\n1\t2\n2\t0\n1\t0\n");
  put(dir / "features.tsv", "1\t0\n0\t1\n0.5\t0.5\n");
  put(dir / "labels.tsv", "0\n0\n1\n");
  put(dir / "splits.tsv", "train\nvalid\ntest\n");
}

Graph toy_graph() {
  Graph g;
  g.name = "toy";
  g.n = 3;
  g.c = 2;
  g.edges = {{0, 1}, {0, 2}, {1, 2}};
  g.features = Matrix(3, 2);
  g.features(0, 0) = 1.0;
  g.features(1, 1) = 1.0;
  g.features(2, 0) = g.features(2, 1) = 0.5;
  g.labels = {0, 0, 1};
  g.split = {Split::train, Split::valid, Split::test};
  return g;
}

std::string error_of(const fs::path& dir) {
  try {
    io::load_dataset(dir);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("load_dataset reads the toy triangle and deduplicates reversed edges") {
  const auto dir = scratch("toy");
  write_toy(dir);
  const Graph g = io::load_dataset(dir);
  CHECK(g == toy_graph());
  CHECK(edge_homophily(g) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("save then load is the identity and saving twice is byte-stable") {
  const auto dir = scratch("roundtrip");
  const Graph g = toy_graph();
  io::save_dataset(g, dir);
  CHECK(io::load_dataset(dir) == g);
  const std::string first = slurp(dir / "edges.tsv") + slurp(dir / "features.tsv") + slurp(dir / "meta.json");
  io::save_dataset(g, dir);
  CHECK(slurp(dir / "edges.tsv") + slurp(dir / "features.tsv") + slurp(dir / "meta.json") == first);
}

TEST_CASE("save/load round trip of an SBM keeps homophily and features to 1e-7") {
  SbmSpec spec;
  spec.n = 200;
  spec.c = 3;
  spec.seed = 7;
  const Graph g = sbm_generate(spec);
  for (auto layout : {io::FeatureLayout::dense, io::FeatureLayout::sparse}) {
    const auto dir = scratch("sbm");
    io::save_dataset(g, dir, layout);
    const Graph back = io::load_dataset(dir);
    CHECK(back.edges == g.edges);
    CHECK(back.labels == g.labels);
    CHECK(back.split == g.split);
    CHECK(edge_homophily(back) == edge_homophily(g));
    for (std::size_t k = 0; k < g.features.size(); ++k)
      CHECK(std::abs(back.features.data[k] - g.features.data[k]) <= 1e-7 * std::max(1.0, std::abs(g.features.data[k])));
  }
}

TEST_CASE("sparse feature files are chosen automatically for sparse features") {
  Graph g = toy_graph();
  g.features = Matrix(3, 40);
  g.features(0, 3) = 1.0;
  g.features(2, 39) = -2.5;
  const auto dir = scratch("sparse");
  io::save_dataset(g, dir);
  CHECK(fs::exists(dir / "features.sparse.tsv"));
  CHECK(!fs::exists(dir / "features.tsv"));
  CHECK(io::load_dataset(dir) == g);
}

TEST_CASE("load_dataset errors name the file and line") {
  const auto dir = scratch("errors");
  SUBCASE("missing labels file") {
    write_toy(dir);
    fs::remove(dir / "labels.tsv");
    CHECK(error_of(dir).find("labels.tsv") != std::string::npos);
  }
  SUBCASE("label out of range") {
    write_toy(dir);
    put(dir / "labels.tsv", "0\n5\n1\n");
    const auto msg = error_of(dir);
    CHECK(msg.find("labels.tsv") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
  SUBCASE("edge endpoint out of range") {
    write_toy(dir);
    put(dir / "edges.tsv", "0\t1\n1\t7\n");
    const auto msg = error_of(dir);
    CHECK(msg.find("edges.tsv") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
  SUBCASE("feature row count mismatch") {
    write_toy(dir);
    put(dir / "features.tsv", "1\t0\n0\t1\n");
    CHECK(error_of(dir).find("features.tsv") != std::string::npos);
  }
  SUBCASE("unknown split tag") {
    write_toy(dir);
    put(dir / "splits.tsv", "train\nbogus\ntest\n");
    CHECK(error_of(dir).find("splits.tsv") != std::string::npos);
  }
}

TEST_CASE("missing split files are generated with the published sizes and persisted") {
  std::mt19937_64 rng(1);
  Graph g = testing::random_graph(400, 4, 4, 0.02, rng);
  g.name = "Texas";
  const auto dir = scratch("splits");
  io::save_dataset(g, dir);
  fs::remove(dir / "splits.tsv");
  const Graph a = io::load_dataset(dir);
  CHECK(fs::exists(dir / "splits.tsv"));
  CHECK(a.nodes_in(Split::train).size() == 10);
  CHECK(a.nodes_in(Split::valid).size() == 50);
  CHECK(a.nodes_in(Split::test).size() == 100);
  CHECK(io::load_dataset(dir).split == a.split);
}

TEST_CASE("stratified split gives every class an equal train quota") {
  std::mt19937_64 rng(2);
  Graph g = testing::random_graph(700, 3, 7, 0.01, rng);
  io::assign_stratified_split(g, {140, 200, 300}, 0);
  std::vector<int> per_class(7, 0);
  for (auto i : g.nodes_in(Split::train)) ++per_class[static_cast<std::size_t>(g.labels[i])];
  CHECK(per_class == std::vector<int>(7, 20));
  CHECK(g.nodes_in(Split::valid).size() == 200);
  CHECK(g.nodes_in(Split::test).size() == 300);
}

TEST_CASE("presets match the published parameter table") {
  const auto cora = io::preset("Cora", io::Backbone::gcn);
  CHECK(cora.k == 2);
  CHECK(cora.q1 == 15);
  CHECK(cora.q2 == 11);
  const auto wis = io::preset("wisconsin", io::Backbone::gcn);
  CHECK(wis.k == 20);
  CHECK(wis.q1 == 11);
  CHECK(wis.q2 == 15);
  const auto texas = io::preset("Texas", io::Backbone::mlp);
  CHECK(texas.k == 20);
  CHECK(texas.q1 == 3);
  CHECK(texas.q2 == 8);
  CHECK(io::preset("CS", io::Backbone::mlp).k == io::preset("Coauthor-CS", io::Backbone::mlp).k);
}

TEST_CASE("every preset carries the shared training settings") {
  const auto all = io::known_presets();
  CHECK(all.size() == 26);
  for (const auto& [name, backbone] : all) {
    const auto p = io::preset(name, backbone);
    CHECK(p.lr == 0.01);
    CHECK(p.weight_decay == 0.0005);
    CHECK(p.dropout == 0.5);
    CHECK(p.hidden == 128);
    CHECK(p.epsilon == 0.1);
    CHECK(p.gamma == 0.5);
    CHECK(p.fusion_depth == 3);
    CHECK(p.q1 >= 1);
    CHECK(p.q2 >= 1);
    CHECK(p.k >= 1);
  }
}

TEST_CASE("unknown presets list the known ones") {
  try {
    io::preset("Nowhere", io::Backbone::gcn);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("Cora") != std::string::npos);
  }
  CHECK_THROWS_AS(io::parse_backbone("gat"), Error);
}

TEST_CASE("published split sizes") {
  const auto cora = io::published_split_sizes("cora");
  CHECK(cora.train == 140);
  CHECK(cora.valid == 500);
  CHECK(cora.test == 1000);
}
