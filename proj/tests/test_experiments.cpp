#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "ledf/experiments.hpp"

using namespace ledf;
using namespace ledf::exp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ledf_exp_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CommonArgs quick_args(const std::string& dataset, io::Backbone backbone) {
  CommonArgs a;
  a.datasets = {dataset};
  a.backbones = {backbone};
  a.seeds = {0, 1, 2};
  a.options = {150, 50};
  a.overrides.hidden = 32;
  return a;
}

double mean_of(const ReportBundle& b, const std::string& model) {
  for (const auto& row : b.tables.at(0).rows)
    if (row.at(2) == model) return std::stod(row.at(3));
  throw std::runtime_error("no row for " + model);
}

}  // namespace

TEST_CASE("parse_sbm_spec and resolve_dataset") {
  const auto s = parse_sbm_spec("n=120,c=4,h=0.25,deg=6,d=8,signal=0.7,seed=3,train=5,valid=0.2");
  CHECK(s.n == 120);
  CHECK(s.c == 4);
  CHECK(s.target_homophily == 0.25);
  CHECK(s.avg_degree == 6.0);
  CHECK(s.d == 8);
  CHECK(s.feature_signal == 0.7);
  CHECK(s.seed == 3);
  CHECK(s.train_per_class == 5);
  CHECK(s.valid_fraction == 0.2);
  CHECK_THROWS_AS(parse_sbm_spec("n=10,zz=1"), Error);
  CHECK_THROWS_AS(parse_sbm_spec("n=ten"), Error);

  const Graph g = resolve_dataset("sbm:n=90,c=3,seed=2", "nowhere");
  CHECK(g.n == 90);
  CHECK(g.name == "sbm:n=90,c=3,seed=2");
  const auto hyper = resolve_preset(g, io::Backbone::gcn, [] { Overrides o; o.k = 7; return o; }());
  CHECK(hyper.k == 7);
  CHECK(hyper.q1 == 4);

  const auto root = scratch("resolve");
  Graph saved = g;
  saved.name = "Toy";
  io::save_dataset(saved, root / "Toy");
  CHECK(resolve_dataset("toy", root).n == 90);
  CHECK(resolve_dataset((root / "Toy").string(), "nowhere").n == 90);
  try {
    resolve_dataset("Cora", root);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("Cora") != std::string::npos);
  }
}

TEST_CASE("parse_sweep") {
  const auto q = parse_sweep("Q=2,4,8");
  CHECK(q.param == "Q");
  CHECK(q.values == std::vector<int>{2, 4, 8});
  CHECK(parse_sweep("k=5").param == "k");
  CHECK_THROWS_AS(parse_sweep("lr=0.1"), Error);
  CHECK_THROWS_AS(parse_sweep("Q=0"), Error);
  CHECK_THROWS_AS(parse_sweep("Q"), Error);
}

TEST_CASE("run_pool runs every job and rethrows the first failure") {
  for (int workers : {1, 3}) {
    std::vector<int> hit(6, 0);
    std::vector<std::function<void()>> jobs;
    for (int j = 0; j < 6; ++j)
      jobs.emplace_back([&hit, j] {
        hit[static_cast<std::size_t>(j)] = 1;
        if (j == 2) throw Error("job two");
        if (j == 4) throw Error("job four");
      });
    try {
      run_pool(jobs, workers);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()) == "job two");
    }
    CHECK(hit == std::vector<int>(6, 1));
  }
}

TEST_CASE("csv rendering quotes fields that need it") {
  CsvTable t{"t", {"a", "b"}, {{"x,y", "say \"hi\""}, {"1", "2"}}};
  CHECK(t.render() == "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n1,2\n");
  CHECK(fmt(0.5) == "0.500000");
  CHECK(fmt(1.0 / 3.0, 3) == "0.333");
}

TEST_CASE("chart axis labels are values that appear in the table") {
  CsvTable t{"curve", {"x", "y"}, {}};
  Chart c{"curve", Chart::Kind::line, "t", "x", "y", {"0", "1", "2"}, {{"s", {}}}};
  for (double v : {0.25, 0.875, 0.5}) {
    t.rows.push_back({std::to_string(t.rows.size()), fmt(v)});
    c.series[0].values.push_back(std::stod(fmt(v)));
  }
  const auto svg = c.render_svg();
  const auto csv = t.render();
  CHECK(svg.rfind("<svg", 0) == 0);
  for (const auto& label : {fmt(0.25), fmt(0.875)}) {
    CHECK(svg.find(">" + label + "<") != std::string::npos);
    CHECK(csv.find(label) != std::string::npos);
  }
}

TEST_CASE("report bundles are byte-stable and carry a recomputable config hash") {
  auto args = quick_args("sbm:n=150,c=3,h=0.3,signal=0.6,seed=4", io::Backbone::mlp);
  args.seeds = {0};
  args.options = {20, 20};
  const auto dir = scratch("bundle");
  args.log_root = dir / "logs";
  const auto first = cmd_classify(args).write(dir / "a");
  const auto second = cmd_classify(args).write(dir / "b");
  for (const auto* name : {"accuracy.csv", "accuracy_per_seed.csv", "accuracy.svg"}) {
    INFO(name);
    CHECK(fs::exists(first / name));
    CHECK(slurp(first / name) == slurp(second / name));
  }
  const auto report = nlohmann::json::parse(slurp(first / "report.json"));
  CHECK(report["config_hash"] == train::config_hash(report["config"]));
  std::size_t logs = 0;
  for (const auto& entry : fs::recursive_directory_iterator(args.log_root))
    if (entry.path().extension() == ".jsonl") ++logs;
  CHECK(logs == 2);
}

TEST_CASE("rewire report keeps homophily columns byte-stable") {
  CommonArgs args;
  args.datasets = {"sbm:n=200,c=3,h=0.2,signal=1,seed=5"};
  RewireArgs rw;
  rw.bench = true;
  rw.k = 5;
  const auto a = cmd_rewire(args, rw).tables.at(0);
  const auto b = cmd_rewire(args, rw).tables.at(0);
  REQUIRE(a.rows.size() == 4);
  for (std::size_t r = 0; r < a.rows.size(); ++r)
    for (std::size_t k = 0; k < a.header.size(); ++k)
      if (a.header[k] != "seconds") CHECK(a.rows[r][k] == b.rows[r][k]);
}

TEST_CASE("rewire can write the reconstructed graph as a dataset directory") {
  const auto dir = scratch("rewired");
  CommonArgs args;
  args.datasets = {"sbm:n=120,c=2,h=0.2,signal=1,seed=6"};
  RewireArgs rw;
  rw.k = 4;
  rw.mode = rewire::Mode::from_empty;
  rw.dataset_out = dir / "out";
  const auto report = cmd_rewire(args, rw);
  const Graph back = io::load_dataset(dir / "out");
  CHECK(back.n == 120);
  CHECK(report.tables[0].rows[0][6] == fmt(edge_homophily(back)));
}

TEST_CASE("propagation helps the MLP on a homophilous SBM") {
  const auto r = cmd_classify(quick_args("sbm:n=400,c=3,h=0.9,signal=0.3,deg=8,seed=7", io::Backbone::mlp));
  const double base = mean_of(r, "baseline"), full = mean_of(r, "ledf");
  INFO("baseline " << base << " ledf " << full);
  CHECK(full >= base);
}

TEST_CASE("the reconstructed channel helps on a heterophilous SBM with informative features") {
  CommonArgs args;
  args.datasets = {"sbm:n=400,c=3,h=0.1,signal=1,deg=4,seed=8"};
  args.backbones = {io::Backbone::gcn};
  const auto r = cmd_ablation(args);
  const double full = mean_of(r, "full"), orig = mean_of(r, "original-only");
  INFO("full " << full << " original-only " << orig);
  CHECK(full - orig >= 0.05);
}

TEST_CASE("fusion comparison and attention distribution run end to end") {
  auto args = quick_args("sbm:n=200,c=3,h=0.5,signal=0.6,seed=9", io::Backbone::gcn);
  args.seeds = {0};
  args.options = {30, 30};
  const auto fusion = cmd_fusion_compare(args);
  REQUIRE(fusion.tables[0].rows.size() == 4);
  for (const auto& row : fusion.tables[0].rows) {
    const double acc = std::stod(row[3]);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  const auto att = attention_distribution(resolve_dataset(args.datasets[0], "."), args, io::Backbone::mlp, 9);
  REQUIRE(att.size() == 2);
  for (const auto& a : att) {
    REQUIRE(a.layer_weights.size() == 10);
    double sum = 0.0;
    for (double v : a.layer_weights) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(std::abs(a.mass.shallow + a.mass.deep - 1.0) <= 1e-9);
  }
}

TEST_CASE("doubling Q costs less than twice the epoch time") {
  auto args = quick_args("sbm:n=1500,c=4,h=0.3,signal=0.5,deg=10,seed=10", io::Backbone::gcn);
  args.seeds = {0};
  const auto rows = measure_overhead(resolve_dataset(args.datasets[0], "."), args, io::Backbone::gcn, 30);
  REQUIRE(rows.size() == 3);
  CHECK(rows[2].q1 == 2 * rows[1].q1);
  INFO("Q " << rows[1].mean_epoch_seconds << " 2Q " << rows[2].mean_epoch_seconds);
  CHECK(rows[2].mean_epoch_seconds < 2.0 * rows[1].mean_epoch_seconds);
}

TEST_CASE("export writes one embedding row per node and c columns") {
  const auto dir = scratch("export");
  auto args = quick_args("sbm:n=80,c=3,seed=11", io::Backbone::gcn);
  args.seeds = {0};
  args.options = {10, 10};
  const auto r = cmd_export(args, model::full_model(), dir);
  REQUIRE(r.tables[0].rows.size() == 1);
  const fs::path out = r.tables[0].rows[0].back();
  std::ifstream emb(out / "embeddings.tsv"), lab(out / "labels.tsv");
  std::size_t rows = 0, labels = 0;
  for (std::string line; std::getline(emb, line); ++rows) CHECK(std::count(line.begin(), line.end(), '\t') == 2);
  for (std::string line; std::getline(lab, line);) ++labels;
  CHECK(rows == 80);
  CHECK(labels == 80);
}
