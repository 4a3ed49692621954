#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "ledf/train.hpp"
#include "support.hpp"

using namespace ledf;
using namespace ledf::train;
using namespace ledf::testing;

namespace {

Graph sbm(std::size_t n, double h, double signal, std::uint64_t seed, std::size_t c = 3) {
  SbmSpec spec;
  spec.n = n;
  spec.c = c;
  spec.d = 16;
  spec.avg_degree = 6.0;
  spec.target_homophily = h;
  spec.feature_signal = signal;
  spec.train_per_class = std::max<std::size_t>(2, n / (10 * c));
  spec.seed = seed;
  return sbm_generate(spec);
}

io::HyperPreset small_preset(io::Backbone b) {
  io::HyperPreset p;
  p.dataset = "sbm";
  p.backbone = b;
  p.k = 5;
  p.q1 = 3;
  p.q2 = 3;
  p.hidden = 16;
  return p;
}

}  // namespace

TEST_CASE("training lowers the loss on a 20-node SBM") {
  const Graph g = sbm(20, 0.8, 0.8, 1, 2);
  for (const auto& variant : {model::backbone_only(), model::full_model()}) {
    const auto hyper = small_preset(io::Backbone::gcn);
    const auto topo = prepare(g, hyper, variant);
    const auto cfg = model::make_config(hyper, g.d(), g.c, variant);
    const auto run = train::train(cfg, hyper, g, topo, 0, {50, 1000});
    REQUIRE(run.epochs.size() == 50);
    CHECK(run.epochs.back().train_loss < run.epochs.front().train_loss);
    for (const auto& e : run.epochs) CHECK(std::isfinite(e.train_loss));
  }
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  const Graph g = sbm(60, 0.3, 0.6, 2);
  const auto hyper = small_preset(io::Backbone::gcn);
  const auto topo = prepare(g, hyper, model::full_model());
  const auto cfg = model::make_config(hyper, g.d(), g.c, model::full_model());
  const auto a = train::train(cfg, hyper, g, topo, 3, {30, 100});
  const auto b = train::train(cfg, hyper, g, topo, 3, {30, 100});
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].train_loss == b.epochs[e].train_loss);
    CHECK(a.epochs[e].val_acc == b.epochs[e].val_acc);
  }
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.test_acc == b.test_acc);
  const auto c = train::train(cfg, hyper, g, topo, 4, {30, 100});
  CHECK(c.epochs.front().train_loss != a.epochs.front().train_loss);
}

TEST_CASE("best epoch is the earliest maximum of validation accuracy and patience stops training") {
  const Graph g = sbm(60, 0.8, 0.8, 3);
  const auto hyper = small_preset(io::Backbone::mlp);
  const auto topo = prepare(g, hyper, model::backbone_only());
  const auto cfg = model::make_config(hyper, g.d(), g.c, model::backbone_only());
  const auto run = train::train(cfg, hyper, g, topo, 0, {200, 10});
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& e : run.epochs)
    if (e.val_acc > best) {
      best = e.val_acc;
      best_epoch = e.epoch;
    }
  CHECK(run.best_epoch == best_epoch);
  CHECK(run.best_val_acc == best);
  CHECK(run.epochs.back().epoch - run.best_epoch <= 10);
  if (run.epochs.size() < 200) CHECK(run.epochs.back().epoch - run.best_epoch == 10);
  CHECK(run.test_acc == run.epochs[static_cast<std::size_t>(run.best_epoch - 1)].test_acc);
  auto params = run.best_params;
  CHECK(evaluate(cfg, params, g, topo, Split::test) == run.test_acc);
  CHECK(evaluate(cfg, params, g, topo, Split::valid) == run.best_val_acc);
}

TEST_CASE("train rejects an empty split") {
  Graph g = sbm(30, 0.5, 0.5, 4);
  for (auto& s : g.split)
    if (s == Split::valid) s = Split::test;
  const auto hyper = small_preset(io::Backbone::mlp);
  const auto topo = prepare(g, hyper, model::backbone_only());
  CHECK_THROWS_AS(train::train(model::make_config(hyper, g.d(), g.c, model::backbone_only()), hyper, g, topo, 0, {5, 5}),
                  Error);
}

TEST_CASE("accuracy") {
  std::mt19937_64 rng(5);
  SUBCASE("all correct is 1 and invariant to a per-row shift") {
    Matrix logits(4, 3);
    const std::vector<int> labels{0, 2, 1, 2};
    for (std::size_t i = 0; i < 4; ++i) logits(i, static_cast<std::size_t>(labels[i])) = 1.0;
    const std::vector<std::size_t> rows{0, 1, 2, 3};
    CHECK(accuracy(logits, labels, rows) == 1.0);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) logits(i, j) += 10.0 * static_cast<double>(i);
    CHECK(accuracy(logits, labels, rows) == 1.0);
    CHECK(accuracy(logits, labels, {1}) == 1.0);
  }
  SUBCASE("random logits give about 1/c") {
    const std::size_t n = 20000, c = 4;
    const Matrix logits = random_matrix(n, c, rng);
    std::vector<int> labels(n);
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng() % c);
      rows[i] = i;
    }
    CHECK(std::abs(accuracy(logits, labels, rows) - 0.25) <= 0.02);
  }
  SUBCASE("empty row set is an error") { CHECK_THROWS_AS(accuracy(Matrix(2, 2), {0, 1}, {}), Error); }
}

TEST_CASE("multi_seed") {
  const auto s = multi_seed(std::vector<std::pair<std::uint64_t, double>>{{0, 0.5}, {1, 0.7}, {2, 0.6}});
  CHECK(s.mean == doctest::Approx(0.6));
  CHECK(s.std == doctest::Approx(std::sqrt(0.02 / 3.0)));
  CHECK(s.per_seed.size() == 3);
  const auto one = multi_seed(std::vector<std::pair<std::uint64_t, double>>{{9, 0.8}});
  CHECK(one.mean == 0.8);
  CHECK(one.std == 0.0);
}

TEST_CASE("make_curve") {
  const auto c = make_curve({0.2, 0.6, 0.6, 0.4});
  CHECK(c.argmax == 1);
  REQUIRE(c.normalized.size() == 4);
  CHECK(c.normalized[0] == 0.0);
  CHECK(c.normalized[1] == 1.0);
  CHECK(c.normalized[2] == 1.0);
  CHECK(c.normalized[3] == doctest::Approx(0.5));
  const auto flat = make_curve({0.3, 0.3});
  CHECK(flat.normalized == std::vector<double>{0.0, 0.0});
  CHECK(flat.argmax == 0);
}

TEST_CASE("oversmoothing sweep at l = 0 is the MLP on (1 + eps) F") {
  const Graph g = sbm(90, 0.5, 0.6, 6);
  const auto hyper = small_preset(io::Backbone::mlp);
  const TrainOptions opts{40, 40};
  const auto curve = oversmoothing_sweep(g, 1, 0.1, hyper, {0, 1}, opts);
  REQUIRE(curve.raw.size() == 2);
  Graph scaled = g;
  for (double& v : scaled.features.data) v *= 1.1;
  Topologies topo;
  topo.adj = normalize(g);
  const auto cfg = model::make_config(hyper, g.d(), g.c, model::backbone_only());
  const double oracle =
      (train::train(cfg, hyper, scaled, topo, 0, opts).test_acc + train::train(cfg, hyper, scaled, topo, 1, opts).test_acc) / 2.0;
  CHECK(std::abs(curve.raw[0] - oracle) <= 1e-12);
}

TEST_CASE("oversmoothing sweep peaks early on heterophily and late on homophily") {
  const auto hyper = small_preset(io::Backbone::mlp);
  const TrainOptions opts{100, 30};
  const auto low = oversmoothing_sweep(sbm(300, 0.1, 0.5, 7), 6, 0.1, hyper, {0, 1, 2}, opts);
  CHECK(low.argmax <= 2);
  const auto high = oversmoothing_sweep(sbm(300, 0.9, 0.2, 7), 6, 0.1, hyper, {0, 1, 2}, opts);
  CHECK(*std::max_element(high.raw.begin() + 1, high.raw.end()) > high.raw[0]);
}

TEST_CASE("config hash is stable, hex and sensitive to every field") {
  const auto hyper = small_preset(io::Backbone::gcn);
  const auto cfg = model::make_config(hyper, 8, 3, model::full_model());
  const auto j = config_json(cfg, hyper, {});
  const auto h = config_hash(j);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_hash(config_json(cfg, hyper, {})) == h);
  auto other = hyper;
  other.lr = 0.02;
  CHECK(config_hash(config_json(cfg, other, {})) != h);
  CHECK(config_hash(config_json(cfg, hyper, {400, 100})) != h);
  // FNV-1a 64 of the empty object "{}"
  std::uint64_t fnv = 14695981039346656037ULL;
  for (char ch : std::string("{}")) {
    fnv ^= static_cast<unsigned char>(ch);
    fnv *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv));
  CHECK(config_hash(nlohmann::json::object()) == buf);
}

TEST_CASE("run log has one record per epoch and a summary whose hash recomputes") {
  const Graph g = sbm(40, 0.5, 0.6, 8);
  const auto hyper = small_preset(io::Backbone::mlp);
  const auto topo = prepare(g, hyper, model::backbone_only());
  const auto cfg = model::make_config(hyper, g.d(), g.c, model::backbone_only());
  const auto run = train::train(cfg, hyper, g, topo, 0, {12, 100});
  const auto file = std::filesystem::temp_directory_path() / ("ledf_log_" + std::to_string(::getpid()) + ".jsonl");
  std::filesystem::remove(file);
  write_run_log(run, file);
  std::ifstream in(file);
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  REQUIRE(lines.size() == 13);
  for (int e = 0; e < 12; ++e) {
    CHECK(lines[static_cast<std::size_t>(e)]["epoch"] == e + 1);
    CHECK(lines[static_cast<std::size_t>(e)].contains("train_loss"));
    CHECK(lines[static_cast<std::size_t>(e)].contains("val_acc"));
  }
  const auto& summary = lines.back();
  CHECK(summary["config_hash"] == config_hash(summary["config"]));
  std::filesystem::remove(file);
}
