#include "ledf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ledf::train {

Topologies prepare(const Graph& g, const io::HyperPreset& hyper, model::ModelVariant variant, rewire::Mode mode) {
  Topologies t;
  t.adj = normalize(g);
  const auto topo = variant.topology;
  if (topo == model::TopologyMode::dual || topo == model::TopologyMode::reconstructed_only) {
    const auto pass = rewire::similarity_topk(g, rewire::Metric::lsc, static_cast<std::size_t>(hyper.k), hyper.gamma);
    t.rewired = rewire::reconstruct(g, pass.topk, mode);
    t.adj_r = normalize(g.n, t.rewired->edges);
  }
  return t;
}

double TrainRun::mean_epoch_seconds() const {
  if (epochs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : epochs) total += e.seconds;
  return total / static_cast<double>(epochs.size());
}

double accuracy(const Matrix& logits, const std::vector<int>& labels, const std::vector<std::size_t>& rows) {
  require(!rows.empty(), "accuracy: empty node set");
  std::size_t correct = 0;
  for (std::size_t i : rows) {
    const auto r = logits.row(i);
    const auto best = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

Matrix predict(const model::ModelConfig& cfg, ad::ParamStore& params, const Graph& g, const Topologies& topo) {
  ad::Tape tape;
  std::mt19937_64 rng(0);
  return model::forward(tape, cfg, params, g.features, topo.adj, topo.reconstructed(), false, rng).logits.value();
}

double evaluate(const model::ModelConfig& cfg, ad::ParamStore& params, const Graph& g, const Topologies& topo,
                Split split) {
  const auto rows = g.nodes_in(split);
  require(!rows.empty(), "evaluate: split '" + to_string(split) + "' is empty");
  return accuracy(predict(cfg, params, g, topo), g.labels, rows);
}

TrainRun train(const model::ModelConfig& cfg, const io::HyperPreset& hyper, const Graph& g, const Topologies& topo,
               std::uint64_t seed, const TrainOptions& options) {
  const auto train_rows = g.nodes_in(Split::train);
  const auto valid_rows = g.nodes_in(Split::valid);
  const auto test_rows = g.nodes_in(Split::test);
  require(!train_rows.empty(), "train: training split is empty");
  require(!valid_rows.empty(), "train: validation split is empty");
  require(!test_rows.empty(), "train: test split is empty");
  require(options.max_epochs >= 1, "train: max_epochs must be >= 1");

  TrainRun run;
  run.config = cfg;
  run.hyper = hyper;
  run.options = options;
  run.seed = seed;

  ad::ParamStore store;
  model::init_params(store, cfg, seed);
  std::mt19937_64 dropout_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const ad::AdamOptions adam{hyper.lr, 0.9, 0.999, 1e-8, hyper.weight_decay};
  run.best_val_acc = -1.0;

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto start = std::chrono::steady_clock::now();
    {
      ad::Tape tape;
      const auto fw = model::forward(tape, cfg, store, g.features, topo.adj, topo.reconstructed(), true, dropout_rng);
      const ad::Var loss = ad::softmax_ce(fw.logits, g.labels, train_rows);
      rec.train_loss = loss.value()(0, 0);
      tape.backward(loss);
      ad::adam_step(store, adam);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const Matrix logits = predict(cfg, store, g, topo);
    rec.val_acc = accuracy(logits, g.labels, valid_rows);
    rec.test_acc = accuracy(logits, g.labels, test_rows);
    run.epochs.push_back(rec);

    if (rec.val_acc > run.best_val_acc) {
      run.best_val_acc = rec.val_acc;
      run.best_epoch = epoch;
      run.test_acc = rec.test_acc;
      run.best_params = store;
    } else if (epoch - run.best_epoch >= options.patience) {
      break;
    }
  }
  return run;
}

SeedSummary multi_seed(const std::vector<std::pair<std::uint64_t, double>>& results) {
  require(!results.empty(), "multi_seed: no runs");
  SeedSummary s;
  s.per_seed = results;
  for (const auto& [seed, acc] : results) s.mean += acc;
  s.mean /= static_cast<double>(results.size());
  double var = 0.0;
  for (const auto& [seed, acc] : results) var += (acc - s.mean) * (acc - s.mean);
  s.std = std::sqrt(var / static_cast<double>(results.size()));
  return s;
}

SeedSummary multi_seed(const std::vector<TrainRun>& runs) {
  std::vector<std::pair<std::uint64_t, double>> results;
  for (const auto& r : runs) results.emplace_back(r.seed, r.test_acc);
  return multi_seed(results);
}

SweepCurve make_curve(std::vector<double> raw) {
  require(!raw.empty(), "make_curve: empty curve");
  SweepCurve c;
  c.raw = std::move(raw);
  const auto lo = std::min_element(c.raw.begin(), c.raw.end());
  const auto hi = std::max_element(c.raw.begin(), c.raw.end());
  c.argmax = static_cast<std::size_t>(hi - c.raw.begin());
  const double min = *lo, span = *hi - *lo;
  c.normalized.reserve(c.raw.size());
  for (double v : c.raw) c.normalized.push_back(span > 0.0 ? (v - min) / span : 0.0);
  return c;
}

SweepCurve oversmoothing_sweep(const Graph& g, int l_max, double epsilon, const io::HyperPreset& hyper,
                               const std::vector<std::uint64_t>& seeds, const TrainOptions& options) {
  require(l_max >= 1, "oversmoothing_sweep: L_max must be >= 1");
  require(!seeds.empty(), "oversmoothing_sweep: no seeds");
  io::HyperPreset mlp = hyper;
  mlp.backbone = io::Backbone::mlp;
  const auto cfg = model::make_config(mlp, g.d(), g.c, model::backbone_only());

  Graph view = g;
  Topologies topo;
  topo.adj = normalize(g);
  Matrix propagated = g.features;
  std::vector<double> raw;
  for (int l = 0; l <= l_max; ++l) {
    if (l > 0) propagated = kernels::spmm(topo.adj, propagated);
    for (std::size_t k = 0; k < view.features.size(); ++k)
      view.features.data[k] = propagated.data[k] + epsilon * g.features.data[k];
    double total = 0.0;
    for (auto seed : seeds) total += train(cfg, mlp, view, topo, seed, options).test_acc;
    raw.push_back(total / static_cast<double>(seeds.size()));
  }
  return make_curve(std::move(raw));
}

nlohmann::json config_json(const model::ModelConfig& cfg, const io::HyperPreset& hyper, const TrainOptions& options) {
  using nlohmann::json;
  return json{
      {"dataset", hyper.dataset},
      {"backbone", io::to_string(cfg.backbone.kind)},
      {"variant", model::to_string(cfg.variant)},
      {"in", cfg.backbone.in},
      {"hidden", cfg.backbone.hidden},
      {"out", cfg.backbone.out},
      {"bias", cfg.backbone.bias},
      {"dropout", cfg.backbone.dropout},
      {"q1", cfg.q1},
      {"q2", cfg.q2},
      {"fusion_depth", cfg.fusion_depth},
      {"epsilon", cfg.epsilon},
      {"k", hyper.k},
      {"gamma", hyper.gamma},
      {"lr", hyper.lr},
      {"weight_decay", hyper.weight_decay},
      {"max_epochs", options.max_epochs},
      {"patience", options.patience},
      {"selection", "max validation accuracy, earliest epoch on ties"},
  };
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_run_log(const TrainRun& run, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw Error("cannot write run log " + file.string());
  for (const auto& e : run.epochs)
    out << nlohmann::json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_acc", e.val_acc}}.dump() << '\n';
  const auto cfg = config_json(run.config, run.hyper, run.options);
  out << nlohmann::json{{"summary", true},
                        {"seed", run.seed},
                        {"epochs_run", run.epochs.size()},
                        {"best_epoch", run.best_epoch},
                        {"best_val_acc", run.best_val_acc},
                        {"test_acc", run.test_acc},
                        {"config_hash", config_hash(cfg)},
                        {"config", cfg}}
             .dump()
      << '\n';
}

}  // namespace ledf::train
