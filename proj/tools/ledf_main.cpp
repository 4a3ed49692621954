#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ledf/experiments.hpp"
#include "ledf/kernels.hpp"

namespace {

using namespace ledf;

struct Shared {
  std::vector<std::string> datasets;
  std::vector<std::string> backbones;
  std::string seeds = "0,1,2,3,4";
  std::string out = "results";
  std::string data_root;
  std::string rewire_mode = "origin";
  int threads = 0;
  bool logs = true;
  exp::Overrides o;
  train::TrainOptions options;
};

void add_shared(CLI::App* cmd, Shared& s, const std::string& default_backbone) {
  cmd->add_option("--dataset,-d", s.datasets, "Dataset directory, name under the data root, or sbm:key=val,...")
      ->required();
  cmd->add_option("--backbone,-b", s.backbones, "mlp or gcn (repeatable)")->default_str(default_backbone);
  cmd->add_option("--seeds", s.seeds, "Comma-separated seed list")->capture_default_str();
  cmd->add_option("--out,-o", s.out, "Report directory")->capture_default_str();
  cmd->add_option("--data-root", s.data_root, "Root for named datasets (default $LEDF_DATA_DIR or ./data)");
  cmd->add_option("--rewire-mode", s.rewire_mode, "Reconstructed topology: origin or empty")->capture_default_str();
  cmd->add_option("--threads", s.threads, "Kernel threads (0 = OpenMP default)");
  cmd->add_flag("!--no-logs", s.logs, "Skip per-run JSONL logs");
  cmd->add_option("--k", s.o.k, "Override top-k");
  cmd->add_option("--q1", s.o.q1, "Override Q1");
  cmd->add_option("--q2", s.o.q2, "Override Q2");
  cmd->add_option("--fusion-depth", s.o.fusion_depth, "Override K");
  cmd->add_option("--hidden", s.o.hidden, "Override backbone hidden width");
  cmd->add_option("--gamma", s.o.gamma, "Override LSC gamma");
  cmd->add_option("--lr", s.o.lr, "Override learning rate");
  cmd->add_option("--weight-decay", s.o.weight_decay, "Override weight decay");
  cmd->add_option("--dropout", s.o.dropout, "Override dropout");
  cmd->add_option("--epochs", s.options.max_epochs, "Maximum epochs")->capture_default_str();
  cmd->add_option("--patience", s.options.patience, "Early-stopping patience")->capture_default_str();
}

exp::CommonArgs resolve(const Shared& s, const std::vector<std::string>& fallback_backbones) {
  exp::CommonArgs a;
  a.datasets = s.datasets;
  a.backbones.clear();
  for (const auto& b : s.backbones.empty() ? fallback_backbones : s.backbones)
    a.backbones.push_back(io::parse_backbone(b));
  a.seeds.clear();
  std::stringstream in(s.seeds);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    try {
      a.seeds.push_back(std::stoull(item));
    } catch (const std::logic_error&) {
      throw Error("bad seed '" + item + "'");
    }
  }
  if (a.seeds.empty()) throw Error("no seeds given");
  if (!s.data_root.empty()) {
    a.data_root = s.data_root;
  } else if (const char* env = std::getenv("LEDF_DATA_DIR")) {
    a.data_root = env;
  }
  a.overrides = s.o;
  a.options = s.options;
  a.rewire_mode = rewire::parse_mode(s.rewire_mode);
  a.workers = exp::worker_count();
  if (s.logs) a.log_root = s.out;
  if (s.threads > 0) kernels::set_threads(s.threads);
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LEDF-GNN experiments: dual-topology layer-embedding fusion for node classification"};
  app.require_subcommand(1);

  Shared classify_s, ablate_s, fusion_s, attention_s, rewire_s, oversmooth_s, overhead_s, export_s;
  std::string sweep;
  auto* classify = app.add_subcommand("classify", "Backbone vs +LEDF accuracy table");
  add_shared(classify, classify_s, "gcn");
  classify->add_option("--sweep", sweep, "Sensitivity grid, e.g. Q=2,4,8 or k=5,10,20");

  auto* ablate = app.add_subcommand("ablate", "Full model vs the four ablations");
  add_shared(ablate, ablate_s, "gcn");
  auto* fusion = app.add_subcommand("fusion", "LEDF vs mean/max pooling and attention sum");
  add_shared(fusion, fusion_s, "gcn");
  auto* attention = app.add_subcommand("attention", "Per-layer attention weights with Q=9");
  add_shared(attention, attention_s, "mlp");

  exp::RewireArgs rw;
  std::string metric = "lsc", mode = "origin", dataset_out;
  double gamma = -1.0;
  auto* rewire_cmd = app.add_subcommand("rewire", "Similarity top-k reconstruction and homophily report");
  add_shared(rewire_cmd, rewire_s, "gcn");
  rewire_cmd->add_option("--metric", metric, "lsc or cosine")->capture_default_str();
  rewire_cmd->add_option("--mode", mode, "origin or empty")->capture_default_str();
  rewire_cmd->add_option("--topk", rw.k, "Neighbours per node (0 = preset)");
  rewire_cmd->add_option("--lsc-gamma", gamma, "XOR penalty (negative = preset)");
  rewire_cmd->add_flag("--bench", rw.bench, "Report every metric x mode combination");
  rewire_cmd->add_option("--dataset-out", dataset_out, "Write the reconstructed dataset directory here");

  int l_max = 10;
  double epsilon = 0.1;
  auto* oversmooth = app.add_subcommand("oversmooth", "MLP accuracy over propagation rounds");
  add_shared(oversmooth, oversmooth_s, "mlp");
  oversmooth->add_option("--lmax", l_max, "Largest propagation round")->capture_default_str();
  oversmooth->add_option("--epsilon", epsilon, "Initial-residual weight")->capture_default_str();

  int timing_epochs = 200;
  auto* overhead = app.add_subcommand("overhead", "Mean epoch time of backbone vs LEDF-GNN");
  add_shared(overhead, overhead_s, "gcn");
  overhead->add_option("--timing-epochs", timing_epochs, "Epochs per timed run")->capture_default_str();

  std::string topology = "dual", layer = "ledf", export_dir;
  auto* exporter = app.add_subcommand("export", "Write H_out rows and labels for projection tools");
  add_shared(exporter, export_s, "gcn");
  exporter->add_option("--topology", topology, "dual, original-only, reconstructed-only, none")
      ->capture_default_str();
  exporter->add_option("--layer", layer, "ledf, last-only, middle-only, mean-pool, max-pool, attention-sum")
      ->capture_default_str();
  exporter->add_option("--export-dir", export_dir, "Embedding directory (default <out>/embeddings)");

  CLI11_PARSE(app, argc, argv);

  try {
    exp::ReportBundle bundle;
    std::string out;
    if (classify->parsed()) {
      const auto a = resolve(classify_s, {"gcn"});
      bundle = exp::cmd_classify(a, sweep.empty() ? std::nullopt : std::optional(exp::parse_sweep(sweep)));
      out = classify_s.out;
    } else if (ablate->parsed()) {
      bundle = exp::cmd_ablation(resolve(ablate_s, {"gcn"}));
      out = ablate_s.out;
    } else if (fusion->parsed()) {
      bundle = exp::cmd_fusion_compare(resolve(fusion_s, {"gcn"}));
      out = fusion_s.out;
    } else if (attention->parsed()) {
      bundle = exp::cmd_attention_dist(resolve(attention_s, {"mlp"}));
      out = attention_s.out;
    } else if (rewire_cmd->parsed()) {
      rw.metric = rewire::parse_metric(metric);
      rw.mode = rewire::parse_mode(mode);
      if (gamma >= 0.0) rw.gamma = gamma;
      rw.dataset_out = dataset_out;
      bundle = exp::cmd_rewire(resolve(rewire_s, {"gcn"}), rw);
      out = rewire_s.out;
    } else if (oversmooth->parsed()) {
      bundle = exp::cmd_oversmooth(resolve(oversmooth_s, {"mlp"}), l_max, epsilon);
      out = oversmooth_s.out;
    } else if (overhead->parsed()) {
      bundle = exp::cmd_overhead(resolve(overhead_s, {"gcn"}), timing_epochs);
      out = overhead_s.out;
    } else if (exporter->parsed()) {
      const model::ModelVariant v{model::parse_topology(topology), model::parse_layer(layer)};
      const std::filesystem::path dir = export_dir.empty() ? std::filesystem::path(export_s.out) / "embeddings"
                                                           : std::filesystem::path(export_dir);
      bundle = exp::cmd_export(resolve(export_s, {"gcn"}), v, dir);
      out = export_s.out;
    }
    const auto where = bundle.write(out);
    for (const auto& t : bundle.tables) std::cout << "== " << t.name << ".csv\n" << t.render();
    std::cout << "report written to " << where.string() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
