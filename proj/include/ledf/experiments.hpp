#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ledf/dataset_io.hpp"
#include "ledf/graph.hpp"
#include "ledf/model.hpp"
#include "ledf/rewire.hpp"
#include "ledf/train.hpp"

namespace ledf::exp {

/// Loads a dataset from a directory path, a name under `data_root`, or an
/// inline generator spec such as "sbm:n=400,c=3,h=0.9,signal=0.8,seed=1".
Graph resolve_dataset(const std::string& spec, const std::filesystem::path& data_root);

/// Parses the key=value list after "sbm:". Keys: n, c, h, deg, d, signal, seed, train, valid.
SbmSpec parse_sbm_spec(const std::string& body);

/// Per-run overrides applied on top of a preset.
struct Overrides {
  std::optional<int> k, q1, q2, fusion_depth, hidden;
  std::optional<double> gamma, lr, weight_decay, dropout;
};

/// Published preset for known datasets; generated graphs get k=10, Q1=Q2=4.
io::HyperPreset resolve_preset(const Graph& g, io::Backbone backbone, const Overrides& o = {});

/// Number of concurrent runs: LEDF_WORKERS if set and positive, else 1.
int worker_count();

/// Runs every job on a pool of `workers` threads. All jobs run even if some
/// fail; the first failure is rethrown afterwards.
void run_pool(const std::vector<std::function<void()>>& jobs, int workers);

struct CsvTable {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render() const;
};

struct Series {
  std::string label;
  std::vector<double> values;
};

struct Chart {
  enum class Kind { line, bar };
  std::string name;  // file stem
  Kind kind = Kind::line;
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> categories;  // x positions
  std::vector<Series> series;

  std::string render_svg() const;
};

struct ReportBundle {
  std::string id;
  nlohmann::json config;
  std::vector<CsvTable> tables;
  std::vector<Chart> charts;
  nlohmann::json environment;

  /// Writes report.json, every CSV and every SVG under `dir/id`.
  std::filesystem::path write(const std::filesystem::path& dir) const;
};

std::string fmt(double v, int precision = 6);

struct CommonArgs {
  std::vector<std::string> datasets;
  std::vector<io::Backbone> backbones{io::Backbone::gcn};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::filesystem::path data_root = "data";
  Overrides overrides;
  train::TrainOptions options;
  rewire::Mode rewire_mode = rewire::Mode::rewire_origin;
  int workers = 1;
  /// Directory for per-run logs (`runs/<hash>/log.jsonl`); empty disables them.
  std::filesystem::path log_root;
};

/// "Q=2,4,8" or "k=5,10" grids for the sensitivity study.
struct Sweep {
  std::string param;  // "Q" or "k"
  std::vector<int> values;
};
Sweep parse_sweep(const std::string& text);

struct VariantResult {
  std::string dataset;
  io::Backbone backbone = io::Backbone::gcn;
  std::string label;
  model::ModelVariant variant;
  io::HyperPreset hyper;
  train::SeedSummary summary;
  std::vector<train::TrainRun> runs;
};

/// Trains `variant` over every seed in `args` (pooled) and summarizes.
VariantResult run_variant(const Graph& g, const train::Topologies& topo, const io::HyperPreset& hyper,
                          model::ModelVariant variant, const std::string& label, const CommonArgs& args);

ReportBundle cmd_classify(const CommonArgs& args, const std::optional<Sweep>& sweep = std::nullopt);
ReportBundle cmd_ablation(const CommonArgs& args);
ReportBundle cmd_fusion_compare(const CommonArgs& args);

struct AttentionResult {
  std::string topology;              // "original" or "reconstructed"
  std::vector<double> layer_weights;  // mean over seeds of per-layer mean weights
  model::ShallowDeepMass mass;
};
std::vector<AttentionResult> attention_distribution(const Graph& g, const CommonArgs& args, io::Backbone backbone,
                                                    int q = 9);
ReportBundle cmd_attention_dist(const CommonArgs& args);

struct RewireArgs {
  rewire::Metric metric = rewire::Metric::lsc;
  rewire::Mode mode = rewire::Mode::rewire_origin;
  std::size_t k = 0;  // 0 = preset value
  std::optional<double> gamma;
  bool bench = false;                  // all metric x mode combinations
  std::filesystem::path dataset_out;   // reconstructed DatasetDir (single combination only)
};
ReportBundle cmd_rewire(const CommonArgs& args, const RewireArgs& rw);

ReportBundle cmd_oversmooth(const CommonArgs& args, int l_max, double epsilon = 0.1);

struct OverheadRow {
  std::string dataset;
  std::string model;
  int q1 = 0, q2 = 0;
  double mean_epoch_seconds = 0.0;
};
std::vector<OverheadRow> measure_overhead(const Graph& g, const CommonArgs& args, io::Backbone backbone,
                                          int epochs);
ReportBundle cmd_overhead(const CommonArgs& args, int epochs);

/// Writes embeddings.tsv (H_out rows) and labels.tsv for one trained model per seed.
ReportBundle cmd_export(const CommonArgs& args, model::ModelVariant variant, const std::filesystem::path& out);

}  // namespace ledf::exp
