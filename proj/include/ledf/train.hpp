#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ledf/dataset_io.hpp"
#include "ledf/graph.hpp"
#include "ledf/model.hpp"
#include "ledf/rewire.hpp"

namespace ledf::train {

/// Normalized adjacencies a model variant needs. `adj_r` is only filled when
/// the variant propagates over the reconstructed topology.
struct Topologies {
  NormAdj adj;
  std::optional<NormAdj> adj_r;
  std::optional<rewire::RewireResult> rewired;

  const NormAdj* reconstructed() const { return adj_r ? &*adj_r : nullptr; }
};

/// Builds the original and (if needed) LSC-reconstructed topology for a preset.
Topologies prepare(const Graph& g, const io::HyperPreset& hyper, model::ModelVariant variant,
                   rewire::Mode mode = rewire::Mode::rewire_origin);

struct TrainOptions {
  int max_epochs = 500;
  int patience = 100;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double seconds = 0.0;  // forward + backward + optimizer step
};

struct TrainRun {
  model::ModelConfig config;
  io::HyperPreset hyper;
  TrainOptions options;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  ad::ParamStore best_params;

  double mean_epoch_seconds() const;
};

/// Full-batch training with Adam; keeps the parameters of the epoch with the
/// highest validation accuracy (earliest on ties) and stops after `patience`
/// epochs without improvement.
TrainRun train(const model::ModelConfig& cfg, const io::HyperPreset& hyper, const Graph& g, const Topologies& topo,
               std::uint64_t seed, const TrainOptions& options = {});

/// Fraction of `rows` whose argmax logit equals the label.
double accuracy(const Matrix& logits, const std::vector<int>& labels, const std::vector<std::size_t>& rows);

/// Eval-mode logits of a trained model.
Matrix predict(const model::ModelConfig& cfg, ad::ParamStore& params, const Graph& g, const Topologies& topo);

double evaluate(const model::ModelConfig& cfg, ad::ParamStore& params, const Graph& g, const Topologies& topo,
                Split split);

struct SeedSummary {
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<std::pair<std::uint64_t, double>> per_seed;
};
SeedSummary multi_seed(const std::vector<std::pair<std::uint64_t, double>>& results);
SeedSummary multi_seed(const std::vector<TrainRun>& runs);

struct SweepCurve {
  std::vector<double> raw;         // index l = propagation round
  std::vector<double> normalized;  // min -> 0, max -> 1; all zero when flat
  std::size_t argmax = 0;          // first round attaining the maximum
};

/// Min-max normalization and argmax of a raw accuracy curve.
SweepCurve make_curve(std::vector<double> raw);

/// For l = 0..l_max trains a fresh two-layer MLP on adj^l F + epsilon F and
/// records the test accuracy (mean over seeds).
SweepCurve oversmoothing_sweep(const Graph& g, int l_max, double epsilon, const io::HyperPreset& hyper,
                               const std::vector<std::uint64_t>& seeds, const TrainOptions& options = {});

/// Snapshot of everything that determines a run, used for hashing and logs.
nlohmann::json config_json(const model::ModelConfig& cfg, const io::HyperPreset& hyper, const TrainOptions& options);

/// 16 hex digits of FNV-1a 64 over the compact JSON dump.
std::string config_hash(const nlohmann::json& config);

/// Appends one record per epoch and a final summary record to `file`.
void write_run_log(const TrainRun& run, const std::filesystem::path& file);

}  // namespace ledf::train
