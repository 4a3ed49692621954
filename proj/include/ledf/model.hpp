#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ledf/autodiff.hpp"
#include "ledf/dataset_io.hpp"
#include "ledf/graph.hpp"

namespace ledf::model {

using ad::ParamStore;
using ad::Tape;
using ad::Var;

enum class TopologyMode {
  dual,                // original + reconstructed channels, attention-fused
  original_only,       // drop the reconstructed channel
  reconstructed_only,  // drop the original channel
  none,                // bare backbone, logits = P
};

enum class LayerMode { ledf, last_only, middle_only, mean_pool, max_pool, attention_sum };

struct ModelVariant {
  TopologyMode topology = TopologyMode::dual;
  LayerMode layer = LayerMode::ledf;
  friend bool operator==(const ModelVariant&, const ModelVariant&) = default;
};

std::string to_string(TopologyMode m);
std::string to_string(LayerMode m);
std::string to_string(const ModelVariant& v);
TopologyMode parse_topology(const std::string& s);
LayerMode parse_layer(const std::string& s);

/// The full model and the named variants used by the ablation and fusion studies.
ModelVariant full_model();
ModelVariant backbone_only();

struct BackboneConfig {
  io::Backbone kind = io::Backbone::gcn;
  std::size_t in = 0;
  std::size_t hidden = 128;
  std::size_t out = 0;
  double dropout = 0.5;
  bool bias = false;
};

struct ModelConfig {
  BackboneConfig backbone;
  ModelVariant variant;
  int q1 = 2;            // propagation depth on the original topology
  int q2 = 2;            // propagation depth on the reconstructed topology
  int fusion_depth = 3;  // K, number of mode-3 products in a fusion head
  double epsilon = 0.1;  // initial-residual weight
};

ModelConfig make_config(const io::HyperPreset& preset, std::size_t d, std::size_t c, ModelVariant variant);

/// Widths d_0..d_K of a fusion head over `depth` stacked layers:
/// d_0 = depth, d_j = max(1, round(depth * (K - j) / K)), d_K = 1.
std::vector<std::size_t> ledf_widths(std::size_t depth, int fusion_depth);

/// Glorot-uniform matrix.
Matrix glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

/// Registers every parameter the configuration needs.
void init_params(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed);

/// Two-layer MLP or GCN producing raw logits P.
Var backbone_forward(Tape& tape, const BackboneConfig& cfg, ParamStore& store, Var features, const NormAdj& adj,
                     bool training, std::mt19937_64& rng);

/// Slices P, adj P, ..., adj^Q P (each n x c), computed incrementally.
std::vector<Var> stack_layers(Var p, const NormAdj& adj, int q);

/// Deep fusion over the stacked layers: ReLU after each of the first K-1
/// mode-3 products, linear last product, trailing singleton squeezed.
/// Parameters are read from `<prefix>.w1` .. `<prefix>.wK`.
Var ledf_fuse(ParamStore& store, const std::string& prefix, const std::vector<Var>& slices, int fusion_depth);

struct ChannelWeights {
  Var alpha;  // n x 1
  Var beta;   // n x 1
};

/// Node-wise softmax over the two channel scores relu(H W1) W2, with the same
/// scorer applied to both channels.
ChannelWeights channel_attention(ParamStore& store, const std::string& prefix, Var h, Var h_r);

/// diag(alpha) H + diag(beta) H_R + epsilon P.
Var dtps_fuse(Var alpha, Var beta, Var h, Var h_r, Var p, double epsilon);

struct Forward {
  Var logits;
  Var p;
  std::vector<Var> channel_outputs;  // H and/or H_R
  std::optional<ChannelWeights> channel_weights;
  std::vector<Var> layer_weights;    // n x (Q+1) per channel, attention-sum only
};

/// Assembled forward pass. `adj_r` may be null when the variant has no
/// reconstructed channel.
Forward forward(Tape& tape, const ModelConfig& cfg, ParamStore& store, const Matrix& features, const NormAdj& adj,
                const NormAdj* adj_r, bool training, std::mt19937_64& rng);

/// Mean attention weight of each layer (over nodes) for the attention-sum
/// variant, one vector per channel in forward order.
std::vector<std::vector<double>> export_layer_attention(const ModelConfig& cfg, ParamStore& store,
                                                        const Matrix& features, const NormAdj& adj,
                                                        const NormAdj* adj_r);

struct ShallowDeepMass {
  double shallow = 0.0;
  double deep = 0.0;
};
/// Splits per-layer weights into layers [0, split) and [split, end).
ShallowDeepMass shallow_deep_mass(const std::vector<double>& weights, std::size_t split = 5);

// Checkpoint container: text manifest
//   LEDF-CHECKPOINT 1
//   params <count>
//   <name> <rows> <cols>
//   <rows*cols row-major values, %.17g, space separated>
//   ...
void save_checkpoint(const ParamStore& store, const std::filesystem::path& file);
void load_checkpoint(ParamStore& store, const std::filesystem::path& file);

}  // namespace ledf::model
