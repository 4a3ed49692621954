#include "ledf/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ledf::model {

std::string to_string(TopologyMode m) {
  switch (m) {
    case TopologyMode::dual: return "dual";
    case TopologyMode::original_only: return "original-only";
    case TopologyMode::reconstructed_only: return "reconstructed-only";
    case TopologyMode::none: return "none";
  }
  return "?";
}

std::string to_string(LayerMode m) {
  switch (m) {
    case LayerMode::ledf: return "ledf";
    case LayerMode::last_only: return "last-only";
    case LayerMode::middle_only: return "middle-only";
    case LayerMode::mean_pool: return "mean-pool";
    case LayerMode::max_pool: return "max-pool";
    case LayerMode::attention_sum: return "attention-sum";
  }
  return "?";
}

std::string to_string(const ModelVariant& v) {
  if (v.topology == TopologyMode::none) return "backbone";
  return to_string(v.topology) + "+" + to_string(v.layer);
}

TopologyMode parse_topology(const std::string& s) {
  for (auto m : {TopologyMode::dual, TopologyMode::original_only, TopologyMode::reconstructed_only, TopologyMode::none})
    if (to_string(m) == s) return m;
  throw Error("unknown topology mode '" + s + "'");
}

LayerMode parse_layer(const std::string& s) {
  for (auto m : {LayerMode::ledf, LayerMode::last_only, LayerMode::middle_only, LayerMode::mean_pool,
                 LayerMode::max_pool, LayerMode::attention_sum})
    if (to_string(m) == s) return m;
  throw Error("unknown layer mode '" + s + "'");
}

ModelVariant full_model() { return {TopologyMode::dual, LayerMode::ledf}; }
ModelVariant backbone_only() { return {TopologyMode::none, LayerMode::ledf}; }

ModelConfig make_config(const io::HyperPreset& preset, std::size_t d, std::size_t c, ModelVariant variant) {
  require(preset.q1 >= 1 && preset.q2 >= 1, "preset depths Q1 and Q2 must be >= 1");
  require(preset.fusion_depth >= 2, "fusion depth K must be >= 2");
  require(preset.hidden >= 1, "hidden width must be >= 1");
  ModelConfig cfg;
  cfg.backbone.kind = preset.backbone;
  cfg.backbone.in = d;
  cfg.backbone.hidden = static_cast<std::size_t>(preset.hidden);
  cfg.backbone.out = c;
  cfg.backbone.dropout = preset.dropout;
  cfg.variant = variant;
  cfg.q1 = preset.q1;
  cfg.q2 = preset.q2;
  cfg.fusion_depth = preset.fusion_depth;
  cfg.epsilon = preset.epsilon;
  return cfg;
}

std::vector<std::size_t> ledf_widths(std::size_t depth, int fusion_depth) {
  require(depth >= 1, "ledf_widths: depth must be >= 1");
  require(fusion_depth >= 1, "ledf_widths: fusion depth must be >= 1");
  const auto k = static_cast<std::size_t>(fusion_depth);
  std::vector<std::size_t> w(k + 1);
  w[0] = depth;
  for (std::size_t j = 1; j < k; ++j) {
    const double exact = static_cast<double>(depth) * static_cast<double>(k - j) / static_cast<double>(k);
    w[j] = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(exact)));
  }
  w[k] = 1;
  return w;
}

Matrix glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : m.data) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = (2.0 * u - 1.0) * limit;
  }
  return m;
}

namespace {

bool has_original(TopologyMode t) { return t == TopologyMode::dual || t == TopologyMode::original_only; }
bool has_reconstructed(TopologyMode t) { return t == TopologyMode::dual || t == TopologyMode::reconstructed_only; }

std::size_t half_up(std::size_t c) { return (c + 1) / 2; }

void add_channel_params(ParamStore& store, const ModelConfig& cfg, const std::string& suffix, int q,
                        std::mt19937_64& rng) {
  const std::size_t c = cfg.backbone.out;
  if (cfg.variant.layer == LayerMode::ledf) {
    const auto w = ledf_widths(static_cast<std::size_t>(q) + 1, cfg.fusion_depth);
    for (std::size_t j = 1; j < w.size(); ++j)
      store.add("ledf" + suffix + ".w" + std::to_string(j), glorot(w[j - 1], w[j], rng));
  } else if (cfg.variant.layer == LayerMode::attention_sum) {
    store.add("attn" + suffix + ".w1", glorot(c, half_up(c), rng));
    store.add("attn" + suffix + ".w2", glorot(half_up(c), 1, rng));
  }
}

Var slice_scorer(ParamStore& store, const std::string& prefix, Var x) {
  Tape& t = *x.tape;
  Var hidden = ad::relu(ad::matmul(x, t.param(store.get(prefix + ".w1"))));
  return ad::matmul(hidden, t.param(store.get(prefix + ".w2")));
}

Var fuse_channel(ParamStore& store, const ModelConfig& cfg, const std::string& suffix, const std::vector<Var>& slices,
                 int q, std::vector<Var>& layer_weights) {
  switch (cfg.variant.layer) {
    case LayerMode::ledf: return ledf_fuse(store, "ledf" + suffix, slices, cfg.fusion_depth);
    case LayerMode::last_only: return slices[static_cast<std::size_t>(q)];
    case LayerMode::middle_only: return slices[static_cast<std::size_t>((q + 1) / 2)];
    case LayerMode::mean_pool: return ad::mean_slices(slices);
    case LayerMode::max_pool: return ad::max_slices(slices);
    case LayerMode::attention_sum: {
      std::vector<Var> scores;
      scores.reserve(slices.size());
      for (const Var& s : slices) scores.push_back(slice_scorer(store, "attn" + suffix, s));
      Var weights = ad::row_softmax(ad::concat_cols(scores));
      layer_weights.push_back(weights);
      return ad::weighted_slice_sum(slices, weights);
    }
  }
  throw Error("unhandled layer mode");
}

}  // namespace

void init_params(ParamStore& store, const ModelConfig& cfg, std::uint64_t seed) {
  require(cfg.backbone.in >= 1 && cfg.backbone.out >= 1 && cfg.backbone.hidden >= 1, "model: empty layer width");
  std::mt19937_64 rng(seed);
  store.add("backbone.w0", glorot(cfg.backbone.in, cfg.backbone.hidden, rng));
  store.add("backbone.w1", glorot(cfg.backbone.hidden, cfg.backbone.out, rng));
  if (cfg.backbone.bias) {
    store.add("backbone.b0", Matrix(1, cfg.backbone.hidden));
    store.add("backbone.b1", Matrix(1, cfg.backbone.out));
  }
  const TopologyMode topo = cfg.variant.topology;
  if (has_original(topo)) add_channel_params(store, cfg, "", cfg.q1, rng);
  if (has_reconstructed(topo)) add_channel_params(store, cfg, "_r", cfg.q2, rng);
  if (topo == TopologyMode::dual) {
    const std::size_t c = cfg.backbone.out;
    store.add("dtps.w1", glorot(c, half_up(c), rng));
    store.add("dtps.w2", glorot(half_up(c), 1, rng));
  }
}

Var backbone_forward(Tape& tape, const BackboneConfig& cfg, ParamStore& store, Var features, const NormAdj& adj,
                     bool training, std::mt19937_64& rng) {
  require(features.cols() == cfg.in, "backbone: features have " + std::to_string(features.cols()) +
                                         " columns, expected " + std::to_string(cfg.in));
  const bool gcn = cfg.kind == io::Backbone::gcn;
  if (gcn) require(adj.n == features.rows(), "backbone: adjacency and features disagree on node count");

  // A(XW) is used instead of (AX)W; both are the same map.
  auto layer = [&](Var x, const std::string& w, const std::string& b) {
    Var h = ad::matmul(x, tape.param(store.get(w)));
    if (gcn) h = ad::spmm(adj, h);
    if (cfg.bias) h = ad::add_row_bias(h, tape.param(store.get(b)));
    return h;
  };
  Var h = ad::dropout(features, cfg.dropout, training, rng);
  h = ad::relu(layer(h, "backbone.w0", "backbone.b0"));
  h = ad::dropout(h, cfg.dropout, training, rng);
  return layer(h, "backbone.w1", "backbone.b1");
}

std::vector<Var> stack_layers(Var p, const NormAdj& adj, int q) {
  require(q >= 1, "stack_layers: Q must be >= 1");
  std::vector<Var> slices{p};
  slices.reserve(static_cast<std::size_t>(q) + 1);
  for (int step = 0; step < q; ++step) slices.push_back(ad::spmm(adj, slices.back()));
  return slices;
}

Var ledf_fuse(ParamStore& store, const std::string& prefix, const std::vector<Var>& slices, int fusion_depth) {
  require(!slices.empty(), "ledf_fuse: no layers");
  const std::size_t n = slices.front().rows(), c = slices.front().cols();
  Tape& tape = *slices.front().tape;
  Var t = ad::stack_slices(slices);
  for (int j = 1; j <= fusion_depth; ++j) {
    Var w = tape.param(store.get(prefix + ".w" + std::to_string(j)));
    require(w.rows() == t.cols(), "ledf_fuse: " + prefix + ".w" + std::to_string(j) + " expects width " +
                                      std::to_string(w.rows()) + " but input has " + std::to_string(t.cols()));
    t = ad::mode3_product(t, w);
    if (j < fusion_depth) t = ad::relu(t);
  }
  require(t.cols() == 1, "ledf_fuse: last fusion matrix must have one column");
  return ad::reshape(t, n, c);
}

ChannelWeights channel_attention(ParamStore& store, const std::string& prefix, Var h, Var h_r) {
  require(h.value().same_shape(h_r.value()), "channel_attention: H and H_R differ in shape");
  Var s = slice_scorer(store, prefix, h);
  Var s_r = slice_scorer(store, prefix, h_r);
  Var both = ad::row_softmax(ad::concat_cols({s, s_r}));
  return {ad::column(both, 0), ad::column(both, 1)};
}

Var dtps_fuse(Var alpha, Var beta, Var h, Var h_r, Var p, double epsilon) {
  return ad::add(ad::add(ad::row_scale(alpha, h), ad::row_scale(beta, h_r)), ad::scale(p, epsilon));
}

Forward forward(Tape& tape, const ModelConfig& cfg, ParamStore& store, const Matrix& features, const NormAdj& adj,
                const NormAdj* adj_r, bool training, std::mt19937_64& rng) {
  Forward out;
  const TopologyMode topo = cfg.variant.topology;
  if (has_reconstructed(topo)) {
    require(adj_r != nullptr, "forward: variant needs the reconstructed adjacency");
    require(adj_r->n == adj.n, "forward: original and reconstructed adjacency differ in node count");
  }
  Var f = tape.constant(features);
  out.p = backbone_forward(tape, cfg.backbone, store, f, adj, training, rng);
  if (topo == TopologyMode::none) {
    out.logits = out.p;
    return out;
  }
  if (has_original(topo)) {
    const auto slices = stack_layers(out.p, adj, cfg.q1);
    out.channel_outputs.push_back(fuse_channel(store, cfg, "", slices, cfg.q1, out.layer_weights));
  }
  if (has_reconstructed(topo)) {
    const auto slices = stack_layers(out.p, *adj_r, cfg.q2);
    out.channel_outputs.push_back(fuse_channel(store, cfg, "_r", slices, cfg.q2, out.layer_weights));
  }
  if (topo == TopologyMode::dual) {
    Var h = out.channel_outputs[0], h_r = out.channel_outputs[1];
    out.channel_weights = channel_attention(store, "dtps", h, h_r);
    out.logits = dtps_fuse(out.channel_weights->alpha, out.channel_weights->beta, h, h_r, out.p, cfg.epsilon);
  } else {
    out.logits = ad::add(out.channel_outputs[0], ad::scale(out.p, cfg.epsilon));
  }
  return out;
}

std::vector<std::vector<double>> export_layer_attention(const ModelConfig& cfg, ParamStore& store,
                                                        const Matrix& features, const NormAdj& adj,
                                                        const NormAdj* adj_r) {
  require(cfg.variant.layer == LayerMode::attention_sum,
          "layer attention export needs the attention-sum variant, got " + to_string(cfg.variant));
  require(cfg.variant.topology != TopologyMode::none, "layer attention export needs a propagation channel");
  Tape tape;
  std::mt19937_64 rng(0);
  const Forward fw = forward(tape, cfg, store, features, adj, adj_r, false, rng);
  std::vector<std::vector<double>> result;
  for (const Var& w : fw.layer_weights) {
    const Matrix& m = w.value();
    std::vector<double> mean(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
      for (std::size_t q = 0; q < m.cols; ++q) mean[q] += m(i, q);
    for (double& v : mean) v /= static_cast<double>(m.rows);
    result.push_back(std::move(mean));
  }
  return result;
}

ShallowDeepMass shallow_deep_mass(const std::vector<double>& weights, std::size_t split) {
  ShallowDeepMass m;
  for (std::size_t q = 0; q < weights.size(); ++q) (q < split ? m.shallow : m.deep) += weights[q];
  return m;
}

void save_checkpoint(const ParamStore& store, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + file.string());
  out << "LEDF-CHECKPOINT 1\n";
  out << "params " << store.all().size() << '\n';
  char buf[32];
  for (const auto& p : store.all()) {
    out << p.name << ' ' << p.value.rows << ' ' << p.value.cols << '\n';
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", p.value.data[k]);
      out << (k ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing checkpoint " + file.string());
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open checkpoint " + file.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "LEDF-CHECKPOINT" || version != 1) throw Error(file.string() + ": not a version-1 checkpoint");
  std::string tag;
  std::size_t count = 0;
  in >> tag >> count;
  if (tag != "params") throw Error(file.string() + ": malformed manifest");
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw Error(file.string() + ": truncated manifest");
    Matrix m(rows, cols);
    for (double& v : m.data)
      if (!(in >> v)) throw Error(file.string() + ": truncated values for " + name);
    if (store.contains(name)) {
      auto& p = store.get(name);
      if (!p.value.same_shape(m))
        throw Error(file.string() + ": shape of " + name + " is " + shape_str(m) + ", model expects " +
                    shape_str(p.value));
      p.value = std::move(m);
    } else {
      store.add(name, std::move(m));
    }
  }
}

}  // namespace ledf::model
