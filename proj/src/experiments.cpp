#include "ledf/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "ledf/kernels.hpp"

namespace ledf::exp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

bool is_sbm(const std::string& name) { return name.rfind("sbm:", 0) == 0; }

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string stem_of(const std::string& name) {
  std::string s;
  for (unsigned char ch : name) s.push_back(std::isalnum(ch) ? static_cast<char>(ch) : '_');
  return s;
}

json environment(const CommonArgs& args) {
  return json{{"seeds", args.seeds}, {"workers", args.workers}, {"kernel_threads", kernels::max_threads()}};
}

json overrides_json(const Overrides& o) {
  json j = json::object();
  if (o.k) j["k"] = *o.k;
  if (o.q1) j["q1"] = *o.q1;
  if (o.q2) j["q2"] = *o.q2;
  if (o.fusion_depth) j["fusion_depth"] = *o.fusion_depth;
  if (o.hidden) j["hidden"] = *o.hidden;
  if (o.gamma) j["gamma"] = *o.gamma;
  if (o.lr) j["lr"] = *o.lr;
  if (o.weight_decay) j["weight_decay"] = *o.weight_decay;
  if (o.dropout) j["dropout"] = *o.dropout;
  return j;
}

json base_config(const std::string& command, const CommonArgs& args) {
  std::vector<std::string> backbones;
  for (auto b : args.backbones) backbones.push_back(io::to_string(b));
  return json{{"command", command},
              {"datasets", args.datasets},
              {"backbones", backbones},
              {"seeds", args.seeds},
              {"overrides", overrides_json(args.overrides)},
              {"max_epochs", args.options.max_epochs},
              {"patience", args.options.patience},
              {"rewire_mode", rewire::to_string(args.rewire_mode)}};
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  return out + "\"";
}

struct Loaded {
  Graph graph;
  io::HyperPreset hyper;
};

Loaded load(const std::string& name, const CommonArgs& args, io::Backbone backbone) {
  Loaded l{resolve_dataset(name, args.data_root), {}};
  l.hyper = resolve_preset(l.graph, backbone, args.overrides);
  return l;
}

void add_summary_row(CsvTable& t, const VariantResult& r) {
  t.rows.push_back({r.dataset, io::to_string(r.backbone), r.label, fmt(r.summary.mean), fmt(r.summary.std),
                    std::to_string(r.runs.size())});
}

void add_seed_rows(CsvTable& t, const VariantResult& r) {
  for (const auto& run : r.runs)
    t.rows.push_back({r.dataset, io::to_string(r.backbone), r.label, std::to_string(run.seed),
                      std::to_string(run.best_epoch), fmt(run.best_val_acc), fmt(run.test_acc)});
}

CsvTable summary_table(const std::string& name) {
  return {name, {"dataset", "backbone", "model", "mean_test_acc", "std_test_acc", "seeds"}, {}};
}

CsvTable seed_table(const std::string& name) {
  return {name, {"dataset", "backbone", "model", "seed", "best_epoch", "best_val_acc", "test_acc"}, {}};
}

struct NamedVariant {
  std::string label;
  model::ModelVariant variant;
};

ReportBundle compare_variants(const std::string& id, const CommonArgs& args, const std::vector<NamedVariant>& list) {
  ReportBundle b;
  b.id = id;
  b.config = base_config(id, args);
  b.environment = environment(args);
  CsvTable summary = summary_table(id), seeds = seed_table(id + "_per_seed");
  for (const auto& name : args.datasets) {
    for (auto backbone : args.backbones) {
      const Loaded l = load(name, args, backbone);
      const auto topo = train::prepare(l.graph, l.hyper, model::full_model(), args.rewire_mode);
      Chart chart{stem_of(id + "_" + l.graph.name + "_" + io::to_string(backbone)), Chart::Kind::bar,
                  l.graph.name + " (" + io::to_string(backbone) + ")", "variant", "test accuracy", {}, {}};
      Series means{"mean test accuracy", {}};
      for (const auto& v : list) {
        const auto r = run_variant(l.graph, topo, l.hyper, v.variant, v.label, args);
        add_summary_row(summary, r);
        add_seed_rows(seeds, r);
        chart.categories.push_back(v.label);
        means.values.push_back(std::stod(fmt(r.summary.mean)));
      }
      chart.series.push_back(means);
      b.charts.push_back(chart);
    }
  }
  b.tables = {summary, seeds};
  return b;
}

}  // namespace

SbmSpec parse_sbm_spec(const std::string& body) {
  SbmSpec s;
  for (const auto& kv : split_list(body, ',')) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("sbm spec: expected key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    try {
      if (key == "n") s.n = std::stoull(value);
      else if (key == "c") s.c = std::stoull(value);
      else if (key == "h") s.target_homophily = std::stod(value);
      else if (key == "deg") s.avg_degree = std::stod(value);
      else if (key == "d") s.d = std::stoull(value);
      else if (key == "signal") s.feature_signal = std::stod(value);
      else if (key == "seed") s.seed = std::stoull(value);
      else if (key == "train") s.train_per_class = std::stoull(value);
      else if (key == "valid") s.valid_fraction = std::stod(value);
      else throw Error("sbm spec: unknown key '" + key + "' (n, c, h, deg, d, signal, seed, train, valid)");
    } catch (const std::logic_error&) {
      throw Error("sbm spec: bad value '" + value + "' for key '" + key + "'");
    }
  }
  return s;
}

Graph resolve_dataset(const std::string& spec, const fs::path& data_root) {
  if (is_sbm(spec)) {
    Graph g = sbm_generate(parse_sbm_spec(spec.substr(4)));
    g.name = spec;
    return g;
  }
  if (fs::is_directory(spec)) return io::load_dataset(spec);
  if (fs::is_directory(data_root / spec)) return io::load_dataset(data_root / spec);
  if (fs::is_directory(data_root)) {
    for (const auto& entry : fs::directory_iterator(data_root))
      if (entry.is_directory() && lower(entry.path().filename().string()) == lower(spec))
        return io::load_dataset(entry.path());
  }
  throw Error("dataset '" + spec + "' not found: not a directory, not under " + data_root.string() +
              ", and not an sbm: spec");
}

io::HyperPreset resolve_preset(const Graph& g, io::Backbone backbone, const Overrides& o) {
  io::HyperPreset p;
  if (is_sbm(g.name)) {
    p.dataset = g.name;
    p.backbone = backbone;
    p.k = 10;
    p.q1 = 4;
    p.q2 = 4;
  } else {
    p = io::preset(g.name, backbone);
  }
  if (o.k) p.k = *o.k;
  if (o.q1) p.q1 = *o.q1;
  if (o.q2) p.q2 = *o.q2;
  if (o.fusion_depth) p.fusion_depth = *o.fusion_depth;
  if (o.hidden) p.hidden = *o.hidden;
  if (o.gamma) p.gamma = *o.gamma;
  if (o.lr) p.lr = *o.lr;
  if (o.weight_decay) p.weight_decay = *o.weight_decay;
  if (o.dropout) p.dropout = *o.dropout;
  return p;
}

int worker_count() {
  if (const char* env = std::getenv("LEDF_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  return 1;
}

void run_pool(const std::vector<std::function<void()>>& jobs, int workers) {
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        jobs[j]();
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max(1, workers));
  if (count == 1 || jobs.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(count, jobs.size()); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string CsvTable::render() const {
  std::string out;
  auto line = [&out](const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) out += (k ? "," : "") + csv_field(fields[k]);
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string Chart::render_svg() const {
  constexpr double width = 720, height = 420, left = 80, right = 180, top = 50, bottom = 70;
  constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& s : series)
    for (double v : s.values) {
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  if (kind == Kind::bar) lo = std::min(lo, 0.0);
  const double span = hi > lo ? hi - lo : 1.0;
  auto y_of = [&](double v) { return top + plot_h * (1.0 - (v - lo) / span); };
  const std::size_t slots = std::max<std::size_t>(categories.size(), 1);

  std::ostringstream svg;
  svg << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height
      << R"(" font-family="sans-serif" font-size="12">)" << '\n';
  svg << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
  svg << R"(<text x=")" << width / 2 << R"(" y="25" text-anchor="middle" font-size="15">)" << xml_escape(title)
      << "</text>\n";
  svg << R"(<line x1=")" << left << R"(" y1=")" << top + plot_h << R"(" x2=")" << left + plot_w << R"(" y2=")"
      << top + plot_h << R"(" stroke="black"/>)" << '\n';
  svg << R"(<line x1=")" << left << R"(" y1=")" << top << R"(" x2=")" << left << R"(" y2=")" << top + plot_h
      << R"(" stroke="black"/>)" << '\n';
  if (any) {
    svg << R"(<text x=")" << left - 6 << R"(" y=")" << y_of(hi) + 4 << R"(" text-anchor="end">)" << fmt(hi)
        << "</text>\n";
    svg << R"(<text x=")" << left - 6 << R"(" y=")" << y_of(lo) + 4 << R"(" text-anchor="end">)" << fmt(lo)
        << "</text>\n";
  }
  for (std::size_t k = 0; k < categories.size(); ++k) {
    const double x = left + plot_w * (static_cast<double>(k) + 0.5) / static_cast<double>(slots);
    svg << R"(<text x=")" << x << R"(" y=")" << top + plot_h + 18 << R"(" text-anchor="middle">)"
        << xml_escape(categories[k]) << "</text>\n";
  }
  svg << R"(<text x=")" << left + plot_w / 2 << R"(" y=")" << height - 20 << R"(" text-anchor="middle">)"
      << xml_escape(x_label) << "</text>\n";
  svg << R"(<text x="18" y=")" << top + plot_h / 2 << R"(" text-anchor="middle" transform="rotate(-90 18 )"
      << top + plot_h / 2 << R"x()">)x" << xml_escape(y_label) << "</text>\n";

  const double group = plot_w / static_cast<double>(slots);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % std::size(palette)];
    const auto& vals = series[s].values;
    if (kind == Kind::line) {
      svg << R"(<polyline fill="none" stroke=")" << color << R"(" stroke-width="2" points=")";
      for (std::size_t k = 0; k < vals.size(); ++k)
        svg << (k ? " " : "") << left + group * (static_cast<double>(k) + 0.5) << ',' << y_of(vals[k]);
      svg << "\"/>\n";
      for (std::size_t k = 0; k < vals.size(); ++k)
        svg << R"(<circle cx=")" << left + group * (static_cast<double>(k) + 0.5) << R"(" cy=")" << y_of(vals[k])
            << R"(" r="3" fill=")" << color << "\"/>\n";
    } else {
      const double bar = group * 0.8 / static_cast<double>(std::max<std::size_t>(series.size(), 1));
      for (std::size_t k = 0; k < vals.size(); ++k) {
        const double x = left + group * static_cast<double>(k) + group * 0.1 + bar * static_cast<double>(s);
        const double y0 = y_of(std::max(vals[k], 0.0)), y1 = y_of(std::min(vals[k], 0.0));
        svg << R"(<rect x=")" << x << R"(" y=")" << y0 << R"(" width=")" << bar << R"(" height=")" << y1 - y0
            << R"(" fill=")" << color << "\"/>\n";
      }
    }
    const double ly = top + 18.0 * static_cast<double>(s);
    svg << R"(<rect x=")" << left + plot_w + 15 << R"(" y=")" << ly << R"(" width="12" height="12" fill=")"
        << color << "\"/>\n";
    svg << R"(<text x=")" << left + plot_w + 32 << R"(" y=")" << ly + 10 << R"(">)" << xml_escape(series[s].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

fs::path ReportBundle::write(const fs::path& dir) const {
  const fs::path root = dir / id;
  fs::create_directories(root);
  auto put = [](const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + file.string());
    out << text;
  };
  json manifest{{"id", id},
                {"config", config},
                {"config_hash", train::config_hash(config)},
                {"environment", environment},
                {"tables", json::array()},
                {"charts", json::array()}};
  for (const auto& t : tables) {
    put(root / (t.name + ".csv"), t.render());
    manifest["tables"].push_back(t.name + ".csv");
  }
  for (const auto& c : charts) {
    put(root / (c.name + ".svg"), c.render_svg());
    manifest["charts"].push_back(c.name + ".svg");
  }
  put(root / "report.json", manifest.dump(2) + "\n");
  return root;
}

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

Sweep parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw Error("sweep: expected PARAM=v1,v2,..., got '" + text + "'");
  Sweep s;
  s.param = text.substr(0, eq);
  if (s.param == "q") s.param = "Q";
  if (s.param == "K") s.param = "k";
  if (s.param != "Q" && s.param != "k") throw Error("sweep: parameter must be Q or k, got '" + s.param + "'");
  for (const auto& v : split_list(text.substr(eq + 1), ',')) {
    try {
      s.values.push_back(std::stoi(v));
    } catch (const std::logic_error&) {
      throw Error("sweep: bad value '" + v + "'");
    }
    if (s.values.back() < 1) throw Error("sweep: values must be >= 1");
  }
  if (s.values.empty()) throw Error("sweep: no values given");
  return s;
}

VariantResult run_variant(const Graph& g, const train::Topologies& topo, const io::HyperPreset& hyper,
                          model::ModelVariant variant, const std::string& label, const CommonArgs& args) {
  require(!args.seeds.empty(), "no seeds given");
  VariantResult r;
  r.dataset = g.name;
  r.backbone = hyper.backbone;
  r.label = label;
  r.variant = variant;
  r.hyper = hyper;
  const auto cfg = model::make_config(hyper, g.d(), g.c, variant);
  r.runs.resize(args.seeds.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t s = 0; s < args.seeds.size(); ++s) {
    jobs.emplace_back([&, s] {
      r.runs[s] = train::train(cfg, hyper, g, topo, args.seeds[s], args.options);
      if (!args.log_root.empty()) {
        const auto hash = train::config_hash(train::config_json(cfg, hyper, args.options));
        train::write_run_log(r.runs[s], args.log_root / "runs" / hash /
                                            ("log-seed" + std::to_string(args.seeds[s]) + ".jsonl"));
      }
    });
  }
  run_pool(jobs, args.workers);
  r.summary = train::multi_seed(r.runs);
  for (auto& run : r.runs) run.best_params = {};
  return r;
}

ReportBundle cmd_classify(const CommonArgs& args, const std::optional<Sweep>& sweep) {
  ReportBundle b;
  b.id = sweep ? "sensitivity_" + sweep->param : "classify";
  b.config = base_config("classify", args);
  if (sweep) b.config["sweep"] = {{"param", sweep->param}, {"values", sweep->values}};
  b.environment = environment(args);

  if (!sweep) {
    CsvTable summary = summary_table("accuracy"), seeds = seed_table("accuracy_per_seed");
    Chart chart{"accuracy", Chart::Kind::bar, "Test accuracy", "dataset / backbone", "test accuracy", {}, {}};
    Series base{"backbone", {}}, full{"+LEDF", {}};
    for (const auto& name : args.datasets) {
      for (auto backbone : args.backbones) {
        const Loaded l = load(name, args, backbone);
        const auto topo = train::prepare(l.graph, l.hyper, model::full_model(), args.rewire_mode);
        const auto rb = run_variant(l.graph, topo, l.hyper, model::backbone_only(), "baseline", args);
        const auto rl = run_variant(l.graph, topo, l.hyper, model::full_model(), "ledf", args);
        for (const auto* r : {&rb, &rl}) {
          add_summary_row(summary, *r);
          add_seed_rows(seeds, *r);
        }
        chart.categories.push_back(l.graph.name + "/" + io::to_string(backbone));
        base.values.push_back(std::stod(fmt(rb.summary.mean)));
        full.values.push_back(std::stod(fmt(rl.summary.mean)));
      }
    }
    chart.series = {base, full};
    b.tables = {summary, seeds};
    b.charts = {chart};
    return b;
  }

  CsvTable table{"sensitivity", {"dataset", "backbone", "param", "value", "mean_test_acc", "std_test_acc"}, {}};
  CsvTable seeds = seed_table("sensitivity_per_seed");
  for (const auto& name : args.datasets) {
    for (auto backbone : args.backbones) {
      const Loaded l = load(name, args, backbone);
      Chart chart{stem_of("sensitivity_" + sweep->param + "_" + l.graph.name + "_" + io::to_string(backbone)),
                  Chart::Kind::line, l.graph.name + " (" + io::to_string(backbone) + ")", sweep->param,
                  "test accuracy", {}, {}};
      Series means{"+LEDF", {}};
      std::optional<train::Topologies> shared;
      for (int v : sweep->values) {
        io::HyperPreset hyper = l.hyper;
        if (sweep->param == "Q") {
          hyper.q1 = v;
          hyper.q2 = v;
        } else {
          hyper.k = v;
        }
        if (sweep->param == "k" || !shared)
          shared = train::prepare(l.graph, hyper, model::full_model(), args.rewire_mode);
        const auto r = run_variant(l.graph, *shared, hyper, model::full_model(),
                                   "ledf " + sweep->param + "=" + std::to_string(v), args);
        table.rows.push_back({l.graph.name, io::to_string(backbone), sweep->param, std::to_string(v),
                              fmt(r.summary.mean), fmt(r.summary.std)});
        add_seed_rows(seeds, r);
        chart.categories.push_back(std::to_string(v));
        means.values.push_back(std::stod(fmt(r.summary.mean)));
      }
      chart.series = {means};
      b.charts.push_back(chart);
    }
  }
  b.tables = {table, seeds};
  return b;
}

ReportBundle cmd_ablation(const CommonArgs& args) {
  using model::LayerMode;
  using model::TopologyMode;
  return compare_variants("ablation", args,
                          {{"full", model::full_model()},
                           {"original-only", {TopologyMode::original_only, LayerMode::ledf}},
                           {"reconstructed-only", {TopologyMode::reconstructed_only, LayerMode::ledf}},
                           {"last-only", {TopologyMode::dual, LayerMode::last_only}},
                           {"middle-only", {TopologyMode::dual, LayerMode::middle_only}}});
}

ReportBundle cmd_fusion_compare(const CommonArgs& args) {
  using model::LayerMode;
  using model::TopologyMode;
  return compare_variants("fusion", args,
                          {{"ledf", model::full_model()},
                           {"mean-pool", {TopologyMode::dual, LayerMode::mean_pool}},
                           {"max-pool", {TopologyMode::dual, LayerMode::max_pool}},
                           {"attention-sum", {TopologyMode::dual, LayerMode::attention_sum}}});
}

std::vector<AttentionResult> attention_distribution(const Graph& g, const CommonArgs& args, io::Backbone backbone,
                                                    int q) {
  io::HyperPreset hyper = resolve_preset(g, backbone, args.overrides);
  hyper.q1 = q;
  hyper.q2 = q;
  const auto topo = train::prepare(g, hyper, model::full_model(), args.rewire_mode);
  std::vector<AttentionResult> out;
  for (auto mode : {model::TopologyMode::original_only, model::TopologyMode::reconstructed_only}) {
    const model::ModelVariant variant{mode, model::LayerMode::attention_sum};
    const auto cfg = model::make_config(hyper, g.d(), g.c, variant);
    std::vector<train::TrainRun> runs(args.seeds.size());
    std::vector<std::function<void()>> jobs;
    for (std::size_t s = 0; s < args.seeds.size(); ++s)
      jobs.emplace_back([&, s] { runs[s] = train::train(cfg, hyper, g, topo, args.seeds[s], args.options); });
    run_pool(jobs, args.workers);

    AttentionResult res;
    res.topology = mode == model::TopologyMode::original_only ? "original" : "reconstructed";
    res.layer_weights.assign(static_cast<std::size_t>(q) + 1, 0.0);
    for (auto& run : runs) {
      const auto w = model::export_layer_attention(cfg, run.best_params, g.features, topo.adj, topo.reconstructed());
      for (std::size_t l = 0; l < res.layer_weights.size(); ++l) res.layer_weights[l] += w.at(0)[l];
    }
    for (double& v : res.layer_weights) v /= static_cast<double>(runs.size());
    res.mass = model::shallow_deep_mass(res.layer_weights, 5);
    out.push_back(std::move(res));
  }
  return out;
}

ReportBundle cmd_attention_dist(const CommonArgs& args) {
  ReportBundle b;
  b.id = "attention";
  b.config = base_config("attention", args);
  b.config["q"] = 9;
  b.environment = environment(args);
  CsvTable layers{"attention_layers", {"dataset", "backbone", "topology", "layer", "mean_weight"}, {}};
  CsvTable mass{"attention_mass", {"dataset", "backbone", "topology", "shallow_0_4", "deep_5_9", "total"}, {}};
  for (const auto& name : args.datasets) {
    const Graph g = resolve_dataset(name, args.data_root);
    for (auto backbone : args.backbones) {
      Chart chart{stem_of("attention_" + g.name + "_" + io::to_string(backbone)), Chart::Kind::bar,
                  g.name + " (" + io::to_string(backbone) + ")", "layer", "mean attention weight", {}, {}};
      for (int l = 0; l <= 9; ++l) chart.categories.push_back(std::to_string(l));
      for (const auto& r : attention_distribution(g, args, backbone, 9)) {
        Series s{r.topology, {}};
        for (std::size_t l = 0; l < r.layer_weights.size(); ++l) {
          layers.rows.push_back({g.name, io::to_string(backbone), r.topology, std::to_string(l),
                                 fmt(r.layer_weights[l])});
          s.values.push_back(std::stod(fmt(r.layer_weights[l])));
        }
        mass.rows.push_back({g.name, io::to_string(backbone), r.topology, fmt(r.mass.shallow), fmt(r.mass.deep),
                             fmt(r.mass.shallow + r.mass.deep)});
        chart.series.push_back(s);
      }
      b.charts.push_back(chart);
    }
  }
  b.tables = {layers, mass};
  return b;
}

ReportBundle cmd_rewire(const CommonArgs& args, const RewireArgs& rw) {
  ReportBundle b;
  b.id = rw.bench ? "rewire_bench" : "rewire";
  b.config = base_config("rewire", args);
  b.config["metric"] = rw.bench ? "all" : rewire::to_string(rw.metric);
  b.config["mode"] = rw.bench ? "all" : rewire::to_string(rw.mode);
  b.config["k"] = rw.k;
  if (rw.gamma) b.config["gamma"] = *rw.gamma;
  b.environment = environment(args);
  require(rw.dataset_out.empty() || (!rw.bench && args.datasets.size() == 1),
          "rewire: --dataset-out needs exactly one dataset and a single metric/mode");

  CsvTable table{"rewire",
                 {"dataset", "metric", "mode", "k", "gamma", "homophily_before", "homophily_after", "seconds",
                  "peak_extra_bytes"},
                 {}};
  Chart chart{"rewire_homophily", Chart::Kind::bar, "Edge homophily after reconstruction", "dataset",
              "edge homophily", {}, {}};
  std::vector<Series> series;
  for (const auto& name : args.datasets) {
    const Graph g = resolve_dataset(name, args.data_root);
    const auto hyper = resolve_preset(g, io::Backbone::gcn, args.overrides);
    const std::size_t k = rw.k ? rw.k : static_cast<std::size_t>(hyper.k);
    const double gamma = rw.gamma.value_or(hyper.gamma);
    std::vector<rewire::BenchmarkRow> rows;
    if (rw.bench) {
      rows = rewire::rewire_benchmark(g, k, gamma);
    } else {
      const auto pass = rewire::similarity_topk(g, rw.metric, k, gamma);
      const auto result = rewire::reconstruct(g, pass.topk, rw.mode);
      rows.push_back({rw.metric, rw.mode, k, gamma, result.homophily_before, result.homophily_after, pass.seconds,
                      pass.peak_extra_bytes});
      if (!rw.dataset_out.empty()) {
        Graph out = g;
        out.name = g.name + "-" + rewire::to_string(rw.metric) + "-" + rewire::to_string(rw.mode);
        out.edges = result.edges;
        io::save_dataset(out, rw.dataset_out);
      }
    }
    chart.categories.push_back(g.name);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& row = rows[r];
      table.rows.push_back({g.name, rewire::to_string(row.metric), rewire::to_string(row.mode),
                            std::to_string(row.k), fmt(row.gamma, 3), fmt(row.homophily_before),
                            fmt(row.homophily_after), fmt(row.seconds), std::to_string(row.peak_extra_bytes)});
      if (series.size() <= r)
        series.push_back({rewire::to_string(row.metric) + " / " + rewire::to_string(row.mode), {}});
      series[r].values.push_back(std::stod(fmt(row.homophily_after)));
    }
  }
  chart.series = series;
  b.tables = {table};
  b.charts = {chart};
  return b;
}

ReportBundle cmd_oversmooth(const CommonArgs& args, int l_max, double epsilon) {
  ReportBundle b;
  b.id = "oversmooth";
  b.config = base_config("oversmooth", args);
  b.config["l_max"] = l_max;
  b.config["epsilon"] = epsilon;
  b.environment = environment(args);

  std::vector<Graph> graphs;
  for (const auto& name : args.datasets) graphs.push_back(resolve_dataset(name, args.data_root));
  std::vector<train::SweepCurve> curves(graphs.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t k = 0; k < graphs.size(); ++k)
    jobs.emplace_back([&, k] {
      const auto hyper = resolve_preset(graphs[k], io::Backbone::mlp, args.overrides);
      curves[k] = train::oversmoothing_sweep(graphs[k], l_max, epsilon, hyper, args.seeds, args.options);
    });
  run_pool(jobs, args.workers);

  CsvTable table{"oversmooth_curves", {"dataset", "round", "raw_acc", "normalized_acc"}, {}};
  CsvTable summary{"oversmooth_summary", {"dataset", "argmax_round", "max_raw_acc", "normalized_at_lmax"}, {}};
  Chart chart{"oversmooth", Chart::Kind::line, "Normalized accuracy vs propagation rounds", "round l",
              "min-max normalized accuracy", {}, {}};
  for (int l = 0; l <= l_max; ++l) chart.categories.push_back(std::to_string(l));
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const auto& c = curves[k];
    Series s{graphs[k].name, {}};
    for (std::size_t l = 0; l < c.raw.size(); ++l) {
      table.rows.push_back({graphs[k].name, std::to_string(l), fmt(c.raw[l]), fmt(c.normalized[l])});
      s.values.push_back(std::stod(fmt(c.normalized[l])));
    }
    summary.rows.push_back(
        {graphs[k].name, std::to_string(c.argmax), fmt(c.raw[c.argmax]), fmt(c.normalized.back())});
    chart.series.push_back(s);
  }
  b.tables = {table, summary};
  b.charts = {chart};
  return b;
}

std::vector<OverheadRow> measure_overhead(const Graph& g, const CommonArgs& args, io::Backbone backbone,
                                          int epochs) {
  const auto hyper = resolve_preset(g, backbone, args.overrides);
  const auto topo = train::prepare(g, hyper, model::full_model(), args.rewire_mode);
  train::TrainOptions timing;
  timing.max_epochs = epochs;
  timing.patience = epochs;

  auto mean_time = [&](const io::HyperPreset& h, model::ModelVariant v) {
    const auto cfg = model::make_config(h, g.d(), g.c, v);
    double total = 0.0;
    for (auto seed : args.seeds) total += train::train(cfg, h, g, topo, seed, timing).mean_epoch_seconds();
    return total / static_cast<double>(args.seeds.size());
  };
  io::HyperPreset doubled = hyper;
  doubled.q1 *= 2;
  doubled.q2 *= 2;
  return {{g.name, io::to_string(backbone), 0, 0, mean_time(hyper, model::backbone_only())},
          {g.name, io::to_string(backbone) + "+ledf", hyper.q1, hyper.q2, mean_time(hyper, model::full_model())},
          {g.name, io::to_string(backbone) + "+ledf", doubled.q1, doubled.q2,
           mean_time(doubled, model::full_model())}};
}

ReportBundle cmd_overhead(const CommonArgs& args, int epochs) {
  ReportBundle b;
  b.id = "overhead";
  b.config = base_config("overhead", args);
  b.config["epochs"] = epochs;
  b.environment = environment(args);
  CsvTable table{"overhead", {"dataset", "model", "q1", "q2", "mean_epoch_seconds", "ratio_vs_backbone"}, {}};
  for (const auto& name : args.datasets) {
    const Graph g = resolve_dataset(name, args.data_root);
    for (auto backbone : args.backbones) {
      const auto rows = measure_overhead(g, args, backbone, epochs);
      for (const auto& r : rows)
        table.rows.push_back({r.dataset, r.model, std::to_string(r.q1), std::to_string(r.q2),
                              fmt(r.mean_epoch_seconds, 9), fmt(r.mean_epoch_seconds / rows[0].mean_epoch_seconds, 4)});
    }
  }
  b.tables = {table};
  return b;
}

ReportBundle cmd_export(const CommonArgs& args, model::ModelVariant variant, const fs::path& out) {
  ReportBundle b;
  b.id = "export";
  b.config = base_config("export", args);
  b.config["variant"] = model::to_string(variant);
  b.environment = environment(args);
  CsvTable table{"export", {"dataset", "backbone", "seed", "rows", "cols", "test_acc", "directory"}, {}};
  for (const auto& name : args.datasets) {
    for (auto backbone : args.backbones) {
      const Loaded l = load(name, args, backbone);
      const auto topo = train::prepare(l.graph, l.hyper, variant, args.rewire_mode);
      const auto cfg = model::make_config(l.hyper, l.graph.d(), l.graph.c, variant);
      for (auto seed : args.seeds) {
        auto run = train::train(cfg, l.hyper, l.graph, topo, seed, args.options);
        const Matrix h = train::predict(cfg, run.best_params, l.graph, topo);
        const fs::path dir =
            out / stem_of(l.graph.name) / (io::to_string(backbone) + "-seed" + std::to_string(seed));
        fs::create_directories(dir);
        std::ofstream emb(dir / "embeddings.tsv", std::ios::binary | std::ios::trunc);
        std::ofstream lab(dir / "labels.tsv", std::ios::binary | std::ios::trunc);
        if (!emb || !lab) throw Error("cannot write export files under " + dir.string());
        char buf[32];
        for (std::size_t i = 0; i < h.rows; ++i) {
          for (std::size_t j = 0; j < h.cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.9g", h(i, j));
            emb << (j ? "\t" : "") << buf;
          }
          emb << '\n';
          lab << l.graph.labels[i] << '\n';
        }
        table.rows.push_back({l.graph.name, io::to_string(backbone), std::to_string(seed), std::to_string(h.rows),
                              std::to_string(h.cols), fmt(run.test_acc), dir.string()});
      }
    }
  }
  b.tables = {table};
  return b;
}

}  // namespace ledf::exp
