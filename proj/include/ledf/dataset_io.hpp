#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ledf/graph.hpp"

namespace ledf::io {

// On-disk layout of a dataset directory:
//   meta.json           {"name": str, "n": int, "d": int, "c": int}
//   edges.tsv           "src\tdst" per line, 0-indexed, undirected
//   features.tsv        d tab-separated reals per line (dense), or
//   features.sparse.tsv "col:value" tokens per line (zero entries omitted)
//   labels.tsv          one class id per line
//   splits.tsv          one of train|valid|test|none per line

Graph load_dataset(const std::filesystem::path& dir);

enum class FeatureLayout { automatic, dense, sparse };

/// Writes the directory in canonical form so repeated saves are byte-identical.
/// The automatic layout picks the sparse file when under 10% of entries are nonzero.
void save_dataset(const Graph& g, const std::filesystem::path& dir, FeatureLayout layout = FeatureLayout::automatic);

enum class Backbone { mlp, gcn };

std::string to_string(Backbone b);
Backbone parse_backbone(const std::string& s);

struct HyperPreset {
  std::string dataset;
  Backbone backbone = Backbone::gcn;
  int k = 2;
  int q1 = 1;
  int q2 = 1;
  double gamma = 0.5;
  int fusion_depth = 3;  // K
  double lr = 0.01;
  double weight_decay = 5e-4;
  double dropout = 0.5;
  int hidden = 128;
  double epsilon = 0.1;
};

/// Looks up the published per-dataset settings. Dataset names are matched
/// case-insensitively; "Coauthor-CS" and "CS" are the same entry.
HyperPreset preset(const std::string& dataset, Backbone backbone);

/// Every (dataset, backbone) pair known to the registry.
std::vector<std::pair<std::string, Backbone>> known_presets();

/// Split sizes (train, valid, test) of the published fixed divisions.
struct SplitSizes {
  std::size_t train, valid, test;
};
SplitSizes published_split_sizes(const std::string& dataset);

/// Assigns a stratified split of the given sizes with a fixed seed; used when a
/// dataset ships without split files.
void assign_stratified_split(Graph& g, SplitSizes sizes, std::uint64_t seed);

}  // namespace ledf::io
