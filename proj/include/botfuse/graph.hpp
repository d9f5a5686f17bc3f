#pragma once

// Per-window communication graph and its normalized propagation matrix.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "botfuse/error.hpp"
#include "botfuse/features.hpp"
#include "botfuse/flow.hpp"

namespace botfuse {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Architecture : std::uint8_t { C2 = 0, P2P = 1 };

inline const char* to_string(Architecture a) { return a == Architecture::C2 ? "c2" : "p2p"; }

inline Architecture parse_architecture(std::string_view s) {
  const std::string l = detail::lower(s);
  if (l == "c2") return Architecture::C2;
  if (l == "p2p") return Architecture::P2P;
  throw Error(ErrorCode::InvalidArgument, "unknown architecture '" + std::string(s) + "'");
}

/// Depth chosen per botnet architecture: star-shaped C2 needs fewer hops than
/// a P2P mesh.
inline int default_depth(Architecture a) { return a == Architecture::C2 ? 12 : 24; }

using Edge = std::pair<std::uint32_t, std::uint32_t>;

struct CommGraph {
  std::vector<std::string> nodes;   // index = matrix row, lexicographic when built from flows
  std::vector<Edge> edges;          // directed, sorted, deduplicated, no self-loops
  Matrix features;                  // n x 5, row i belongs to nodes[i]
  std::vector<Label> labels;        // empty, or one per node
  std::optional<Architecture> architecture;
  std::size_t dropped_self_flows = 0;

  std::size_t size() const { return nodes.size(); }
  bool labeled() const { return labels.size() == nodes.size() && !nodes.empty(); }
};

namespace detail {

inline void normalize_edges(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

}  // namespace detail

/// Node labels derived from flow labels: a node is BOT when it originates a
/// BOT flow, LEGIT when it takes part in any labeled flow otherwise.
inline std::vector<Label> derive_node_labels(const std::vector<std::string>& nodes,
                                             const std::vector<FlowRecord>& records) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index.emplace(nodes[i], i);
  std::vector<Label> labels(nodes.size(), Label::UNKNOWN);
  auto mark = [&](const std::string& id, Label l) {
    auto it = index.find(id);
    if (it == index.end()) return;
    Label& cur = labels[it->second];
    if (l == Label::BOT || cur == Label::UNKNOWN) cur = l;
  };
  for (const auto& r : records) {
    if (r.label == Label::UNKNOWN) continue;
    mark(r.src_ip, r.label);
    mark(r.dst_ip, Label::LEGIT);
  }
  return labels;
}

/// Builds the directed graph of one window. Edge rules: src -> dst when the
/// source sent bytes, dst -> src when the destination sent bytes.
inline CommGraph build_graph(const std::vector<FlowRecord>& records, const FeatureMap& features) {
  CommGraph g;
  std::vector<const FlowRecord*> kept;
  kept.reserve(records.size());
  for (const auto& r : records) {
    if (r.src_ip == r.dst_ip) {
      ++g.dropped_self_flows;
      continue;
    }
    kept.push_back(&r);
    g.nodes.push_back(r.src_ip);
    g.nodes.push_back(r.dst_ip);
  }
  std::sort(g.nodes.begin(), g.nodes.end());
  g.nodes.erase(std::unique(g.nodes.begin(), g.nodes.end()), g.nodes.end());

  std::unordered_map<std::string, std::uint32_t> index;
  index.reserve(g.nodes.size());
  g.features.resize(static_cast<Eigen::Index>(g.nodes.size()), kFlowFeatureDim);
  for (std::uint32_t i = 0; i < g.nodes.size(); ++i) {
    index.emplace(g.nodes[i], i);
    auto it = features.find(g.nodes[i]);
    if (it == features.end()) throw Error(ErrorCode::MissingFeatures, "no flow features for node " + g.nodes[i]);
    const auto row = it->second.as_array();
    for (std::size_t c = 0; c < kFlowFeatureDim; ++c) g.features(i, static_cast<Eigen::Index>(c)) = row[c];
  }

  bool any_label = false;
  for (const auto* r : kept) {
    const auto s = index.at(r->src_ip);
    const auto d = index.at(r->dst_ip);
    if (r->src_bytes != 0) g.edges.emplace_back(s, d);
    if (r->dst_bytes != 0) g.edges.emplace_back(d, s);
    any_label = any_label || r->label != Label::UNKNOWN;
  }
  detail::normalize_edges(g.edges);
  if (any_label) {
    std::vector<FlowRecord> kept_records;
    kept_records.reserve(kept.size());
    for (const auto* r : kept) kept_records.push_back(*r);
    g.labels = derive_node_labels(g.nodes, kept_records);
  }
  return g;
}

inline CommGraph build_graph(const WindowSlice& window, const FeatureMap& features) {
  return build_graph(window.records, features);
}

struct PropagationOptions {
  bool add_self_loops = false;  // A + I variant; off reproduces D^-1/2 A D^-1/2 literally
};

/// Symmetric normalized adjacency P = D^-1/2 A D^-1/2 over the symmetrized
/// graph. Isolated nodes have all-zero rows and columns.
struct PropagationMatrix {
  SparseMatrix matrix;
  Vector degree;

  Eigen::Index size() const { return matrix.rows(); }
};

inline PropagationMatrix propagation_matrix(std::size_t n, const std::vector<Edge>& directed_edges,
                                            const PropagationOptions& opts = {}) {
  std::vector<Edge> sym;
  sym.reserve(directed_edges.size() * 2 + (opts.add_self_loops ? n : 0));
  for (auto [u, v] : directed_edges) {
    if (u >= n || v >= n) throw Error(ErrorCode::DimensionMismatch, "edge endpoint out of range");
    if (u == v) continue;
    sym.emplace_back(u, v);
    sym.emplace_back(v, u);
  }
  if (opts.add_self_loops) {
    for (std::uint32_t i = 0; i < n; ++i) sym.emplace_back(i, i);
  }
  detail::normalize_edges(sym);

  PropagationMatrix p;
  const auto nn = static_cast<Eigen::Index>(n);
  p.degree = Vector::Zero(nn);
  for (auto [u, v] : sym) p.degree[u] += 1.0;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(sym.size());
  for (auto [u, v] : sym) {
    triplets.emplace_back(u, v, 1.0 / std::sqrt(p.degree[u] * p.degree[v]));
  }
  p.matrix.resize(nn, nn);
  p.matrix.setFromTriplets(triplets.begin(), triplets.end());
  p.matrix.makeCompressed();
  return p;
}

inline PropagationMatrix propagation_matrix(const CommGraph& g, const PropagationOptions& opts = {}) {
  return propagation_matrix(g.size(), g.edges, opts);
}

// ---------------------------------------------------------------------------
// Graph interchange format (JSON).
//
//   {"format": "botfuse-graph", "version": 1, "n": 3,
//    "architecture": "c2",               optional
//    "node_ids": ["a", "b", "c"],        optional, defaults to "0".."n-1"
//    "edges": [[0, 1], [1, 0]],          directed
//    "labels": [1, 0, 0],                optional; 1/0 or "bot"/"legit"/"unknown"
//    "features": [[...5 values...], ...] optional, n rows}

inline constexpr int kGraphFormatVersion = 1;

inline nlohmann::json graph_to_json(const CommGraph& g, bool include_features = true) {
  nlohmann::json j;
  j["format"] = "botfuse-graph";
  j["version"] = kGraphFormatVersion;
  j["n"] = g.size();
  if (g.architecture) j["architecture"] = to_string(*g.architecture);
  j["node_ids"] = g.nodes;
  auto edges = nlohmann::json::array();
  for (auto [u, v] : g.edges) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  if (g.labeled()) {
    auto labels = nlohmann::json::array();
    for (auto l : g.labels) {
      if (l == Label::UNKNOWN) labels.push_back("unknown");
      else labels.push_back(l == Label::BOT ? 1 : 0);
    }
    j["labels"] = std::move(labels);
  }
  if (include_features && g.features.rows() == static_cast<Eigen::Index>(g.size())) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < g.features.rows(); ++i) {
      auto row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < g.features.cols(); ++c) row.push_back(g.features(i, c));
      rows.push_back(std::move(row));
    }
    j["features"] = std::move(rows);
  }
  return j;
}

inline CommGraph graph_from_json(const nlohmann::json& j) {
  // JSON built in code stores small literals as signed integers.
  auto is_index = [](const nlohmann::json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; };
  auto fail = [](const std::string& what) { throw Error(ErrorCode::SchemaViolation, what); };
  if (!j.is_object()) fail("graph must be a JSON object");
  if (j.contains("version") && j["version"] != kGraphFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported graph format version");
  }
  if (!j.contains("n") || !is_index(j["n"])) fail("missing or invalid 'n'");
  const std::size_t n = j["n"].get<std::size_t>();

  CommGraph g;
  if (j.contains("node_ids")) {
    const auto& ids = j["node_ids"];
    if (!ids.is_array() || ids.size() != n) fail("'node_ids' must have n entries");
    for (const auto& id : ids) {
      if (!id.is_string()) fail("node ids must be strings");
      g.nodes.push_back(id.get<std::string>());
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) g.nodes.push_back(std::to_string(i));
  }

  if (!j.contains("edges") || !j["edges"].is_array()) fail("missing 'edges'");
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 2 || !is_index(e[0]) || !is_index(e[1])) {
      fail("edges must be [src, dst] index pairs");
    }
    const auto u = e[0].get<std::uint64_t>(), v = e[1].get<std::uint64_t>();
    if (u >= n || v >= n) fail("edge endpoint out of range");
    if (u == v) continue;
    g.edges.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
  }
  detail::normalize_edges(g.edges);

  if (j.contains("labels")) {
    const auto& labels = j["labels"];
    if (!labels.is_array() || labels.size() != n) fail("'labels' must have n entries");
    for (const auto& l : labels) {
      if (l.is_number_integer()) {
        const auto v = l.get<int>();
        if (v != 0 && v != 1) fail("numeric labels must be 0 or 1");
        g.labels.push_back(v == 1 ? Label::BOT : Label::LEGIT);
      } else if (l.is_boolean()) {
        g.labels.push_back(l.get<bool>() ? Label::BOT : Label::LEGIT);
      } else if (l.is_string()) {
        const std::string s = detail::lower(l.get<std::string>());
        if (s == "bot") g.labels.push_back(Label::BOT);
        else if (s == "legit") g.labels.push_back(Label::LEGIT);
        else if (s == "unknown") g.labels.push_back(Label::UNKNOWN);
        else fail("unknown label '" + s + "'");
      } else {
        fail("invalid label entry");
      }
    }
  }

  g.features = Matrix::Ones(static_cast<Eigen::Index>(n), kFlowFeatureDim);
  if (j.contains("features")) {
    const auto& rows = j["features"];
    if (!rows.is_array() || rows.size() != n) fail("'features' must have n rows");
    for (std::size_t i = 0; i < n; ++i) {
      if (!rows[i].is_array() || rows[i].size() != kFlowFeatureDim) fail("feature rows must have 5 values");
      for (std::size_t c = 0; c < kFlowFeatureDim; ++c) {
        if (!rows[i][c].is_number()) fail("feature values must be numbers");
        g.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c].get<double>();
      }
    }
  }

  if (j.contains("architecture")) {
    if (!j["architecture"].is_string()) fail("'architecture' must be a string");
    g.architecture = parse_architecture(j["architecture"].get<std::string>());
  }
  return g;
}

inline void write_graph_file(const std::filesystem::path& path, const CommGraph& g, bool include_features = true) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << graph_to_json(g, include_features).dump() << '\n';
}

inline CommGraph read_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
  }
  return graph_from_json(j);
}

}  // namespace botfuse
