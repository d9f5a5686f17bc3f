#pragma once

// Window -> flow features -> graph -> frozen GCN -> normalization ->
// Extra-Trees, for training and detection.

#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "botfuse/error.hpp"
#include "botfuse/extra_trees.hpp"
#include "botfuse/features.hpp"
#include "botfuse/flow.hpp"
#include "botfuse/gcn.hpp"
#include "botfuse/graph.hpp"
#include "botfuse/normalize.hpp"

namespace botfuse {

/// What the classifier sees for each node.
enum class FeatureSource : std::uint8_t {
  Fused,         // GCN over flow features (the detector proper)
  TopologyOnly,  // GCN over all-ones input
  FlowOnly,      // the five raw flow features, no GCN
};

/// Rescaling of the raw flow features before they enter the GCN.
enum class InputScaling : std::uint8_t {
  None,
  Log1p,     // log1p per value
  Log1pMax,  // log1p, then each column divided by its maximum in the window
};

inline const char* to_string(InputScaling s) {
  switch (s) {
    case InputScaling::None: return "none";
    case InputScaling::Log1p: return "log1p";
    default: return "log1p_max";
  }
}

inline InputScaling parse_input_scaling(std::string_view name) {
  if (name == "none") return InputScaling::None;
  if (name == "log1p") return InputScaling::Log1p;
  if (name == "log1p_max") return InputScaling::Log1pMax;
  throw Error(ErrorCode::InvalidArgument, "unknown input scaling '" + std::string(name) + "'");
}

inline FeatureSource parse_feature_source(std::string_view name) {
  if (name == "fused") return FeatureSource::Fused;
  if (name == "topology") return FeatureSource::TopologyOnly;
  if (name == "flow") return FeatureSource::FlowOnly;
  throw Error(ErrorCode::InvalidArgument, "unknown feature source '" + std::string(name) + "'");
}

/// Applies the scaling in place. Columns that are all zero stay zero.
inline void scale_inputs(Matrix& x, InputScaling mode) {
  if (mode == InputScaling::None) return;
  x = x.array().log1p().matrix();
  if (mode != InputScaling::Log1pMax) return;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mx = x.rows() > 0 ? x.col(c).maxCoeff() : 0.0;
    if (mx > 0) x.col(c) /= mx;
  }
}

inline const char* to_string(FeatureSource s) {
  switch (s) {
    case FeatureSource::Fused: return "fused";
    case FeatureSource::TopologyOnly: return "topology";
    default: return "flow";
  }
}

struct PipelineConfig {
  Architecture architecture = Architecture::C2;
  std::optional<int> depth_override;  // otherwise 12 for C2, 24 for P2P
  double window_len = 60.0;
  double stride = 10.0;
  NormalizationMode normalization = NormalizationMode::PerVector;
  FeatureSource source = FeatureSource::Fused;
  // Byte counts otherwise swamp the connection counts by four orders of
  // magnitude, and the model was pretrained on unit-scale input.
  InputScaling input_scaling = InputScaling::Log1pMax;
  double threshold = 0.5;
  unsigned n_threads = 1;

  int expected_depth() const { return depth_override.value_or(default_depth(architecture)); }

  static PipelineConfig for_architecture(Architecture a) {
    PipelineConfig c;
    c.architecture = a;
    return c;
  }
};

/// Rejects models that were pretrained for another architecture or depth, or
/// that are still trainable.
inline void check_model(const GcnModel& model, const PipelineConfig& config) {
  if (!model.frozen) throw Error(ErrorCode::ConfigMismatch, "detection requires a frozen model");
  if (model.config.architecture != config.architecture) {
    throw Error(ErrorCode::ConfigMismatch, std::string("model was pretrained for ") +
                                               to_string(model.config.architecture) + ", pipeline expects " +
                                               to_string(config.architecture));
  }
  if (model.depth() != config.expected_depth()) {
    throw Error(ErrorCode::ConfigMismatch, "model depth " + std::to_string(model.depth()) + " != expected " +
                                               std::to_string(config.expected_depth()));
  }
  if (model.config.input_dim != static_cast<int>(kFlowFeatureDim)) {
    throw Error(ErrorCode::ConfigMismatch, "model input width must be 5");
  }
}

struct StageTimings {
  double features = 0, graph = 0, propagation = 0, embedding = 0, normalization = 0, classification = 0;
  double total = 0;

  double stage_sum() const { return features + graph + propagation + embedding + normalization + classification; }
};

/// One window carried through the feature stages.
struct EmbeddedWindow {
  double window_start = 0;
  CommGraph graph;
  Matrix embedding;   // raw model output (or flow features for FlowOnly)
  Matrix normalized;  // classifier input
  StageTimings timings;
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : last_(std::chrono::steady_clock::now()), first_(last_) {}
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }
  double elapsed() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - first_).count(); }

 private:
  std::chrono::steady_clock::time_point last_, first_;
};

}  // namespace detail

inline Matrix embed_graph(const CommGraph& g, const PropagationMatrix& p, const GcnModel& model, FeatureSource source) {
  switch (source) {
    case FeatureSource::FlowOnly: return g.features;
    case FeatureSource::TopologyOnly:
      return forward(model, p, Matrix::Ones(g.features.rows(), model.config.input_dim), false);
    default: return forward(model, p, g.features, false);
  }
}

/// Runs every stage up to (not including) classification.
inline EmbeddedWindow process_window(const WindowSlice& window, const GcnModel& model, const PipelineConfig& config) {
  detail::Stopwatch sw;
  EmbeddedWindow out;
  out.window_start = window.window_start;
  const FeatureMap features = extract_node_features(window);
  out.timings.features = sw.lap();
  out.graph = build_graph(window, features);
  scale_inputs(out.graph.features, config.input_scaling);
  out.timings.graph = sw.lap();
  const PropagationMatrix p = propagation_matrix(out.graph, model.propagation_options());
  out.timings.propagation = sw.lap();
  out.embedding = embed_graph(out.graph, p, model, config.source);
  out.timings.embedding = sw.lap();
  // Raw flow features feed the trees directly; only learned embeddings are rescaled.
  out.normalized = config.source == FeatureSource::FlowOnly ? out.embedding
                                                             : normalize_rows(out.embedding, config.normalization);
  out.timings.normalization = sw.lap();
  out.timings.total = sw.elapsed();
  return out;
}

/// Final hidden activations for every node of the window. With log1p_max the
/// column maxima are window-wide, so a node's row can depend on nodes outside
/// its component; the other scalings act per value.
inline Matrix embed_window(const WindowSlice& window, const GcnModel& model,
                           InputScaling scaling = InputScaling::Log1pMax) {
  if (!model.frozen) throw Error(ErrorCode::ConfigMismatch, "embedding requires a frozen model");
  const FeatureMap features = extract_node_features(window);
  CommGraph g = build_graph(window, features);
  scale_inputs(g.features, scaling);
  return forward(model, propagation_matrix(g, model.propagation_options()), g.features, false);
}

/// Windows processed in order; with n_threads > 1 they are striped over
/// workers and written back by index.
inline std::vector<EmbeddedWindow> process_windows(const std::vector<WindowSlice>& windows, const GcnModel& model,
                                                   const PipelineConfig& config) {
  check_model(model, config);
  std::vector<EmbeddedWindow> out(windows.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(config.n_threads, static_cast<unsigned>(windows.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < windows.size(); ++i) out[i] = process_window(windows[i], model, config);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < windows.size(); i += threads) out[i] = process_window(windows[i], model, config);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

/// Labeled nodes pooled across windows: classifier rows, 0/1 labels and the
/// index of the window each row came from.
struct LabeledSamples {
  Matrix x;
  std::vector<int> y;
  std::vector<int> window;
  std::vector<std::string> node_ids;
};

inline LabeledSamples pool_labeled(const std::vector<EmbeddedWindow>& windows) {
  std::size_t count = 0;
  Eigen::Index width = 0;
  for (const auto& w : windows) {
    width = std::max(width, w.normalized.cols());
    for (auto l : w.graph.labels) count += l != Label::UNKNOWN;
  }
  LabeledSamples s;
  s.x.resize(static_cast<Eigen::Index>(count), width);
  Eigen::Index row = 0;
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const auto& w = windows[wi];
    for (std::size_t i = 0; i < w.graph.labels.size(); ++i) {
      const Label l = w.graph.labels[i];
      if (l == Label::UNKNOWN) continue;
      s.x.row(row++) = w.normalized.row(static_cast<Eigen::Index>(i));
      s.y.push_back(l == Label::BOT ? 1 : 0);
      s.window.push_back(static_cast<int>(wi));
      s.node_ids.push_back(w.graph.nodes[i]);
    }
  }
  return s;
}

/// Fits Extra-Trees on the normalized embeddings of every labeled node.
inline TreeEnsemble train_detector(const std::vector<EmbeddedWindow>& windows, const ExtraTreesParams& params) {
  const LabeledSamples s = pool_labeled(windows);
  if (s.y.empty()) throw Error(ErrorCode::SingleClass, "no labeled nodes in the training windows");
  return fit_extra_trees(s.x, s.y, params);
}

inline TreeEnsemble train_detector(const std::vector<WindowSlice>& windows, const GcnModel& model,
                                   const PipelineConfig& config, const ExtraTreesParams& params) {
  return train_detector(process_windows(windows, model, config), params);
}

struct NodeVerdict {
  std::string node_id;
  double probability = 0;
  bool bot = false;
  Label truth = Label::UNKNOWN;
};

struct WindowReport {
  double window_start = 0;
  std::vector<NodeVerdict> nodes;
  std::size_t flagged = 0;
  StageTimings timings;
};

struct DetectionReport {
  std::vector<WindowReport> windows;
};

inline DetectionReport detect(const std::vector<WindowSlice>& windows, const GcnModel& model,
                              const TreeEnsemble& ensemble, const PipelineConfig& config) {
  if (windows.empty()) throw Error(ErrorCode::EmptyWindow, "no windows to analyze");
  check_model(model, config);
  const int width = config.source == FeatureSource::FlowOnly ? static_cast<int>(kFlowFeatureDim) : model.hidden_dim();
  if (ensemble.n_features != width) {
    throw Error(ErrorCode::ConfigMismatch, "ensemble expects " + std::to_string(ensemble.n_features) +
                                               " features, pipeline produces " + std::to_string(width));
  }
  std::vector<EmbeddedWindow> processed = process_windows(windows, model, config);
  DetectionReport report;
  for (auto& w : processed) {
    detail::Stopwatch sw;
    const auto proba = predict_proba(ensemble, w.normalized);
    WindowReport wr;
    wr.window_start = w.window_start;
    for (std::size_t i = 0; i < proba.size(); ++i) {
      NodeVerdict v;
      v.node_id = w.graph.nodes[i];
      v.probability = proba[i];
      v.bot = proba[i] >= config.threshold;
      v.truth = w.graph.labeled() ? w.graph.labels[i] : Label::UNKNOWN;
      wr.flagged += v.bot;
      wr.nodes.push_back(std::move(v));
    }
    wr.timings = w.timings;
    wr.timings.classification = sw.lap();
    wr.timings.total += sw.elapsed();
    report.windows.push_back(std::move(wr));
  }
  return report;
}

inline nlohmann::json to_json(const WindowReport& w, bool include_timing = true) {
  nlohmann::json j;
  j["window_start"] = w.window_start;
  auto nodes = nlohmann::json::array();
  for (const auto& v : w.nodes) {
    nlohmann::json n = {{"node_id", v.node_id}, {"bot_probability", v.probability}, {"verdict", v.bot ? "bot" : "legit"}};
    if (v.truth != Label::UNKNOWN) n["label"] = to_string(v.truth);
    nodes.push_back(std::move(n));
  }
  j["nodes"] = std::move(nodes);
  j["summary"] = {{"nodes", w.nodes.size()}, {"flagged", w.flagged}, {"clean", w.nodes.size() - w.flagged}};
  if (include_timing) {
    const auto& t = w.timings;
    j["timing_s"] = {{"features", t.features},           {"graph", t.graph},
                     {"propagation", t.propagation},     {"embedding", t.embedding},
                     {"normalization", t.normalization}, {"classification", t.classification},
                     {"total", t.total}};
  }
  return j;
}

/// JSON lines, one object per window. Timings are wall-clock and therefore
/// excluded when a reproducible byte stream is wanted.
inline void write_report(std::ostream& out, const DetectionReport& r, bool include_timing = true) {
  for (const auto& w : r.windows) out << to_json(w, include_timing).dump() << '\n';
}

}  // namespace botfuse
