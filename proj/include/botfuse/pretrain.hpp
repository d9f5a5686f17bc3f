#pragma once

// Topology-only pretraining of the GCN on balanced labeled graphs, with
// Adam, graph-level validation split and early stopping.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "botfuse/error.hpp"
#include "botfuse/gcn.hpp"
#include "botfuse/graph.hpp"
#include "botfuse/rng.hpp"

namespace botfuse {

struct TrainConfig {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_epochs = 500;
  int patience = 10;
  double validation_fraction = 0.2;
  // Background nodes sampled into the loss mask per positive node.
  double balance_ratio = 1.0;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  std::uint64_t seed = 0;
};

struct EpochReport {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct PretrainResult {
  GcnModel model;  // best-validation checkpoint, frozen
  std::vector<EpochReport> history;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
};

inline nlohmann::json to_json(const EpochReport& e) {
  return {{"epoch", e.epoch}, {"loss", e.loss}, {"train_acc", e.train_accuracy}, {"val_acc", e.val_accuracy}};
}

/// First-moment/second-moment state for one parameter tensor.
struct AdamSlot {
  Matrix m, v;
};

class Adam {
 public:
  explicit Adam(const TrainConfig& c) : cfg_(c) {}

  void step(GcnModel& model, const Gradients& g) {
    ++t_;
    if (slots_.empty()) {
      for (const auto& w : model.weights) slots_.push_back({Matrix::Zero(w.rows(), w.cols()), Matrix::Zero(w.rows(), w.cols())});
      for (const auto& b : model.biases) slots_.push_back({Matrix::Zero(b.size(), 1), Matrix::Zero(b.size(), 1)});
      slots_.push_back({Matrix::Zero(model.head.rows(), model.head.cols()), Matrix::Zero(model.head.rows(), model.head.cols())});
      slots_.push_back({Matrix::Zero(model.head_bias.size(), 1), Matrix::Zero(model.head_bias.size(), 1)});
    }
    const std::size_t depth = model.weights.size();
    for (std::size_t k = 0; k < depth; ++k) update(model.weights[k], g.weights[k], slots_[k]);
    if (model.config.layer_bias) {
      for (std::size_t k = 0; k < depth; ++k) {
        Matrix b = model.biases[k];
        update(b, Matrix(g.biases[k]), slots_[depth + k]);
        model.biases[k] = b;
      }
    }
    update(model.head, g.head, slots_[2 * depth]);
    Matrix bias = model.head_bias;
    update(bias, Matrix(g.head_bias), slots_.back());
    model.head_bias = bias;
  }

 private:
  void update(Matrix& param, const Matrix& grad, AdamSlot& s) {
    s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * grad;
    s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    param.array() -= cfg_.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + cfg_.eps);
  }

  TrainConfig cfg_;
  std::vector<AdamSlot> slots_;
  int t_ = 0;
};

inline double gradient_norm(const Gradients& g) {
  double sq = g.head.squaredNorm() + g.head_bias.squaredNorm();
  for (const auto& w : g.weights) sq += w.squaredNorm();
  for (const auto& b : g.biases) sq += b.squaredNorm();
  return std::sqrt(sq);
}

inline void clip_gradients(Gradients& g, double max_norm) {
  const double norm = gradient_norm(g);
  if (!(norm > max_norm)) return;
  const double s = max_norm / norm;
  g.head *= s;
  g.head_bias *= s;
  for (auto& w : g.weights) w *= s;
  for (auto& b : g.biases) b *= s;
}

namespace detail {

struct PreparedGraph {
  PropagationMatrix prop;
  Matrix ones;
  std::vector<int> labels;
  std::vector<std::uint32_t> positives;
  std::vector<std::uint32_t> negatives;
};

inline PreparedGraph prepare(const CommGraph& g, const PropagationOptions& opts, int input_dim) {
  if (!g.labeled()) throw Error(ErrorCode::MissingLabels, "pretraining graph has no node labels");
  PreparedGraph p;
  p.prop = propagation_matrix(g, opts);
  p.ones = Matrix::Ones(static_cast<Eigen::Index>(g.size()), input_dim);
  p.labels.assign(g.size(), 0);
  for (std::uint32_t i = 0; i < g.size(); ++i) {
    if (g.labels[i] == Label::BOT) {
      p.labels[i] = 1;
      p.positives.push_back(i);
    } else if (g.labels[i] == Label::LEGIT) {
      p.negatives.push_back(i);
    }
  }
  return p;
}

/// All positives plus `ratio` sampled negatives per positive (all negatives
/// when there are fewer).
inline std::vector<std::uint8_t> balanced_mask(const PreparedGraph& p, double ratio, Rng& rng) {
  std::vector<std::uint8_t> mask(p.labels.size(), 0);
  for (auto i : p.positives) mask[i] = 1;
  std::vector<std::uint32_t> neg = p.negatives;
  const auto want = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(p.positives.size())));
  if (p.positives.empty() || want >= neg.size()) {
    for (auto i : neg) mask[i] = 1;
    return mask;
  }
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < want; ++i) {
    std::swap(neg[i], neg[i + rng.below(neg.size() - i)]);
    mask[neg[i]] = 1;
  }
  return mask;
}

inline std::pair<std::size_t, std::size_t> masked_hits(const Matrix& logits, const std::vector<int>& labels,
                                                       const std::vector<std::uint8_t>& mask) {
  std::size_t hit = 0, total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int pred = logits(i, 1) > logits(i, 0) ? 1 : 0;
    hit += pred == labels[static_cast<std::size_t>(i)];
    ++total;
  }
  return {hit, total};
}

}  // namespace detail

/// Trains on all-ones node features, so only topology drives the weights.
/// Returns the frozen checkpoint with the highest validation accuracy (the
/// earliest one on ties). `on_epoch` sees every epoch report as it lands.
inline PretrainResult pretrain_gcn(const std::vector<CommGraph>& dataset, const GcnConfig& model_config,
                                   const TrainConfig& config,
                                   const std::function<void(const EpochReport&)>& on_epoch = {}) {
  if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "validation fraction must lie in (0, 1)");
  }
  if (dataset.size() < 2) throw Error(ErrorCode::TooFewSamples, "need at least two graphs for a graph-level split");
  if (config.max_epochs < 1 || config.patience < 0) throw Error(ErrorCode::InvalidArgument, "invalid epoch limits");

  const PropagationOptions opts{model_config.self_loops};
  std::vector<detail::PreparedGraph> graphs;
  graphs.reserve(dataset.size());
  std::size_t pos = 0, neg = 0;
  for (const auto& g : dataset) {
    graphs.push_back(detail::prepare(g, opts, model_config.input_dim));
    pos += graphs.back().positives.size();
    neg += graphs.back().negatives.size();
  }
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "pretraining data contains a single class");

  Rng rng(mix_seed(config.seed, 0x70726574));
  std::vector<std::size_t> order(graphs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(graphs.size()))), 1,
      graphs.size() - 1);
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  std::vector<std::vector<std::uint8_t>> val_masks;
  for (auto i : val_idx) val_masks.push_back(detail::balanced_mask(graphs[i], config.balance_ratio, rng));

  PretrainResult result;
  GcnModel model = init_model(model_config);
  Adam adam(config);
  int since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double loss_sum = 0.0;
    std::size_t train_hit = 0, train_total = 0;
    for (auto i : train_idx) {
      const auto& pg = graphs[i];
      const auto mask = detail::balanced_mask(pg, config.balance_ratio, rng);
      if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) continue;
      Matrix logits;
      Gradients grads = backward(model, pg.prop, pg.ones, pg.labels, mask, &logits);
      if (!std::isfinite(grads.loss)) {
        throw Error(ErrorCode::Divergence, "non-finite loss at epoch " + std::to_string(epoch));
      }
      loss_sum += grads.loss;
      if (config.clip_norm > 0.0) clip_gradients(grads, config.clip_norm);
      const auto [h, t] = detail::masked_hits(logits, pg.labels, mask);
      adam.step(model, grads);
      train_hit += h;
      train_total += t;
    }

    std::size_t val_hit = 0, val_total = 0;
    for (std::size_t v = 0; v < val_idx.size(); ++v) {
      const auto& pg = graphs[val_idx[v]];
      const Matrix logits = forward(model, pg.prop, pg.ones, true);
      if (!logits.allFinite()) throw Error(ErrorCode::Divergence, "non-finite logits at epoch " + std::to_string(epoch));
      const auto [h, t] = detail::masked_hits(logits, pg.labels, val_masks[v]);
      val_hit += h;
      val_total += t;
    }

    EpochReport rep;
    rep.epoch = epoch;
    rep.loss = train_idx.empty() ? 0.0 : loss_sum / static_cast<double>(train_idx.size());
    rep.train_accuracy = train_total ? static_cast<double>(train_hit) / static_cast<double>(train_total) : 0.0;
    rep.val_accuracy = val_total ? static_cast<double>(val_hit) / static_cast<double>(val_total) : 0.0;
    result.history.push_back(rep);
    if (on_epoch) on_epoch(rep);

    if (result.best_epoch < 0 || rep.val_accuracy > result.best_val_accuracy) {
      result.best_epoch = epoch;
      result.best_val_accuracy = rep.val_accuracy;
      result.model = model;
      since_best = 0;
    } else if (++since_best > config.patience) {
      break;
    }
  }
  result.model.frozen = true;
  return result;
}

/// Reads one interchange file, or every *.json file of a directory in
/// lexicographic order. Features are reset to all ones.
inline std::vector<CommGraph> load_graph_dataset(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw Error(ErrorCode::FileNotFound, path.string());
  }
  std::vector<CommGraph> out;
  for (const auto& f : files) {
    CommGraph g = read_graph_file(f);
    if (!g.labeled()) throw Error(ErrorCode::MissingLabels, f.string() + " has no node labels");
    g.features = Matrix::Ones(static_cast<Eigen::Index>(g.size()), kFlowFeatureDim);
    out.push_back(std::move(g));
  }
  if (out.empty()) throw Error(ErrorCode::SchemaViolation, "no graph files under " + path.string());
  return out;
}

}  // namespace botfuse
