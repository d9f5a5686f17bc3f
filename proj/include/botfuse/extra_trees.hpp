#pragma once

// Extremely randomized trees (Geurts, Ernst & Wehenkel 2006) for binary
// node classification. Trees are grown on the full sample; each split draws
// k attributes and one uniform cut-point per attribute, keeping the draw with
// the highest information gain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <thread>
#include <vector>

#include "botfuse/error.hpp"
#include "botfuse/graph.hpp"
#include "botfuse/rng.hpp"
#include "botfuse/serialize.hpp"

namespace botfuse {

struct ExtraTreesParams {
  int n_trees = 100;
  int k_features = 0;  // 0 -> ceil(sqrt(d))
  int min_samples_split = 2;
  std::uint64_t seed = 0;
  unsigned n_threads = 0;  // 0 -> hardware concurrency
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // x < threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::uint32_t count_legit = 0;  // leaf class counts
  std::uint32_t count_bot = 0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(const double* row) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(row[n.feature] < n.threshold ? n.left : n.right);
    }
    return nodes[i];
  }

  double proba(const double* row) const {
    const auto& leaf = leaf_for(row);
    const double total = static_cast<double>(leaf.count_legit) + leaf.count_bot;
    return total > 0 ? leaf.count_bot / total : 0.0;
  }

  bool operator==(const DecisionTree&) const = default;
};

struct TreeEnsemble {
  ExtraTreesParams params;
  int n_features = 0;
  std::vector<DecisionTree> trees;

  bool operator==(const TreeEnsemble& o) const {
    return n_features == o.n_features && trees == o.trees && params.n_trees == o.params.n_trees &&
           params.k_features == o.params.k_features && params.min_samples_split == o.params.min_samples_split &&
           params.seed == o.params.seed;
  }
};

namespace detail {

inline double entropy(double c0, double c1) {
  const double n = c0 + c1;
  if (n <= 0) return 0.0;
  double h = 0.0;
  if (c0 > 0) h -= c0 / n * std::log2(c0 / n);
  if (c1 > 0) h -= c1 / n * std::log2(c1 / n);
  return h;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<int>& y, const ExtraTreesParams& p, int k, std::uint64_t seed)
      : x_(x), y_(y), params_(p), k_(k), rng_(seed) {}

  DecisionTree build() {
    std::vector<std::uint32_t> idx(static_cast<std::size_t>(x_.rows()));
    for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
    tree_.nodes.emplace_back();
    // Explicit stack; deep trees on skewed data would blow the call stack.
    struct Task {
      std::size_t node;
      std::vector<std::uint32_t> samples;
    };
    std::vector<Task> stack;
    stack.push_back({0, std::move(idx)});
    while (!stack.empty()) {
      Task t = std::move(stack.back());
      stack.pop_back();
      split(t.node, std::move(t.samples), stack);
    }
    return std::move(tree_);
  }

 private:
  template <typename Stack>
  void split(std::size_t node, std::vector<std::uint32_t> samples, Stack& stack) {
    std::uint32_t c1 = 0;
    for (auto s : samples) c1 += static_cast<std::uint32_t>(y_[s] == 1);
    const auto c0 = static_cast<std::uint32_t>(samples.size()) - c1;
    auto make_leaf = [&] {
      tree_.nodes[node].count_legit = c0;
      tree_.nodes[node].count_bot = c1;
    };
    if (samples.size() < static_cast<std::size_t>(params_.min_samples_split) || c0 == 0 || c1 == 0) {
      make_leaf();
      return;
    }

    const auto d = x_.cols();
    lo_.assign(static_cast<std::size_t>(d), 0.0);
    hi_.assign(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index f = 0; f < d; ++f) {
      double lo = x_(samples[0], f), hi = lo;
      for (auto s : samples) {
        const double v = x_(s, f);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      lo_[static_cast<std::size_t>(f)] = lo;
      hi_[static_cast<std::size_t>(f)] = hi;
    }
    std::vector<std::int32_t> candidates;
    for (Eigen::Index f = 0; f < d; ++f) {
      // A cut strictly inside (lo, hi) needs a representable value between them.
      const double lo = lo_[static_cast<std::size_t>(f)], hi = hi_[static_cast<std::size_t>(f)];
      if (std::nextafter(lo, hi) < hi) candidates.push_back(static_cast<std::int32_t>(f));
    }
    if (candidates.empty()) {
      make_leaf();
      return;
    }

    const double parent_h = entropy(c0, c1);
    const double n = static_cast<double>(samples.size());
    const auto draws = std::min<std::size_t>(static_cast<std::size_t>(k_), candidates.size());
    std::int32_t best_feature = -1;
    double best_threshold = 0.0, best_gain = -1.0;
    for (std::size_t i = 0; i < draws; ++i) {
      std::swap(candidates[i], candidates[i + rng_.below(candidates.size() - i)]);
      const auto f = candidates[i];
      const double lo = lo_[static_cast<std::size_t>(f)], hi = hi_[static_cast<std::size_t>(f)];
      double cut = rng_.uniform(lo, hi);
      for (int retry = 0; !(cut > lo && cut < hi); ++retry) {
        cut = retry < 64 ? rng_.uniform(lo, hi) : std::nextafter(lo, hi);
      }
      double l0 = 0, l1 = 0;
      for (auto s : samples) {
        if (x_(s, f) < cut) (y_[s] == 1 ? l1 : l0) += 1;
      }
      const double r0 = c0 - l0, r1 = c1 - l1;
      const double gain =
          parent_h - ((l0 + l1) / n) * entropy(l0, l1) - ((r0 + r1) / n) * entropy(r0, r1);
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
        best_threshold = cut;
      }
    }

    std::vector<std::uint32_t> left, right;
    for (auto s : samples) (x_(s, best_feature) < best_threshold ? left : right).push_back(s);
    samples.clear();
    samples.shrink_to_fit();

    const auto left_id = tree_.nodes.size();
    tree_.nodes.emplace_back();
    const auto right_id = tree_.nodes.size();
    tree_.nodes.emplace_back();
    auto& cur = tree_.nodes[node];
    cur.feature = best_feature;
    cur.threshold = best_threshold;
    cur.left = static_cast<std::int32_t>(left_id);
    cur.right = static_cast<std::int32_t>(right_id);
    stack.push_back({right_id, std::move(right)});
    stack.push_back({left_id, std::move(left)});
  }

  const Matrix& x_;
  const std::vector<int>& y_;
  const ExtraTreesParams& params_;
  int k_;
  Rng rng_;
  DecisionTree tree_;
  std::vector<double> lo_, hi_;
};

}  // namespace detail

inline int resolved_k(const ExtraTreesParams& p, Eigen::Index d) {
  if (p.k_features > 0) return static_cast<int>(std::min<Eigen::Index>(p.k_features, d));
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
}

/// Fits the ensemble. Tree i uses seed mix_seed(seed, i), so the result does
/// not depend on the thread count.
inline TreeEnsemble fit_extra_trees(const Matrix& x, const std::vector<int>& y, const ExtraTreesParams& params = {}) {
  if (x.cols() == 0) throw Error(ErrorCode::DimensionMismatch, "feature matrix has no columns");
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw Error(ErrorCode::DimensionMismatch, "one label per row");
  if (x.rows() < 2) throw Error(ErrorCode::TooFewSamples, "need at least two samples");
  if (params.n_trees < 1 || params.min_samples_split < 2) throw Error(ErrorCode::InvalidArgument, "invalid tree params");
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteValue, "non-finite training features");
  bool has0 = false, has1 = false;
  for (int v : y) {
    if (v != 0 && v != 1) throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
    has0 = has0 || v == 0;
    has1 = has1 || v == 1;
  }
  if (!has0 || !has1) throw Error(ErrorCode::SingleClass, "training labels contain a single class");

  TreeEnsemble e;
  e.params = params;
  e.n_features = static_cast<int>(x.cols());
  e.trees.resize(static_cast<std::size_t>(params.n_trees));
  const int k = resolved_k(params, x.cols());

  auto build_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      e.trees[i] = detail::TreeBuilder(x, y, params, k, mix_seed(params.seed, i)).build();
    }
  };
  unsigned threads = params.n_threads ? params.n_threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(params.n_trees));
  if (threads <= 1) {
    build_range(0, e.trees.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (e.trees.size() + threads - 1) / threads;
    for (std::size_t b = 0; b < e.trees.size(); b += chunk) {
      pool.emplace_back(build_range, b, std::min(b + chunk, e.trees.size()));
    }
  }
  return e;
}

/// Mean over trees of the BOT frequency in the reached leaf.
inline std::vector<double> predict_proba(const TreeEnsemble& e, const Matrix& x) {
  if (x.cols() != e.n_features) throw Error(ErrorCode::DimensionMismatch, "feature width differs from the ensemble");
  std::vector<double> out(static_cast<std::size_t>(x.rows()), 0.0);
  if (e.trees.empty()) return out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* row = x.row(i).data();
    double sum = 0.0;
    for (const auto& t : e.trees) sum += t.proba(row);
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(e.trees.size());
  }
  return out;
}

inline std::vector<int> predict(const TreeEnsemble& e, const Matrix& x, double threshold = 0.5) {
  const auto p = predict_proba(e, x);
  std::vector<int> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] >= threshold ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble file: "BFXTR001", u32 version, u32 n_features, u32 n_trees,
// u32 k_features, u32 min_samples_split, u64 seed, then per tree u32 node
// count and nodes (i32 feature, f64 threshold, i32 left, i32 right,
// u32 legit, u32 bot), then the checksum.

inline constexpr std::uint32_t kEnsembleFormatVersion = 1;
inline constexpr std::string_view kEnsembleMagic = "BFXTR001";

inline Bytes serialize_ensemble(const TreeEnsemble& e) {
  ByteWriter w;
  w.raw(kEnsembleMagic);
  w.u32(kEnsembleFormatVersion);
  w.u32(static_cast<std::uint32_t>(e.n_features));
  w.u32(static_cast<std::uint32_t>(e.trees.size()));
  w.u32(static_cast<std::uint32_t>(e.params.k_features));
  w.u32(static_cast<std::uint32_t>(e.params.min_samples_split));
  w.u64(e.params.seed);
  for (const auto& t : e.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.u32(static_cast<std::uint32_t>(n.feature));
      w.f64(n.threshold);
      w.u32(static_cast<std::uint32_t>(n.left));
      w.u32(static_cast<std::uint32_t>(n.right));
      w.u32(n.count_legit);
      w.u32(n.count_bot);
    }
  }
  return w.finish();
}

inline TreeEnsemble deserialize_ensemble(const Bytes& bytes) {
  ByteReader r(bytes);
  if (!r.expect(kEnsembleMagic)) throw Error(ErrorCode::CorruptPayload, "not an ensemble file");
  const auto version = r.u32();
  if (version != kEnsembleFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "ensemble format version " + std::to_string(version));
  }
  TreeEnsemble e;
  e.n_features = static_cast<int>(r.u32());
  const auto n_trees = r.u32();
  e.params.n_trees = static_cast<int>(n_trees);
  e.params.k_features = static_cast<int>(r.u32());
  e.params.min_samples_split = static_cast<int>(r.u32());
  e.params.seed = r.u64();
  if (e.n_features <= 0) throw Error(ErrorCode::CorruptPayload, "invalid feature width");
  constexpr std::size_t kNodeBytes = 4 + 8 + 4 + 4 + 4 + 4;
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    DecisionTree tree;
    const auto count = r.u32();
    if (count == 0 || static_cast<std::uint64_t>(count) * kNodeBytes > r.remaining()) {
      throw Error(ErrorCode::CorruptPayload, "invalid tree size");
    }
    tree.nodes.resize(count);
    for (auto& n : tree.nodes) {
      n.feature = static_cast<std::int32_t>(r.u32());
      n.threshold = r.f64();
      n.left = static_cast<std::int32_t>(r.u32());
      n.right = static_cast<std::int32_t>(r.u32());
      n.count_legit = r.u32();
      n.count_bot = r.u32();
    }
    // Children must point forward so routing always terminates.
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const auto& n = tree.nodes[i];
      if (n.is_leaf()) continue;
      if (n.feature >= e.n_features || n.left <= static_cast<std::int32_t>(i) || n.right <= static_cast<std::int32_t>(i) ||
          n.left >= static_cast<std::int32_t>(count) || n.right >= static_cast<std::int32_t>(count)) {
        throw Error(ErrorCode::CorruptPayload, "invalid tree topology");
      }
    }
    e.trees.push_back(std::move(tree));
  }
  if (!r.at_end()) throw Error(ErrorCode::CorruptPayload, "trailing bytes after ensemble");
  return e;
}

inline void save_ensemble(const std::filesystem::path& path, const TreeEnsemble& e) {
  write_bytes(path, serialize_ensemble(e));
}
inline TreeEnsemble load_ensemble(const std::filesystem::path& path) { return deserialize_ensemble(read_bytes(path)); }

}  // namespace botfuse
