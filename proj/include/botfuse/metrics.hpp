#pragma once

// Detection metrics and stratified k-fold cross-validation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "botfuse/error.hpp"
#include "botfuse/extra_trees.hpp"
#include "botfuse/graph.hpp"
#include "botfuse/rng.hpp"

namespace botfuse {

struct MetricSet {
  double accuracy = 0, precision = 0, recall = 0, fpr = 0, f1 = 0;
  std::optional<double> roc_auc;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline nlohmann::json to_json(const MetricSet& m) {
  nlohmann::json j = {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
                      {"fpr", m.fpr},           {"f1", m.f1},               {"tp", m.tp},
                      {"fp", m.fp},             {"tn", m.tn},               {"fn", m.fn}};
  j["roc_auc"] = m.roc_auc ? nlohmann::json(*m.roc_auc) : nlohmann::json(nullptr);
  return j;
}

/// Derives every ratio from the confusion counts. Empty denominators give 0.
inline MetricSet metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  MetricSet m;
  m.tp = tp, m.fp = fp, m.tn = tn, m.fn = fn;
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  const double total = static_cast<double>(tp + fp + tn + fn);
  m.accuracy = ratio(static_cast<double>(tp + tn), total);
  m.precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  m.fpr = ratio(static_cast<double>(fp), static_cast<double>(fp + tn));
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

/// Mann-Whitney AUC: probability that a random positive outscores a random
/// negative, ties counted half. nullopt when either class is missing.
inline std::optional<double> roc_auc(const std::vector<int>& y_true, const std::vector<double>& score) {
  const std::size_t n = y_true.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  // Twice the rank sum of positives, with tied blocks sharing (first + last) ranks.
  std::uint64_t twice_rank_sum = 0, positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && score[order[j]] == score[order[i]]) ++j;
    const std::uint64_t twice_avg = (i + 1) + j;  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (y_true[order[t]] == 1) {
        twice_rank_sum += twice_avg;
        ++positives;
      }
    }
    i = j;
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  // 2U = 2*R - P(P+1); both sides are integers.
  const std::uint64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / 2.0 / (static_cast<double>(positives) * static_cast<double>(negatives));
}

inline MetricSet compute_metrics(const std::vector<int>& y_true, const std::vector<double>& y_prob,
                                 double threshold = 0.5) {
  if (y_true.size() != y_prob.size()) throw Error(ErrorCode::DimensionMismatch, "labels and scores differ in length");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool pred = y_prob[i] >= threshold;
    if (y_true[i] == 1) (pred ? tp : fn) += 1;
    else (pred ? fp : tn) += 1;
  }
  MetricSet m = metrics_from_counts(tp, fp, tn, fn);
  m.roc_auc = roc_auc(y_true, y_prob);
  return m;
}

struct MetricSummary {
  MetricSet mean;    // confusion counts are summed
  MetricSet stddev;  // sample standard deviation; counts left at zero
};

inline MetricSummary summarize(const std::vector<MetricSet>& sets) {
  MetricSummary s;
  if (sets.empty()) return s;
  auto stat = [&](auto get, double& mean, double& sd) {
    double sum = 0;
    for (const auto& m : sets) sum += get(m);
    mean = sum / static_cast<double>(sets.size());
    double sq = 0;
    for (const auto& m : sets) sq += (get(m) - mean) * (get(m) - mean);
    sd = sets.size() > 1 ? std::sqrt(sq / static_cast<double>(sets.size() - 1)) : 0.0;
  };
  stat([](const MetricSet& m) { return m.accuracy; }, s.mean.accuracy, s.stddev.accuracy);
  stat([](const MetricSet& m) { return m.precision; }, s.mean.precision, s.stddev.precision);
  stat([](const MetricSet& m) { return m.recall; }, s.mean.recall, s.stddev.recall);
  stat([](const MetricSet& m) { return m.fpr; }, s.mean.fpr, s.stddev.fpr);
  stat([](const MetricSet& m) { return m.f1; }, s.mean.f1, s.stddev.f1);
  std::vector<double> aucs;
  for (const auto& m : sets) {
    if (m.roc_auc) aucs.push_back(*m.roc_auc);
    s.mean.tp += m.tp, s.mean.fp += m.fp, s.mean.tn += m.tn, s.mean.fn += m.fn;
  }
  if (!aucs.empty()) {
    double sum = 0;
    for (double a : aucs) sum += a;
    const double mean = sum / static_cast<double>(aucs.size());
    double sq = 0;
    for (double a : aucs) sq += (a - mean) * (a - mean);
    s.mean.roc_auc = mean;
    s.stddev.roc_auc = aucs.size() > 1 ? std::sqrt(sq / static_cast<double>(aucs.size() - 1)) : 0.0;
  }
  return s;
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// so per-class fold sizes differ by at most one.
inline std::vector<int> stratified_folds(const std::vector<int>& y, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  if (static_cast<std::size_t>(k) > y.size()) throw Error(ErrorCode::TooFewSamples, "more folds than samples");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
  // A class with a single member would be missing from one training split.
  if (pos.size() < 2 || neg.size() < 2) throw Error(ErrorCode::TooFewSamples, "each class needs at least two samples");
  Rng rng(mix_seed(seed, 0x666f6c64));
  rng.shuffle(pos);
  rng.shuffle(neg);
  std::vector<int> fold(y.size(), 0);
  for (std::size_t i = 0; i < pos.size(); ++i) fold[pos[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  // Continue the deal where positives stopped so total fold sizes also balance.
  const std::size_t offset = pos.size() % static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < neg.size(); ++i) {
    fold[neg[i]] = static_cast<int>((i + offset) % static_cast<std::size_t>(k));
  }
  return fold;
}

/// Fold assignment by group (e.g. window index): whole groups are shuffled
/// and dealt round-robin. Used to check for cross-window leakage.
inline std::vector<int> grouped_folds(const std::vector<int>& groups, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  std::vector<int> ids(groups);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < static_cast<std::size_t>(k)) throw Error(ErrorCode::TooFewSamples, "fewer groups than folds");
  Rng rng(mix_seed(seed, 0x67726f75));
  rng.shuffle(ids);
  std::vector<int> fold(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto it = std::find(ids.begin(), ids.end(), groups[i]);
    fold[i] = static_cast<int>(static_cast<std::size_t>(it - ids.begin()) % static_cast<std::size_t>(k));
  }
  return fold;
}

struct CvResult {
  std::vector<MetricSet> folds;
  MetricSummary summary;
  std::vector<int> assignment;
};

struct CvOptions {
  int k = 10;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  ExtraTreesParams trees;
  const std::vector<int>* groups = nullptr;  // set for group-level folds
};

/// For each fold, fits Extra-Trees on the other folds and scores the held-out
/// one. Metrics are averaged without weighting.
inline CvResult kfold_cv(const Matrix& x, const std::vector<int>& y, const CvOptions& opts = {}) {
  if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw Error(ErrorCode::DimensionMismatch, "one label per row");
  CvResult res;
  res.assignment = opts.groups ? grouped_folds(*opts.groups, opts.k, opts.seed) : stratified_folds(y, opts.k, opts.seed);
  for (int f = 0; f < opts.k; ++f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < y.size(); ++i) (res.assignment[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
    if (test.empty()) continue;
    Matrix xtr(static_cast<Eigen::Index>(train.size()), x.cols()), xte(static_cast<Eigen::Index>(test.size()), x.cols());
    std::vector<int> ytr, yte;
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = x.row(train[i]);
      ytr.push_back(y[static_cast<std::size_t>(train[i])]);
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
      xte.row(static_cast<Eigen::Index>(i)) = x.row(test[i]);
      yte.push_back(y[static_cast<std::size_t>(test[i])]);
    }
    ExtraTreesParams params = opts.trees;
    params.seed = mix_seed(opts.trees.seed, static_cast<std::uint64_t>(f));
    const TreeEnsemble e = fit_extra_trees(xtr, ytr, params);
    res.folds.push_back(compute_metrics(yte, predict_proba(e, xte), opts.threshold));
  }
  res.summary = summarize(res.folds);
  return res;
}

/// Aligned plain-text table, one row per labeled metric set.
inline std::string metrics_table(const std::vector<std::pair<std::string, MetricSet>>& rows,
                                 const std::string& key_header = "run") {
  std::size_t key_width = key_header.size();
  for (const auto& [key, m] : rows) key_width = std::max(key_width, key.size());
  std::ostringstream out;
  auto cell = [&](const std::string& text, std::size_t width) { out << std::setw(static_cast<int>(width)) << text; };
  out << std::left;
  cell(key_header, key_width);
  out << std::right;
  for (const char* h : {"accuracy", "precision", "recall", "fpr", "f1", "roc_auc"}) {
    out << "  ";
    cell(h, 9);
  }
  out << '\n';
  for (const auto& [key, m] : rows) {
    out << std::left;
    cell(key, key_width);
    out << std::right << std::fixed << std::setprecision(4);
    for (double v : {m.accuracy, m.precision, m.recall, m.fpr, m.f1}) out << "  " << std::setw(9) << v;
    out << "  ";
    if (m.roc_auc) out << std::setw(9) << *m.roc_auc;
    else cell("-", 9);
    out << '\n';
  }
  return out.str();
}

}  // namespace botfuse
