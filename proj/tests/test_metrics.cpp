#include <gtest/gtest.h>

#include <set>

#include "oracles.hpp"

using namespace botfuse;

TEST(Metrics, PerfectPredictor) {
  const MetricSet m = compute_metrics({1, 0, 1, 0, 0}, {0.9, 0.1, 0.8, 0.2, 0.0}, 0.5);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  EXPECT_EQ(m.fpr, 0.0);
  EXPECT_EQ(m.roc_auc, 1.0);
}

TEST(Metrics, ConstantScoresGiveHalfAuc) {
  EXPECT_EQ(roc_auc({1, 0, 1, 0, 0, 1}, std::vector<double>(6, 0.3)), 0.5);
}

TEST(Metrics, SingleClassHasNoAuc) {
  const MetricSet m = compute_metrics({1, 1, 1}, {0.9, 0.2, 0.7}, 0.5);
  EXPECT_FALSE(m.roc_auc.has_value());
  EXPECT_NEAR(m.recall, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(m.fpr, 0.0);
}

TEST(Metrics, IdentitiesOnHandBuiltCounts) {
  struct Case {
    std::size_t tp, fp, tn, fn;
  };
  for (const Case c : {Case{10, 2, 30, 5}, Case{0, 0, 10, 0}, Case{7, 7, 7, 7}, Case{1, 0, 0, 0}, Case{0, 3, 0, 4}}) {
    const MetricSet m = metrics_from_counts(c.tp, c.fp, c.tn, c.fn);
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), tn = static_cast<double>(c.tn),
                 fn = static_cast<double>(c.fn);
    EXPECT_EQ(m.accuracy, (tp + tn) / (tp + fp + tn + fn));
    EXPECT_EQ(m.recall, tp + fn > 0 ? tp / (tp + fn) : 0.0);
    EXPECT_EQ(m.fpr, fp + tn > 0 ? fp / (fp + tn) : 0.0);
    EXPECT_EQ(m.precision, tp + fp > 0 ? tp / (tp + fp) : 0.0);
    const double f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    EXPECT_EQ(m.f1, f1);
    for (double v : {m.accuracy, m.precision, m.recall, m.fpr, m.f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, ThresholdIsInclusive) {
  const MetricSet m = compute_metrics({1, 0}, {0.5, 0.4999}, 0.5);
  EXPECT_EQ(m.tp, 1u);
  EXPECT_EQ(m.tn, 1u);
}

TEST(Metrics, AucMatchesAllPairs) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> y(200);
    std::vector<double> s(200);
    for (std::size_t i = 0; i < 200; ++i) {
      y[i] = rng.bernoulli(0.3) ? 1 : 0;
      // Coarse scores so ties are common.
      s[i] = std::floor(rng.uniform(0, 20)) / 20.0 + (y[i] ? 0.1 : 0.0);
    }
    const auto auc = roc_auc(y, s);
    ASSERT_TRUE(auc.has_value());
    EXPECT_EQ(*auc, oracle::auc_all_pairs(y, s));
  }
}

TEST(Folds, StratifiedSizesAndDeterminism) {
  Rng rng(2);
  std::vector<int> y(103);
  for (auto& v : y) v = rng.bernoulli(0.25) ? 1 : 0;
  const auto a = stratified_folds(y, 10, 7);
  EXPECT_EQ(a, stratified_folds(y, 10, 7));
  EXPECT_NE(a, stratified_folds(y, 10, 8));
  for (int cls : {0, 1}) {
    std::vector<int> count(10, 0);
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) ++count[static_cast<std::size_t>(a[i])];
    EXPECT_LE(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()), 1);
  }
  for (int f : a) {
    EXPECT_GE(f, 0);
    EXPECT_LT(f, 10);
  }
}

TEST(Folds, TooFewPositives) {
  try {
    stratified_folds({1, 0, 0, 0, 0}, 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewSamples);
  }
  EXPECT_THROW(stratified_folds({1, 1, 0, 0}, 1, 0), Error);
  EXPECT_THROW(stratified_folds({1, 1, 0, 0}, 5, 0), Error);
}

TEST(Folds, GroupedKeepsGroupsTogether) {
  std::vector<int> groups;
  for (int g = 0; g < 12; ++g)
    for (int i = 0; i < 5; ++i) groups.push_back(g);
  const auto a = grouped_folds(groups, 4, 3);
  for (std::size_t i = 0; i < groups.size(); ++i) EXPECT_EQ(a[i], a[static_cast<std::size_t>(groups[i]) * 5]);
  EXPECT_EQ(std::set<int>(a.begin(), a.end()).size(), 4u);
}

TEST(CrossValidation, LeaveOneOutOnSeparableSet) {
  Matrix x(20, 2);
  std::vector<int> y(20);
  for (Eigen::Index i = 0; i < 20; ++i) {
    const bool pos = i < 10;
    x(i, 0) = pos ? 5.0 + static_cast<double>(i) * 0.1 : -5.0 - static_cast<double>(i) * 0.1;
    x(i, 1) = static_cast<double>(i % 3);
    y[static_cast<std::size_t>(i)] = pos;
  }
  CvOptions o;
  o.k = 20;
  o.seed = 1;
  o.trees.n_trees = 20;
  const CvResult r = kfold_cv(x, y, o);
  EXPECT_EQ(r.folds.size(), 20u);
  EXPECT_EQ(r.summary.mean.accuracy, 1.0);
}

TEST(CrossValidation, FoldsPartitionTheData) {
  Rng rng(3);
  Matrix x(90, 3);
  std::vector<int> y(90);
  for (Eigen::Index i = 0; i < 90; ++i) {
    y[static_cast<std::size_t>(i)] = i % 4 == 0;
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.uniform(0, 1) + y[static_cast<std::size_t>(i)];
  }
  CvOptions o;
  o.k = 10;
  o.seed = 2;
  o.trees.n_trees = 10;
  const CvResult r = kfold_cv(x, y, o);
  ASSERT_EQ(r.folds.size(), 10u);
  std::size_t total = 0;
  for (const auto& f : r.folds) total += f.tp + f.fp + f.tn + f.fn;
  EXPECT_EQ(total, y.size());
  EXPECT_EQ(r.assignment.size(), y.size());
  // Unweighted mean of the fold metrics.
  double recall = 0;
  for (const auto& f : r.folds) recall += f.recall;
  EXPECT_NEAR(r.summary.mean.recall, recall / 10.0, 1e-15);
}

TEST(MetricsTable, AlignedColumns) {
  const std::string table = metrics_table({{"mean", metrics_from_counts(3, 1, 5, 1)}, {"fold 10", {}}}, "run");
  std::istringstream in(table);
  std::string line;
  std::vector<std::size_t> widths;
  while (std::getline(in, line)) widths.push_back(line.size());
  ASSERT_EQ(widths.size(), 3u);
  EXPECT_EQ(widths[0], widths[1]);
  EXPECT_EQ(widths[1], widths[2]);
  EXPECT_NE(table.find("0.7500"), std::string::npos);
}
