#pragma once

// Depth sweep: pretrain, freeze, embed and cross-validate once per depth.

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "botfuse/metrics.hpp"
#include "botfuse/pipeline.hpp"
#include "botfuse/pretrain.hpp"

namespace botfuse {

struct SweepRow {
  int depth = 0;
  double pretrain_val_accuracy = 0;
  int pretrain_epochs = 0;
  CvResult cv;
};

struct SweepOptions {
  GcnConfig model;  // depth is overwritten per row
  TrainConfig training;
  PipelineConfig pipeline;  // depth_override is overwritten per row
  CvOptions cv;
};

/// Rows come back in the order the depths were requested.
inline std::vector<SweepRow> depth_sweep(const std::vector<int>& depths, const std::vector<CommGraph>& pretrain_data,
                                         const std::vector<WindowSlice>& windows, const SweepOptions& opts) {
  if (depths.empty()) throw Error(ErrorCode::InvalidArgument, "depth list is empty");
  std::vector<SweepRow> rows;
  for (int depth : depths) {
    if (depth < 1) throw Error(ErrorCode::InvalidArgument, "depth must be positive");
    GcnConfig mc = opts.model;
    mc.depth = depth;
    const PretrainResult pre = pretrain_gcn(pretrain_data, mc, opts.training);
    PipelineConfig pc = opts.pipeline;
    pc.architecture = mc.architecture;
    pc.depth_override = depth;
    const LabeledSamples samples = pool_labeled(process_windows(windows, pre.model, pc));
    SweepRow row;
    row.depth = depth;
    row.pretrain_val_accuracy = pre.best_val_accuracy;
    row.pretrain_epochs = static_cast<int>(pre.history.size());
    row.cv = kfold_cv(samples.x, samples.y, opts.cv);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const SweepRow& r) {
  return {{"depth", r.depth},
          {"pretrain_val_acc", r.pretrain_val_accuracy},
          {"pretrain_epochs", r.pretrain_epochs},
          {"mean", to_json(r.cv.summary.mean)},
          {"stddev", to_json(r.cv.summary.stddev)}};
}

inline std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::vector<std::pair<std::string, MetricSet>> table;
  for (const auto& r : rows) table.emplace_back(std::to_string(r.depth), r.cv.summary.mean);
  return metrics_table(table, "depth");
}

}  // namespace botfuse
