// botfuse command-line entry point.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "botfuse/botfuse.hpp"

namespace fs = std::filesystem;
using namespace botfuse;
using nlohmann::json;

namespace {

// Everything a subcommand may need, filled from defaults, then --config,
// then explicit flags.
struct Settings {
  Architecture arch = Architecture::C2;
  std::optional<int> depth;
  std::uint64_t seed = 1;
  GcnConfig model;
  TrainConfig training;
  PipelineConfig pipeline;
  ExtraTreesParams trees;
  int folds = 10;
  std::string format = "canonical";
  double stealth = 0.0;
};

void apply_config(Settings& s, const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "arch") s.arch = parse_architecture(v.get<std::string>());
    else if (key == "depth") s.depth = v.get<int>();
    else if (key == "seed") s.seed = v.get<std::uint64_t>();
    else if (key == "hidden_dim") s.model.hidden_dim = v.get<int>();
    else if (key == "residual") s.model.residual = parse_residual(v.get<std::string>());
    else if (key == "self_loops") s.model.self_loops = v.get<bool>();
    else if (key == "layer_bias") s.model.layer_bias = v.get<bool>();
    else if (key == "init_gain") s.model.init_gain = v.get<double>();
    else if (key == "lr") s.training.lr = v.get<double>();
    else if (key == "max_epochs") s.training.max_epochs = v.get<int>();
    else if (key == "patience") s.training.patience = v.get<int>();
    else if (key == "validation_fraction") s.training.validation_fraction = v.get<double>();
    else if (key == "balance_ratio") s.training.balance_ratio = v.get<double>();
    else if (key == "clip_norm") s.training.clip_norm = v.get<double>();
    else if (key == "window") s.pipeline.window_len = v.get<double>();
    else if (key == "stride") s.pipeline.stride = v.get<double>();
    else if (key == "normalization") s.pipeline.normalization = parse_normalization(v.get<std::string>());
    else if (key == "input_scaling") s.pipeline.input_scaling = parse_input_scaling(v.get<std::string>());
    else if (key == "source") s.pipeline.source = parse_feature_source(v.get<std::string>());
    else if (key == "threshold") s.pipeline.threshold = v.get<double>();
    else if (key == "threads") s.pipeline.n_threads = v.get<unsigned>();
    else if (key == "trees") s.trees.n_trees = v.get<int>();
    else if (key == "k_features") s.trees.k_features = v.get<int>();
    else if (key == "min_samples_split") s.trees.min_samples_split = v.get<int>();
    else if (key == "folds") s.folds = v.get<int>();
    else if (key == "format") s.format = v.get<std::string>();
    else if (key == "stealth") s.stealth = v.get<double>();
    else throw Error(ErrorCode::SchemaViolation, "unknown config key '" + key + "'");
  }
}

// Raw flag values; only the ones given on the command line override.
struct Flags {
  std::string config, arch, normalization, scaling, source, residual, format;
  int depth = 0;
  std::uint64_t seed = 1;
  double window = 60, stride = 10, threshold = 0.5, stealth = 0;
  int trees = 100, folds = 10;
  unsigned threads = 1;
};

class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& help) : app_(parent.add_subcommand(name, help)) {
    app_->add_option("--config", flags_.config, "JSON settings file")->check(CLI::ExistingFile);
    seed_ = app_->add_option("--seed", flags_.seed, "random seed");
  }
  CLI::App* app() { return app_; }

  void with_arch() {
    arch_ = app_->add_option("--arch", flags_.arch, "c2 or p2p")->check(CLI::IsMember({"c2", "p2p"}));
    depth_ = app_->add_option("--depth", flags_.depth, "GCN depth (default 12 for c2, 24 for p2p)")
                 ->check(CLI::PositiveNumber);
  }
  void with_model_options() {
    residual_ = app_->add_option("--residual", flags_.residual, "input or pre_activation")
                    ->check(CLI::IsMember({"input", "pre_activation"}));
  }
  void with_windows() {
    window_ = app_->add_option("--window", flags_.window, "window length in seconds")->check(CLI::PositiveNumber);
    stride_ = app_->add_option("--stride", flags_.stride, "window stride in seconds")->check(CLI::PositiveNumber);
    format_ = app_->add_option("--format", flags_.format, "flow file format")
                  ->check(CLI::IsMember({"canonical", "binetflow"}));
    stealth_ = app_->add_option("--stealth", flags_.stealth, "share of quiet bots when --flows synth")
                   ->check(CLI::Range(0.0, 1.0));
  }
  void with_pipeline() {
    normalization_ = app_->add_option("--normalization", flags_.normalization, "per_vector, per_dimension or none")
                         ->check(CLI::IsMember({"per_vector", "per_dimension", "none"}));
    scaling_ = app_->add_option("--input-scaling", flags_.scaling, "none, log1p or log1p_max")
                   ->check(CLI::IsMember({"none", "log1p", "log1p_max"}));
    source_ = app_->add_option("--source", flags_.source, "fused, topology or flow")
                  ->check(CLI::IsMember({"fused", "topology", "flow"}));
    threshold_ = app_->add_option("--threshold", flags_.threshold, "decision threshold")->check(CLI::Range(0.0, 1.0));
    threads_ = app_->add_option("--threads", flags_.threads, "worker threads");
  }
  void with_trees() {
    trees_ = app_->add_option("--trees", flags_.trees, "Extra-Trees ensemble size")->check(CLI::PositiveNumber);
  }
  void with_folds() { folds_ = app_->add_option("--folds", flags_.folds, "cross-validation folds")->check(CLI::Range(2, 1000000)); }

  Settings settings() const {
    Settings s;
    if (!flags_.config.empty()) {
      std::ifstream in(flags_.config);
      apply_config(s, json::parse(in));
    }
    auto given = [](CLI::Option* o) { return o != nullptr && o->count() > 0; };
    if (given(seed_)) s.seed = flags_.seed;
    if (given(arch_)) s.arch = parse_architecture(flags_.arch);
    if (given(depth_)) s.depth = flags_.depth;
    if (given(residual_)) s.model.residual = parse_residual(flags_.residual);
    if (given(window_)) s.pipeline.window_len = flags_.window;
    if (given(stride_)) s.pipeline.stride = flags_.stride;
    if (given(format_)) s.format = flags_.format;
    if (given(stealth_)) s.stealth = flags_.stealth;
    if (given(normalization_)) s.pipeline.normalization = parse_normalization(flags_.normalization);
    if (given(scaling_)) s.pipeline.input_scaling = parse_input_scaling(flags_.scaling);
    if (given(source_)) s.pipeline.source = parse_feature_source(flags_.source);
    if (given(threshold_)) s.pipeline.threshold = flags_.threshold;
    if (given(threads_)) s.pipeline.n_threads = flags_.threads;
    if (given(trees_)) s.trees.n_trees = flags_.trees;
    if (given(folds_)) s.folds = flags_.folds;

    const int depth = s.depth.value_or(default_depth(s.arch));
    s.model.architecture = s.arch;
    s.model.depth = depth;
    s.model.seed = s.seed;
    s.training.seed = s.seed;
    s.trees.seed = s.seed;
    s.pipeline.architecture = s.arch;
    if (s.depth) s.pipeline.depth_override = depth;
    return s;
  }

 private:
  CLI::App* app_;
  Flags flags_;
  CLI::Option *seed_ = nullptr, *arch_ = nullptr, *depth_ = nullptr, *residual_ = nullptr, *window_ = nullptr,
              *stride_ = nullptr, *format_ = nullptr, *stealth_ = nullptr, *normalization_ = nullptr,
              *scaling_ = nullptr, *source_ = nullptr, *threshold_ = nullptr, *threads_ = nullptr,
              *trees_ = nullptr, *folds_ = nullptr;
};

// Writes to the file, or to stdout when the path is empty or "-".
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write(out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

SyntheticTrafficSpec traffic_spec(const Settings& s) {
  SyntheticTrafficSpec t;
  t.topology.architecture = s.arch;
  t.topology.n_background = 300;
  t.topology.n_bots = 30;
  t.topology.seed = s.seed;
  t.stealth_fraction = s.stealth;
  return t;
}

// "synth" generates the benchmark trace; anything else is a flow file.
std::vector<WindowSlice> load_windows(const std::string& flows, const Settings& s) {
  std::vector<FlowRecord> records;
  if (flows == "synth") {
    records = generate_synthetic_traffic(traffic_spec(s));
  } else {
    const ParseReport r = parse_flow_file(flows, s.format);
    if (r.malformed > 0) std::cerr << "skipped " << r.malformed << " malformed line(s) in " << flows << "\n";
    records = r.records;
  }
  auto windows = slice_windows(filter_tcp_udp(records), s.pipeline.window_len, s.pipeline.stride);
  if (windows.empty()) throw Error(ErrorCode::EmptyWindow, "no TCP/UDP flows in " + flows);
  return windows;
}

std::vector<CommGraph> load_pretrain_data(const std::string& data, const Settings& s, int synth_graphs) {
  if (data == "synth") {
    SyntheticGraphSpec spec;
    spec.architecture = s.arch;
    spec.seed = s.seed;
    return generate_synthetic_dataset(spec, synth_graphs);
  }
  std::vector<CommGraph> all = load_graph_dataset(data);
  std::vector<CommGraph> kept;
  for (auto& g : all) {
    if (!g.architecture || *g.architecture == s.arch) kept.push_back(std::move(g));
  }
  if (kept.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no " + std::string(to_string(s.arch)) + " graphs in " + data);
  }
  return kept;
}

GcnModel load_checked_model(const std::string& path, Settings& s) {
  GcnModel m = load_model(path);
  // The file records its own depth; an explicit --depth must agree.
  if (!s.pipeline.depth_override && m.depth() != default_depth(s.arch)) s.pipeline.depth_override = m.depth();
  check_model(m, s.pipeline);
  return m;
}

int run_pretrain(const Settings& s, const std::string& data, int graphs, const std::string& out,
                 const std::string& report) {
  const auto dataset = load_pretrain_data(data, s, graphs);
  std::ofstream report_file;
  std::ostream* log = &std::cout;
  if (!report.empty() && report != "-") {
    report_file.open(report);
    if (!report_file) throw Error(ErrorCode::IoError, "cannot write " + report);
    log = &report_file;
  }
  const PretrainResult r =
      pretrain_gcn(dataset, s.model, s.training, [&](const EpochReport& e) { *log << to_json(e).dump() << '\n'; });
  save_model(out, r.model);
  const json summary = {{"graphs", dataset.size()},
                        {"arch", to_string(s.arch)},
                        {"depth", r.model.depth()},
                        {"epochs", r.history.size()},
                        {"best_epoch", r.best_epoch},
                        {"val_acc", r.best_val_accuracy},
                        {"model", out}};
  std::cout << summary.dump() << '\n';
  return 0;
}

int run_features(const Settings& s, const std::string& flows, const std::string& out) {
  const auto windows = load_windows(flows, s);
  emit(out, [&](std::ostream& os) {
    os << "window_start,node_id,conn,fail_conn,dur,src_bytes_avg,dst_bytes_avg\n";
    os.precision(17);
    for (const auto& w : windows) {
      for (const auto& [id, f] : extract_node_features(w)) {
        os << w.window_start << ',' << id << ',' << f.conn << ',' << f.fail_conn << ',' << f.dur << ','
           << f.src_bytes_avg << ',' << f.dst_bytes_avg << '\n';
      }
    }
  });
  return 0;
}

int run_train(Settings s, const std::string& flows, const std::string& model_path, const std::string& out) {
  const GcnModel model = load_checked_model(model_path, s);
  const TreeEnsemble e = train_detector(load_windows(flows, s), model, s.pipeline, s.trees);
  save_ensemble(out, e);
  std::cout << json{{"trees", e.trees.size()}, {"features", e.n_features}, {"ensemble", out}}.dump() << '\n';
  return 0;
}

int run_detect(Settings s, const std::string& flows, const std::string& model_path, const std::string& ensemble_path,
               const std::string& out, bool no_timing) {
  const GcnModel model = load_checked_model(model_path, s);
  const TreeEnsemble ensemble = load_ensemble(ensemble_path);
  const DetectionReport report = detect(load_windows(flows, s), model, ensemble, s.pipeline);
  emit(out, [&](std::ostream& os) { write_report(os, report, !no_timing); });
  return 0;
}

int run_eval(Settings s, const std::string& flows, const std::string& model_path, const std::string& out,
             bool by_window) {
  const GcnModel model = load_checked_model(model_path, s);
  const LabeledSamples samples = pool_labeled(process_windows(load_windows(flows, s), model, s.pipeline));
  CvOptions opts;
  opts.k = s.folds;
  opts.seed = s.seed;
  opts.threshold = s.pipeline.threshold;
  opts.trees = s.trees;
  if (by_window) opts.groups = &samples.window;
  const CvResult cv = kfold_cv(samples.x, samples.y, opts);

  std::vector<std::pair<std::string, MetricSet>> rows;
  json folds = json::array();
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    rows.emplace_back("fold " + std::to_string(i), cv.folds[i]);
    folds.push_back(to_json(cv.folds[i]));
  }
  rows.emplace_back("mean", cv.summary.mean);
  rows.emplace_back("stddev", cv.summary.stddev);
  std::cout << metrics_table(rows, to_string(s.pipeline.source));
  if (!out.empty()) {
    const json j = {{"source", to_string(s.pipeline.source)},
                    {"folds", folds},
                    {"k", s.folds},
                    {"samples", samples.y.size()},
                    {"mean", to_json(cv.summary.mean)},
                    {"stddev", to_json(cv.summary.stddev)}};
    emit(out, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }
  return 0;
}

int run_sweep(const Settings& s, std::vector<int> depths, const std::string& data, int graphs,
              const std::string& flows, const std::string& out) {
  if (depths.empty()) depths = s.arch == Architecture::C2 ? std::vector<int>{10, 12, 14, 16} : std::vector<int>{16, 20, 24, 28};
  SweepOptions opts;
  opts.model = s.model;
  opts.training = s.training;
  opts.pipeline = s.pipeline;
  opts.cv.k = s.folds;
  opts.cv.seed = s.seed;
  opts.cv.threshold = s.pipeline.threshold;
  opts.cv.trees = s.trees;
  const auto rows = depth_sweep(depths, load_pretrain_data(data, s, graphs), load_windows(flows, s), opts);
  std::cout << sweep_table(rows);
  if (!out.empty()) {
    emit(out, [&](std::ostream& os) {
      for (const auto& r : rows) os << to_json(r).dump() << '\n';
    });
  }
  return 0;
}

int run_synth(const Settings& s, const std::string& kind, int count, const std::string& out) {
  if (kind == "graphs") {
    SyntheticGraphSpec spec;
    spec.architecture = s.arch;
    spec.seed = s.seed;
    const auto graphs = generate_synthetic_dataset(spec, count);
    fs::create_directories(out);
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      std::ostringstream name;
      name << to_string(s.arch) << '_' << std::setw(4) << std::setfill('0') << i << ".json";
      write_graph_file(fs::path(out) / name.str(), graphs[i], false);
    }
    std::cout << json{{"graphs", graphs.size()}, {"dir", out}}.dump() << '\n';
    return 0;
  }
  const auto flows = generate_synthetic_traffic(traffic_spec(s));
  emit(out, [&](std::ostream& os) { write_canonical_csv(os, flows); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Botnet detection from flow records with a pretrained residual GCN and Extra-Trees"};
  app.require_subcommand(1);

  std::string data = "synth", flows, model, ensemble, out, report, kind = "flows";
  int graphs = 20, count = 20;
  bool no_timing = false, by_window = false;
  std::vector<int> depths;

  Command pretrain(app, "pretrain", "pretrain and freeze a GCN on labeled graphs");
  pretrain.with_arch();
  pretrain.with_model_options();
  pretrain.app()->add_option("--data", data, "graph file, directory of graph files, or 'synth'");
  pretrain.app()->add_option("--graphs", graphs, "graphs to generate with --data synth")->check(CLI::Range(2, 100000));
  pretrain.app()->add_option("--out", out, "model file")->required();
  pretrain.app()->add_option("--report", report, "per-epoch JSON lines (default stdout)");

  Command features(app, "features", "per-window node flow features as CSV");
  features.with_windows();
  features.app()->add_option("--flows", flows, "flow file or 'synth'")->required();
  features.app()->add_option("--out", out, "CSV file (default stdout)");

  Command train(app, "train", "fit the Extra-Trees detector on labeled flows");
  train.with_arch();
  train.with_windows();
  train.with_pipeline();
  train.with_trees();
  train.app()->add_option("--flows", flows, "labeled flow file or 'synth'")->required();
  train.app()->add_option("--model", model, "pretrained model file")->required()->check(CLI::ExistingFile);
  train.app()->add_option("--out", out, "ensemble file")->required();

  Command detect_cmd(app, "detect", "classify every node of every window");
  detect_cmd.with_arch();
  detect_cmd.with_windows();
  detect_cmd.with_pipeline();
  detect_cmd.app()->add_option("--flows", flows, "flow file or 'synth'")->required();
  detect_cmd.app()->add_option("--model", model, "pretrained model file")->required()->check(CLI::ExistingFile);
  detect_cmd.app()->add_option("--ensemble", ensemble, "ensemble file")->required()->check(CLI::ExistingFile);
  detect_cmd.app()->add_option("--out", out, "JSON lines report (default stdout)");
  detect_cmd.app()->add_flag("--no-timing", no_timing, "omit wall-clock timings so reports are reproducible");

  Command eval(app, "eval", "k-fold cross-validation on labeled flows");
  eval.with_arch();
  eval.with_windows();
  eval.with_pipeline();
  eval.with_trees();
  eval.with_folds();
  eval.app()->add_option("--flows", flows, "labeled flow file or 'synth'")->required();
  eval.app()->add_option("--model", model, "pretrained model file")->required()->check(CLI::ExistingFile);
  eval.app()->add_option("--out", out, "metrics JSON file");
  eval.app()->add_flag("--group-by-window", by_window, "keep each window's nodes in one fold");

  Command sweep(app, "sweep", "pretrain and evaluate once per depth");
  sweep.with_arch();
  sweep.with_model_options();
  sweep.with_windows();
  sweep.with_pipeline();
  sweep.with_trees();
  sweep.with_folds();
  sweep.app()->add_option("--depths", depths, "depths to compare")->delimiter(',')->check(CLI::PositiveNumber);
  sweep.app()->add_option("--data", data, "pretraining graphs or 'synth'");
  sweep.app()->add_option("--graphs", graphs, "graphs to generate with --data synth")->check(CLI::Range(2, 100000));
  sweep.app()->add_option("--flows", flows, "labeled flow file or 'synth'")->required();
  sweep.app()->add_option("--out", out, "JSON lines, one row per depth");

  Command synth(app, "synth", "generate a synthetic graph dataset or flow trace");
  synth.with_arch();
  synth.with_windows();
  synth.app()->add_option("--kind", kind, "graphs or flows")->check(CLI::IsMember({"graphs", "flows"}));
  synth.app()->add_option("--count", count, "number of graphs")->check(CLI::PositiveNumber);
  synth.app()->add_option("--out", out, "directory for graphs, file for flows (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain.app()->parsed()) return run_pretrain(pretrain.settings(), data, graphs, out, report);
    if (features.app()->parsed()) return run_features(features.settings(), flows, out);
    if (train.app()->parsed()) return run_train(train.settings(), flows, model, out);
    if (detect_cmd.app()->parsed()) return run_detect(detect_cmd.settings(), flows, model, ensemble, out, no_timing);
    if (eval.app()->parsed()) return run_eval(eval.settings(), flows, model, out, by_window);
    if (sweep.app()->parsed()) return run_sweep(sweep.settings(), depths, data, graphs, flows, out);
    if (synth.app()->parsed()) {
      if (kind == "graphs" && out.empty()) throw Error(ErrorCode::InvalidArgument, "--out directory is required for graphs");
      return run_synth(synth.settings(), kind, count, out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
