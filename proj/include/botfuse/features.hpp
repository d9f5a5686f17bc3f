#pragma once

// Per-node flow features: (Conn, FailConn, Dur, SrcBytes, DstBytes).

#include <array>
#include <map>
#include <ostream>
#include <string>

#include "botfuse/error.hpp"
#include "botfuse/flow.hpp"

namespace botfuse {

inline constexpr std::size_t kFlowFeatureDim = 5;

struct NodeFlowFeatures {
  std::string node_id;
  double conn = 0;           // successful flows touching the node
  double fail_conn = 0;      // failed flows touching the node
  double dur = 0;            // mean duration of successful flows
  double src_bytes_avg = 0;  // mean bytes transmitted by the node, over all its flows
  double dst_bytes_avg = 0;  // mean bytes received by the node, over all its flows

  std::array<double, kFlowFeatureDim> as_array() const {
    return {conn, fail_conn, dur, src_bytes_avg, dst_bytes_avg};
  }

  bool operator==(const NodeFlowFeatures&) const = default;
};

using FeatureMap = std::map<std::string, NodeFlowFeatures>;

/// A flow counts as an established connection when both directions carried
/// payload. Unanswered probes (dst_bytes == 0) are failures.
inline bool classify_flow_success(const FlowRecord& r) { return r.src_bytes > 0 && r.dst_bytes > 0; }

inline FeatureMap extract_node_features(const std::vector<FlowRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::EmptyWindow, "cannot extract features from an empty window");

  struct Acc {
    double conn = 0, fail = 0, dur_sum = 0, sent = 0, recv = 0;
  };
  std::map<std::string, Acc> acc;
  auto touch = [&](const std::string& node, bool ok, double dur, double sent, double recv) {
    Acc& a = acc[node];
    if (ok) {
      a.conn += 1;
      a.dur_sum += dur;
    } else {
      a.fail += 1;
    }
    a.sent += sent;
    a.recv += recv;
  };
  for (const auto& r : records) {
    const bool ok = classify_flow_success(r);
    touch(r.src_ip, ok, r.duration, r.src_bytes, r.dst_bytes);
    touch(r.dst_ip, ok, r.duration, r.dst_bytes, r.src_bytes);
  }

  FeatureMap out;
  for (const auto& [node, a] : acc) {
    NodeFlowFeatures f;
    f.node_id = node;
    f.conn = a.conn;
    f.fail_conn = a.fail;
    f.dur = a.conn > 0 ? a.dur_sum / a.conn : 0.0;
    const double flows = a.conn + a.fail;
    f.src_bytes_avg = flows > 0 ? a.sent / flows : 0.0;
    f.dst_bytes_avg = flows > 0 ? a.recv / flows : 0.0;
    out.emplace(node, std::move(f));
  }
  return out;
}

inline FeatureMap extract_node_features(const WindowSlice& window) { return extract_node_features(window.records); }

inline void write_features_csv(std::ostream& out, const FeatureMap& features, bool header = true) {
  if (header) out << "node_id,conn,fail_conn,dur,src_bytes_avg,dst_bytes_avg\n";
  for (const auto& [id, f] : features) {
    out << id << ',' << f.conn << ',' << f.fail_conn << ',' << f.dur << ',' << f.src_bytes_avg << ','
        << f.dst_bytes_avg << '\n';
  }
}

}  // namespace botfuse
