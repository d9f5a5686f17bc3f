#pragma once

// Slow reference implementations shared by the unit and acceptance tests.
// They use plain nested vectors and loops so they do not share code paths
// with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "botfuse/botfuse.hpp"

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline Dense zeros(std::size_t r, std::size_t c) { return Dense(r, std::vector<double>(c, 0.0)); }

inline Dense to_dense(const botfuse::Matrix& m) {
  Dense d = zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) d[i][j] = m(i, j);
  return d;
}

inline Dense to_dense(const botfuse::SparseMatrix& m) { return to_dense(botfuse::Matrix(m)); }

inline Dense matmul(const Dense& a, const Dense& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Dense c = zeros(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t j = 0; j < m; ++j) c[i][j] += a[i][t] * b[t][j];
  return c;
}

inline double max_abs_diff(const Dense& a, const Dense& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
  return worst;
}

/// D^-1/2 A D^-1/2 from dense matrices, A symmetrized, isolated rows zero.
inline Dense propagation(std::size_t n, const std::vector<botfuse::Edge>& edges, bool self_loops = false) {
  Dense a = zeros(n, n);
  for (auto [u, v] : edges) {
    if (u == v) continue;
    a[u][v] = 1.0;
    a[v][u] = 1.0;
  }
  if (self_loops)
    for (std::size_t i = 0; i < n; ++i) a[i][i] = 1.0;
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0;
    for (std::size_t j = 0; j < n; ++j) d += a[i][j];
    inv_sqrt[i] = d > 0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  Dense d_half = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) d_half[i][i] = inv_sqrt[i];
  return matmul(matmul(d_half, a), d_half);
}

/// Largest |eigenvalue| of a symmetric matrix by power iteration on P^2.
inline double spectral_radius(const Dense& p, int iterations = 500) {
  const std::size_t n = p.size();
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * static_cast<double>(i % 7);
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> w(n, 0.0), u(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) w[i] += p[i][j] * v[j];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) u[i] += p[i][j] * w[j];
    double norm_v = 0, norm_u = 0;
    for (std::size_t i = 0; i < n; ++i) norm_v += v[i] * v[i], norm_u += u[i] * u[i];
    if (norm_u == 0) return 0.0;
    lambda = std::sqrt(std::sqrt(norm_u / norm_v));
    const double s = 1.0 / std::sqrt(norm_u);
    for (std::size_t i = 0; i < n; ++i) v[i] = u[i] * s;
  }
  return lambda;
}

/// Random directed edge list over n nodes, roughly `density` of all pairs.
inline std::vector<botfuse::Edge> random_edges(std::size_t n, double density, botfuse::Rng& rng) {
  std::vector<botfuse::Edge> e;
  for (std::uint32_t u = 0; u < n; ++u)
    for (std::uint32_t v = 0; v < n; ++v)
      if (u != v && rng.bernoulli(density)) e.emplace_back(u, v);
  return e;
}

// Feature aggregation written per node: for each node, scan every record.
inline std::map<std::string, std::array<double, 5>> node_features(const std::vector<botfuse::FlowRecord>& flows) {
  std::set<std::string> ids;
  for (const auto& r : flows) ids.insert(r.src_ip), ids.insert(r.dst_ip);
  std::map<std::string, std::array<double, 5>> out;
  for (const auto& id : ids) {
    double ok = 0, failed = 0, dur = 0, sent = 0, recv = 0, involved = 0;
    for (const auto& r : flows) {
      const bool as_src = r.src_ip == id, as_dst = r.dst_ip == id;
      // A self flow counts at both ends, like any other flow.
      for (int role = 0; role < 2; ++role) {
        const bool here = role == 0 ? as_src : as_dst;
        if (!here) continue;
        ++involved;
        const bool success = r.src_bytes > 0 && r.dst_bytes > 0;
        if (success) ++ok, dur += r.duration;
        else ++failed;
        sent += role == 0 ? r.src_bytes : r.dst_bytes;
        recv += role == 0 ? r.dst_bytes : r.src_bytes;
      }
    }
    out[id] = {ok, failed, ok > 0 ? dur / ok : 0.0, sent / involved, recv / involved};
  }
  return out;
}

/// Per-layer replay of the GCN with dense loops.
inline Dense layer(const Dense& p, const Dense& x, const Dense& w, const std::vector<double>* bias,
                   botfuse::ResidualMode mode) {
  Dense z = matmul(matmul(p, x), w);
  if (bias)
    for (auto& row : z)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += (*bias)[j];
  Dense y = zeros(z.size(), z.empty() ? 0 : z[0].size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = 0; j < z[i].size(); ++j) {
      const double act = std::max(z[i][j], 0.0);
      if (mode == botfuse::ResidualMode::PreActivation) {
        y[i][j] = z[i][j] + act;
      } else {
        y[i][j] = act + (j < x[i].size() ? x[i][j] : 0.0);
      }
    }
  }
  return y;
}

inline std::vector<double> to_vec(const botfuse::Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Dense forward(const botfuse::GcnModel& m, const Dense& p, const Dense& x0, bool with_head) {
  Dense x = x0;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    const auto b = to_vec(m.biases[k]);
    x = layer(p, x, to_dense(m.weights[k]), m.config.layer_bias ? &b : nullptr, m.config.residual);
  }
  if (!with_head) return x;
  Dense logits = matmul(x, to_dense(m.head));
  for (auto& row : logits)
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += m.head_bias(static_cast<Eigen::Index>(c));
  return logits;
}

inline double loss(const botfuse::GcnModel& m, const Dense& p, const Dense& x0, const std::vector<int>& y,
                   const std::vector<std::uint8_t>& mask) {
  const Dense logits = forward(m, p, x0, true);
  double total = 0;
  int count = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    const double a = logits[i][0], b = logits[i][1];
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    total += lse - logits[i][static_cast<std::size_t>(y[i])];
    ++count;
  }
  return total / count;
}

/// AUC by comparing every positive with every negative.
inline double auc_all_pairs(const std::vector<int>& y, const std::vector<double>& s) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Recursive routing through a fitted tree.
inline double route(const botfuse::DecisionTree& t, std::size_t node, const std::vector<double>& x) {
  const auto& n = t.nodes.at(node);
  if (n.feature < 0) {
    const double total = static_cast<double>(n.count_legit) + static_cast<double>(n.count_bot);
    return total > 0 ? static_cast<double>(n.count_bot) / total : 0.0;
  }
  const bool go_left = x.at(static_cast<std::size_t>(n.feature)) < n.threshold;
  return route(t, static_cast<std::size_t>(go_left ? n.left : n.right), x);
}

inline double ensemble_proba(const botfuse::TreeEnsemble& e, const std::vector<double>& x) {
  double sum = 0;
  for (const auto& t : e.trees) sum += route(t, 0, x);
  return sum / static_cast<double>(e.trees.size());
}

inline std::vector<double> row(const botfuse::Matrix& m, Eigen::Index i) {
  std::vector<double> r(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
  return r;
}

/// Random flows over a small address pool, some failed, some OTHER protocol.
inline std::vector<botfuse::FlowRecord> random_flows(std::size_t count, std::size_t hosts, botfuse::Rng& rng,
                                                     double span = 120.0) {
  std::vector<botfuse::FlowRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    botfuse::FlowRecord r;
    r.ts_start = rng.uniform(0.0, span);
    r.duration = rng.uniform(0.0, 10.0);
    r.proto = rng.bernoulli(0.5) ? botfuse::Proto::TCP : botfuse::Proto::UDP;
    const auto s = rng.below(hosts);
    auto d = rng.below(hosts - 1);
    if (d >= s) ++d;
    r.src_ip = "h" + std::to_string(s);
    r.dst_ip = "h" + std::to_string(d);
    r.src_port = static_cast<std::uint16_t>(rng.below(65536));
    r.dst_port = static_cast<std::uint16_t>(rng.below(65536));
    r.src_bytes = rng.bernoulli(0.1) ? 0.0 : std::floor(rng.uniform(1.0, 5000.0));
    r.dst_bytes = rng.bernoulli(0.3) ? 0.0 : std::floor(rng.uniform(1.0, 50000.0));
    r.label = rng.bernoulli(0.2) ? botfuse::Label::BOT : botfuse::Label::LEGIT;
    out.push_back(std::move(r));
  }
  return out;
}

/// Relative error with a floor so near-zero gradients compare absolutely.
inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1e-6, std::abs(analytic), std::abs(numeric)});
}

}  // namespace oracle
