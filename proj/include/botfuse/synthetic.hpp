#pragma once

// Synthetic workloads: labeled topology-only graphs for pretraining and
// labeled flow traces with injected botnets for end-to-end runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "botfuse/error.hpp"
#include "botfuse/flow.hpp"
#include "botfuse/graph.hpp"
#include "botfuse/rng.hpp"

namespace botfuse {

enum class BackgroundModel { PreferentialAttachment, ErdosRenyi };

struct SyntheticGraphSpec {
  Architecture architecture = Architecture::C2;
  int n_background = 900;
  BackgroundModel background_model = BackgroundModel::PreferentialAttachment;
  int pa_edges_per_node = 2;         // preferential attachment m
  double er_mean_degree = 4.0;       // Erdos-Renyi expected degree
  int n_bots = 100;
  int c2_controllers = 2;            // bots are dealt round-robin to controllers
  int p2p_degree = 4;                // k of the k-regular bot mesh
  int bot_background_links = 1;      // uniform links from each bot into the background
  std::uint64_t seed = 0;
};

namespace detail {

using UndirectedEdges = std::set<std::pair<std::uint32_t, std::uint32_t>>;

inline void add_undirected(UndirectedEdges& e, std::uint32_t u, std::uint32_t v) {
  if (u == v) return;
  e.emplace(std::min(u, v), std::max(u, v));
}

/// Barabasi-Albert growth over `nodes`, seeded with an (m+1)-clique.
inline void preferential_attachment(const std::vector<std::uint32_t>& nodes, int m, Rng& rng, UndirectedEdges& out) {
  const auto n = nodes.size();
  const std::size_t core = std::min<std::size_t>(static_cast<std::size_t>(m) + 1, n);
  std::vector<std::uint32_t> endpoints;  // one entry per edge endpoint
  for (std::size_t i = 0; i < core; ++i) {
    for (std::size_t j = i + 1; j < core; ++j) {
      add_undirected(out, nodes[i], nodes[j]);
      endpoints.push_back(nodes[i]);
      endpoints.push_back(nodes[j]);
    }
  }
  for (std::size_t i = core; i < n; ++i) {
    std::set<std::uint32_t> targets;
    const auto want = std::min<std::size_t>(static_cast<std::size_t>(m), i);
    while (targets.size() < want) {
      const auto t = endpoints.empty() ? nodes[rng.below(i)] : endpoints[rng.below(endpoints.size())];
      targets.insert(t);
    }
    for (auto t : targets) {
      add_undirected(out, nodes[i], t);
      endpoints.push_back(nodes[i]);
      endpoints.push_back(t);
    }
  }
}

inline void erdos_renyi(const std::vector<std::uint32_t>& nodes, double mean_degree, Rng& rng, UndirectedEdges& out) {
  const auto n = nodes.size();
  if (n < 2) return;
  const double p = std::min(1.0, mean_degree / static_cast<double>(n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (rng.bernoulli(p)) add_undirected(out, nodes[i], nodes[j]);
    }
  }
}

/// Random k-regular simple graph by incremental stub matching with restarts.
inline void random_regular(const std::vector<std::uint32_t>& nodes, int k, Rng& rng, UndirectedEdges& out) {
  const auto n = nodes.size();
  if (k <= 0) return;
  if (static_cast<std::size_t>(k) >= n || (static_cast<std::size_t>(k) * n) % 2 != 0) {
    throw Error(ErrorCode::InfeasibleTopology, "no simple " + std::to_string(k) + "-regular graph on " +
                                                   std::to_string(n) + " nodes");
  }
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::uint32_t> stubs;
    for (std::uint32_t i = 0; i < n; ++i) stubs.insert(stubs.end(), static_cast<std::size_t>(k), i);
    UndirectedEdges local;
    bool stuck = false;
    while (!stubs.empty() && !stuck) {
      stuck = true;
      for (int tries = 0; tries < 100; ++tries) {
        const auto a = rng.below(stubs.size());
        const auto b = rng.below(stubs.size());
        const auto u = stubs[a], v = stubs[b];
        if (a == b || u == v || local.count({std::min(u, v), std::max(u, v)})) continue;
        local.emplace(std::min(u, v), std::max(u, v));
        stubs.erase(stubs.begin() + static_cast<std::ptrdiff_t>(std::max(a, b)));
        stubs.erase(stubs.begin() + static_cast<std::ptrdiff_t>(std::min(a, b)));
        stuck = false;
        break;
      }
    }
    if (stubs.empty()) {
      for (auto [u, v] : local) add_undirected(out, nodes[u], nodes[v]);
      return;
    }
  }
  throw Error(ErrorCode::InfeasibleTopology, "failed to sample a regular mesh");
}

inline std::string node_name(std::size_t i, std::size_t total) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::to_string(total).size();
  return "n" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

}  // namespace detail

inline void validate(const SyntheticGraphSpec& s) {
  if (s.n_background <= 0 || s.n_bots <= 0 || s.bot_background_links < 1) {
    throw Error(ErrorCode::InvalidArgument, "synthetic graph counts must be positive");
  }
  if (s.architecture == Architecture::C2 && s.c2_controllers <= 0) {
    throw Error(ErrorCode::InvalidArgument, "C2 overlay needs at least one controller");
  }
  if (s.architecture == Architecture::P2P) {
    if (s.p2p_degree <= 0 || s.p2p_degree >= s.n_bots) {
      throw Error(ErrorCode::InfeasibleTopology, "P2P mesh degree must satisfy 0 < k < n_bots");
    }
    if ((static_cast<long>(s.p2p_degree) * s.n_bots) % 2 != 0) {
      throw Error(ErrorCode::InfeasibleTopology, "k * n_bots must be even for a k-regular mesh");
    }
  }
  if (s.background_model == BackgroundModel::PreferentialAttachment && s.pa_edges_per_node < 1) {
    throw Error(ErrorCode::InvalidArgument, "preferential attachment needs m >= 1");
  }
}

/// Background graph with a botnet overlay. Every edge is present in both
/// directions, features are all ones, bots and controllers are labeled BOT.
inline CommGraph generate_synthetic_graph(const SyntheticGraphSpec& spec) {
  validate(spec);
  Rng rng(mix_seed(spec.seed, 0x73796e74));
  const int controllers = spec.architecture == Architecture::C2 ? spec.c2_controllers : 0;
  const std::size_t total = static_cast<std::size_t>(spec.n_background + spec.n_bots + controllers);

  // Random role assignment so that indices carry no label information.
  std::vector<std::uint32_t> perm(total);
  for (std::uint32_t i = 0; i < total; ++i) perm[i] = i;
  rng.shuffle(perm);
  const std::vector<std::uint32_t> background(perm.begin(), perm.begin() + spec.n_background);
  const std::vector<std::uint32_t> bots(perm.begin() + spec.n_background,
                                        perm.begin() + spec.n_background + spec.n_bots);
  const std::vector<std::uint32_t> masters(perm.begin() + spec.n_background + spec.n_bots, perm.end());

  detail::UndirectedEdges edges;
  if (spec.background_model == BackgroundModel::PreferentialAttachment) {
    detail::preferential_attachment(background, spec.pa_edges_per_node, rng, edges);
  } else {
    detail::erdos_renyi(background, spec.er_mean_degree, rng, edges);
  }

  if (spec.architecture == Architecture::C2) {
    for (std::size_t b = 0; b < bots.size(); ++b) detail::add_undirected(edges, masters[b % masters.size()], bots[b]);
    for (auto c : masters) detail::add_undirected(edges, c, background[rng.below(background.size())]);
  } else {
    detail::random_regular(bots, spec.p2p_degree, rng, edges);
  }
  for (auto b : bots) {
    for (int l = 0; l < spec.bot_background_links; ++l) {
      detail::add_undirected(edges, b, background[rng.below(background.size())]);
    }
  }

  CommGraph g;
  g.architecture = spec.architecture;
  g.nodes.reserve(total);
  for (std::size_t i = 0; i < total; ++i) g.nodes.push_back(detail::node_name(i, total));
  g.labels.assign(total, Label::LEGIT);
  for (auto b : bots) g.labels[b] = Label::BOT;
  for (auto c : masters) g.labels[c] = Label::BOT;
  for (auto [u, v] : edges) {
    g.edges.emplace_back(u, v);
    g.edges.emplace_back(v, u);
  }
  detail::normalize_edges(g.edges);
  g.features = Matrix::Ones(static_cast<Eigen::Index>(total), kFlowFeatureDim);
  return g;
}

inline std::vector<CommGraph> generate_synthetic_dataset(SyntheticGraphSpec spec, int count) {
  std::vector<CommGraph> out;
  const auto base = spec.seed;
  for (int i = 0; i < count; ++i) {
    spec.seed = mix_seed(base, static_cast<std::uint64_t>(i));
    out.push_back(generate_synthetic_graph(spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flow traces.

struct SyntheticTrafficSpec {
  SyntheticGraphSpec topology;      // reused for host layout and the bot overlay
  double duration = 120.0;          // seconds of traffic
  double start_time = 0.0;
  double legit_flow_rate = 0.05;    // flows per second per background link
  double legit_failure_rate = 0.03;
  double heartbeat_period = 15.0;   // bot -> controller (C2) or bot -> peer (P2P)
  double scan_rate = 0.1;           // probes per second per bot
  double bot_legit_rate = 0.02;     // ordinary traffic a bot host still produces, per link
  double other_proto_fraction = 0.05;  // ICMP-like records that the filter drops
  // Share of bots that never scan and whose overlay traffic is sized like
  // ordinary sessions; only their position in the graph gives them away.
  double stealth_fraction = 0.0;
};

namespace detail {

inline double lognormal(Rng& rng, double median, double sigma) {
  // Box-Muller on our own uniform draws.
  const double u1 = std::max(rng.uniform(), 1e-300);
  const double u2 = rng.uniform();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  return median * std::exp(sigma * z);
}

inline double exponential(Rng& rng, double rate) {
  return -std::log(std::max(1.0 - rng.uniform(), 1e-300)) / rate;
}

}  // namespace detail

/// Generates a labeled flow trace over the synthetic topology. Background
/// links carry client/server sessions; bots add heartbeats to controllers or
/// mesh peers plus unanswered scan probes. Records come out sorted by start.
inline std::vector<FlowRecord> generate_synthetic_traffic(const SyntheticTrafficSpec& spec) {
  const CommGraph g = generate_synthetic_graph(spec.topology);
  Rng rng(mix_seed(spec.topology.seed, 0x74726166));
  const auto n = g.size();

  auto ip = [&](std::uint32_t i) {
    return "10." + std::to_string((i >> 16) & 0xff) + "." + std::to_string((i >> 8) & 0xff) + "." +
           std::to_string(i & 0xff);
  };
  std::vector<std::string> ips(n);
  for (std::uint32_t i = 0; i < n; ++i) ips[i] = ip(i);
  std::vector<std::uint32_t> background;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (g.labels[i] == Label::LEGIT) background.push_back(i);
  }

  std::vector<std::size_t> degree(n, 0);
  for (auto [u, v] : g.edges) ++degree[u];
  std::vector<char> stealthy(n, 0);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (g.labels[i] == Label::BOT) stealthy[i] = rng.bernoulli(spec.stealth_fraction) ? 1 : 0;
  }

  std::vector<FlowRecord> out;
  auto emit = [&](double ts, std::uint32_t s, std::uint32_t d, double dur, double sb, double db, Label label,
                  Proto proto) {
    FlowRecord r;
    r.ts_start = spec.start_time + ts;
    r.duration = std::max(0.0, dur);
    r.proto = proto;
    r.src_ip = ips[s];
    r.dst_ip = ips[d];
    r.src_port = static_cast<std::uint16_t>(1024 + rng.below(60000));
    r.dst_port = static_cast<std::uint16_t>(proto == Proto::UDP ? 53 : (rng.bernoulli(0.5) ? 443 : 80));
    r.src_bytes = std::round(sb);
    r.dst_bytes = std::round(db);
    r.label = label;
    out.push_back(std::move(r));
  };
  auto pick_proto = [&](double udp_share) {
    if (rng.bernoulli(spec.other_proto_fraction)) return Proto::OTHER;
    return rng.bernoulli(udp_share) ? Proto::UDP : Proto::TCP;
  };

  auto legit_session = [&](double ts, std::uint32_t client, std::uint32_t server) {
    const Proto proto = pick_proto(0.15);
    if (rng.bernoulli(spec.legit_failure_rate)) {
      emit(ts, client, server, detail::lognormal(rng, 0.5, 0.5), detail::lognormal(rng, 60, 0.3), 0, Label::LEGIT,
           proto);
      return;
    }
    emit(ts, client, server, detail::lognormal(rng, 8.0, 1.0), detail::lognormal(rng, 1500, 0.8),
         detail::lognormal(rng, 40000, 1.3), Label::LEGIT, proto);
  };

  for (auto [u, v] : g.edges) {
    if (u > v) continue;  // one session stream per undirected link
    const bool bot_u = g.labels[u] == Label::BOT;
    const bool bot_v = g.labels[v] == Label::BOT;
    if (bot_u && bot_v) {
      // Overlay link: controller <-> bot or bot <-> bot mesh.
      double t = rng.uniform(0.0, spec.heartbeat_period);
      while (t < spec.duration) {
        const bool flip = rng.bernoulli(0.5);
        const auto s = flip ? v : u, d = flip ? u : v;
        if (stealthy[u] || stealthy[v]) {
          emit(t, s, d, detail::lognormal(rng, 8.0, 1.0), detail::lognormal(rng, 1500, 0.8),
               detail::lognormal(rng, 40000, 1.3), Label::BOT, pick_proto(0.15));
        } else {
          emit(t, s, d, detail::lognormal(rng, 0.3, 0.4), detail::lognormal(rng, 180, 0.3),
               detail::lognormal(rng, 220, 0.3), Label::BOT, pick_proto(0.3));
        }
        t += spec.heartbeat_period * rng.uniform(0.8, 1.2);
      }
      continue;
    }
    // Lower-degree endpoint acts as the client.
    const auto client = degree[u] <= degree[v] ? u : v;
    const auto server = client == u ? v : u;
    const double rate = (bot_u || bot_v) ? spec.bot_legit_rate : spec.legit_flow_rate;
    double t = detail::exponential(rng, rate);
    while (t < spec.duration) {
      legit_session(t, client, server);
      t += detail::exponential(rng, rate);
    }
  }

  for (std::uint32_t b = 0; b < n; ++b) {
    if (g.labels[b] != Label::BOT || stealthy[b]) continue;
    double t = detail::exponential(rng, spec.scan_rate);
    while (t < spec.duration) {
      const auto target = background[rng.below(background.size())];
      emit(t, b, target, detail::lognormal(rng, 0.01, 0.5), detail::lognormal(rng, 50, 0.2), 0, Label::BOT,
           pick_proto(0.2));
      t += detail::exponential(rng, spec.scan_rate);
    }
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const FlowRecord& a, const FlowRecord& b) { return a.ts_start < b.ts_start; });
  return out;
}

}  // namespace botfuse
