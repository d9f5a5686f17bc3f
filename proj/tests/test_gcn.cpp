#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace botfuse;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1, double hi = 1) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

GcnModel small_model(int depth, ResidualMode mode, std::uint64_t seed, int hidden = 6) {
  GcnConfig c;
  c.depth = depth;
  c.hidden_dim = hidden;
  c.residual = mode;
  c.init_gain = 1.0;
  c.seed = seed;
  GcnModel m = init_model(c);
  // Nonzero biases so their gradients are exercised too.
  Rng rng(seed + 99);
  for (auto& b : m.biases) b = random_matrix(b.size(), 1, rng, -0.3, 0.3);
  m.head_bias = random_matrix(2, 1, rng, -0.3, 0.3);
  return m;
}

std::vector<int> random_labels(std::size_t n, Rng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = rng.bernoulli(0.4) ? 1 : 0;
  return y;
}

}  // namespace

TEST(GcnLayer, ZeroWeightsGiveZero) {
  Rng rng(1);
  const auto p = propagation_matrix(6, oracle::random_edges(6, 0.4, rng));
  const Matrix x = random_matrix(6, 5, rng);
  EXPECT_EQ(gcn_layer_forward(p, x, Matrix::Zero(5, 32)), Matrix::Zero(6, 32));
}

TEST(GcnLayer, TwoNodeHandComputation) {
  const auto p = propagation_matrix(2, {{0, 1}, {1, 0}});
  const Matrix x = Matrix::Identity(2, 2);
  const Matrix out = gcn_layer_forward(p, x, Matrix::Identity(2, 2));
  Matrix z(2, 2);
  z << 0, 1, 1, 0;
  EXPECT_EQ(out, 2.0 * z);
}

TEST(GcnLayer, MatchesDenseOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 20;
    const auto edges = oracle::random_edges(n, 0.15, rng);
    const auto p = propagation_matrix(n, edges);
    const Matrix x = random_matrix(20, 7, rng);
    const Matrix w = random_matrix(7, 9, rng);
    for (auto mode : {ResidualMode::PreActivation, ResidualMode::Input}) {
      const auto got = oracle::to_dense(gcn_layer_forward(p, x, w, mode));
      const auto want = oracle::layer(oracle::propagation(n, edges), oracle::to_dense(x), oracle::to_dense(w), nullptr, mode);
      EXPECT_LT(oracle::max_abs_diff(got, want), 1e-12);
    }
  }
}

TEST(GcnLayer, NonnegativeProductDoubles) {
  Rng rng(3);
  const auto p = propagation_matrix(15, oracle::random_edges(15, 0.2, rng));
  const Matrix x = random_matrix(15, 5, rng, 0, 1);
  const Matrix w = random_matrix(5, 8, rng, 0, 1);
  const Matrix z = (p.matrix * x) * w;
  EXPECT_EQ(gcn_layer_forward(p, x, w), 2.0 * z);
}

TEST(GcnLayer, DimensionAndFiniteChecks) {
  const auto p = propagation_matrix(3, {{0, 1}});
  try {
    gcn_layer_forward(p, Matrix::Ones(3, 5), Matrix::Ones(4, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  Matrix bad = Matrix::Ones(3, 5);
  bad(1, 1) = std::nan("");
  try {
    gcn_layer_forward(p, bad, Matrix::Ones(5, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteValue);
  }
}

TEST(GcnForward, ShapesChain) {
  const GcnModel m = init_model(GcnConfig::for_architecture(Architecture::P2P));
  ASSERT_EQ(m.depth(), 24);
  EXPECT_EQ(m.weights[0].rows(), 5);
  for (int k = 0; k < m.depth(); ++k) {
    EXPECT_EQ(m.weights[static_cast<std::size_t>(k)].cols(), 32);
    if (k > 0) { EXPECT_EQ(m.weights[static_cast<std::size_t>(k)].rows(), m.weights[static_cast<std::size_t>(k - 1)].cols()); }
  }
  EXPECT_EQ(m.head.rows(), 32);
  EXPECT_EQ(m.head.cols(), 2);
}

TEST(GcnForward, SingleLayerIsLayerPlusHead) {
  GcnConfig c;
  c.depth = 1;
  c.residual = ResidualMode::PreActivation;
  c.seed = 5;
  const GcnModel m = init_model(c);
  Rng rng(5);
  const auto p = propagation_matrix(10, oracle::random_edges(10, 0.3, rng));
  const Matrix x = random_matrix(10, 5, rng);
  const Matrix h = gcn_layer_forward(p, x, m.weights[0], ResidualMode::PreActivation, &m.biases[0]);
  EXPECT_EQ(forward(m, p, x, false), h);
  Matrix logits = h * m.head;
  logits.rowwise() += m.head_bias.transpose();
  EXPECT_LT((forward(m, p, x, true) - logits).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(GcnForward, DeepReplayOracle) {
  Rng rng(6);
  const std::size_t n = 30;
  const auto edges = oracle::random_edges(n, 0.1, rng);
  const auto p = propagation_matrix(n, edges);
  const Matrix x = random_matrix(30, 5, rng, 0, 1);
  for (auto mode : {ResidualMode::PreActivation, ResidualMode::Input}) {
    GcnConfig c;
    c.depth = 12;
    c.residual = mode;
    c.seed = 6;
    const GcnModel m = init_model(c);
    const auto got = oracle::to_dense(forward(m, p, x, true));
    const auto want = oracle::forward(m, oracle::propagation(n, edges), oracle::to_dense(x), true);
    EXPECT_LT(oracle::max_abs_diff(got, want), 1e-10);
  }
}

TEST(GcnForward, AutomorphicNodesShareEmbeddings) {
  // Star: the leaves are interchangeable.
  const auto p = propagation_matrix(6, {{0, 1}, {0, 2}, {0, 3}, {4, 0}, {5, 0}});
  const GcnModel m = init_model(GcnConfig::for_architecture(Architecture::C2));
  const Matrix h = forward(m, p, Matrix::Ones(6, 5), false);
  for (int leaf = 2; leaf < 6; ++leaf) EXPECT_LT((h.row(leaf) - h.row(1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GcnForward, PermutationEquivariant) {
  Rng rng(7);
  const std::size_t n = 25;
  const auto edges = oracle::random_edges(n, 0.12, rng);
  std::vector<std::uint32_t> perm(n);
  for (std::uint32_t i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<Edge> pe;
  for (auto [u, v] : edges) pe.emplace_back(perm[u], perm[v]);
  const Matrix x = random_matrix(static_cast<Eigen::Index>(n), 5, rng);
  Matrix px(x.rows(), x.cols());
  for (std::size_t i = 0; i < n; ++i) px.row(perm[i]) = x.row(static_cast<Eigen::Index>(i));
  const GcnModel m = init_model(GcnConfig::for_architecture(Architecture::C2));
  const Matrix a = forward(m, propagation_matrix(n, edges), x, true);
  const Matrix b = forward(m, propagation_matrix(n, pe), px, true);
  for (std::size_t i = 0; i < n; ++i) EXPECT_LT((a.row(static_cast<Eigen::Index>(i)) - b.row(perm[i])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GcnForward, DeterministicInit) {
  GcnConfig c = GcnConfig::for_architecture(Architecture::C2);
  c.seed = 42;
  EXPECT_TRUE(init_model(c) == init_model(c));
  EXPECT_EQ(serialize_model(init_model(c)), serialize_model(init_model(c)));
  GcnConfig d = c;
  d.seed = 43;
  EXPECT_FALSE(init_model(c) == init_model(d));
}

TEST(GcnBackward, FiniteDifferences) {
  Rng rng(11);
  for (int depth : {2, 4}) {
    for (auto mode : {ResidualMode::PreActivation, ResidualMode::Input}) {
      const std::size_t n = 10;
      const auto edges = oracle::random_edges(n, 0.3, rng);
      const auto p = propagation_matrix(n, edges);
      const auto dense_p = oracle::propagation(n, edges);
      const Matrix x = random_matrix(10, 5, rng);
      const auto dense_x = oracle::to_dense(x);
      const auto y = random_labels(n, rng);
      std::vector<std::uint8_t> mask(n, 1);
      mask[3] = 0;
      GcnModel m = small_model(depth, mode, static_cast<std::uint64_t>(depth) * 10 + static_cast<int>(mode));
      const Gradients g = backward(m, p, x, y, mask);
      EXPECT_NEAR(g.loss, oracle::loss(m, dense_p, dense_x, y, mask), 1e-12);
      const double eps = 1e-5;
      auto check = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + eps;
        const double up = oracle::loss(m, dense_p, dense_x, y, mask);
        param = keep - eps;
        const double down = oracle::loss(m, dense_p, dense_x, y, mask);
        param = keep;
        EXPECT_LT(oracle::rel_error(analytic, (up - down) / (2 * eps)), 1e-4);
      };
      for (std::size_t k = 0; k < m.weights.size(); ++k) {
        for (Eigen::Index i = 0; i < m.weights[k].size(); ++i) check(m.weights[k].data()[i], g.weights[k].data()[i]);
        for (Eigen::Index i = 0; i < m.biases[k].size(); ++i) check(m.biases[k].data()[i], g.biases[k].data()[i]);
      }
      for (Eigen::Index i = 0; i < m.head.size(); ++i) check(m.head.data()[i], g.head.data()[i]);
      for (Eigen::Index i = 0; i < m.head_bias.size(); ++i) check(m.head_bias.data()[i], g.head_bias.data()[i]);
    }
  }
}

TEST(GcnBackward, SaturatedSoftmaxHasNoGradient) {
  GcnConfig c;
  c.depth = 2;
  c.hidden_dim = 4;
  c.seed = 1;
  GcnModel m = init_model(c);
  // Head reads only the bias: huge margin toward the true class of every node.
  m.head.setZero();
  m.head_bias << 60.0, -60.0;
  const auto p = propagation_matrix(4, {{0, 1}, {2, 3}});
  const Gradients g = backward(m, p, Matrix::Ones(4, 5), {0, 0, 0, 0}, {1, 1, 1, 1});
  double sq = g.head.squaredNorm() + g.head_bias.squaredNorm();
  for (std::size_t k = 0; k < g.weights.size(); ++k) sq += g.weights[k].squaredNorm() + g.biases[k].squaredNorm();
  EXPECT_LT(std::sqrt(sq), 1e-6);
}

TEST(GcnBackward, MaskedLabelsDoNotMatter) {
  Rng rng(12);
  const auto p = propagation_matrix(8, oracle::random_edges(8, 0.3, rng));
  const Matrix x = random_matrix(8, 5, rng);
  const GcnModel m = small_model(3, ResidualMode::Input, 3);
  std::vector<int> y = {0, 1, 0, 1, 0, 1, 0, 1};
  const std::vector<std::uint8_t> mask = {1, 1, 0, 1, 0, 1, 1, 0};
  const Gradients a = backward(m, p, x, y, mask);
  y[2] = 1, y[4] = 1, y[7] = 0;
  const Gradients b = backward(m, p, x, y, mask);
  EXPECT_EQ(a.loss, b.loss);
  for (std::size_t k = 0; k < a.weights.size(); ++k) EXPECT_EQ(a.weights[k], b.weights[k]);
  EXPECT_EQ(a.head, b.head);
}

TEST(GcnBackward, FrozenAndEmptyMaskErrors) {
  GcnModel m = small_model(2, ResidualMode::Input, 4);
  const auto p = propagation_matrix(3, {{0, 1}});
  try {
    backward(m, p, Matrix::Ones(3, 5), {0, 1, 0}, {0, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyMask);
  }
  m.frozen = true;
  try {
    backward(m, p, Matrix::Ones(3, 5), {0, 1, 0}, {1, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FrozenModel);
  }
}

TEST(ModelFormat, RoundTrip) {
  for (auto arch : {Architecture::C2, Architecture::P2P}) {
    GcnConfig c = GcnConfig::for_architecture(arch);
    c.seed = 17;
    c.self_loops = arch == Architecture::P2P;
    GcnModel m = init_model(c);
    Rng rng(17);
    for (auto& b : m.biases) b = random_matrix(b.size(), 1, rng);
    m.frozen = true;
    const Bytes bytes = serialize_model(m);
    const GcnModel back = deserialize_model(bytes);
    EXPECT_TRUE(back == m);
    EXPECT_EQ(serialize_model(back), bytes);
  }
}

TEST(ModelFormat, CorruptionDetected) {
  const Bytes bytes = serialize_model(init_model(GcnConfig{}));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      deserialize_model(Bytes(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)));
      ADD_FAILURE() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::CorruptPayload);
    }
  }
  Bytes flipped = bytes;
  flipped[100] ^= 0x10;
  try {
    deserialize_model(flipped);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptPayload);
  }
}

TEST(ModelFormat, VersionMismatch) {
  Bytes bytes = serialize_model(init_model(GcnConfig{}));
  Bytes body(bytes.begin(), bytes.end() - 8);
  body[8] = 2;  // version follows the 8-byte magic
  ByteWriter w;
  w.raw(std::string_view(reinterpret_cast<const char*>(body.data()), body.size()));
  try {
    deserialize_model(w.finish());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VersionMismatch);
  }
}

TEST(ModelFormat, DepthMismatchRefusedByPipeline) {
  GcnModel c2 = init_model(GcnConfig::for_architecture(Architecture::C2));
  GcnModel p2p = init_model(GcnConfig::for_architecture(Architecture::P2P));
  c2.frozen = p2p.frozen = true;
  const Bytes a = serialize_model(c2), b = serialize_model(p2p);
  EXPECT_NE(Bytes(a.begin(), a.begin() + 30), Bytes(b.begin(), b.begin() + 30));
  EXPECT_NO_THROW(check_model(deserialize_model(a), PipelineConfig::for_architecture(Architecture::C2)));
  for (const auto& [model, config] : {std::pair{deserialize_model(a), PipelineConfig::for_architecture(Architecture::P2P)},
                                      std::pair{deserialize_model(b), PipelineConfig::for_architecture(Architecture::C2)}}) {
    try {
      check_model(model, config);
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ConfigMismatch);
    }
  }
  PipelineConfig wrong_depth = PipelineConfig::for_architecture(Architecture::C2);
  wrong_depth.depth_override = 24;
  EXPECT_THROW(check_model(c2, wrong_depth), Error);
}
