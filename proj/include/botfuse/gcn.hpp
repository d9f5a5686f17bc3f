#pragma once

// Residual graph convolution stack with an exact reverse-mode backward pass.
//
// Layer k: Z = P X W_k + b_k, output Z + ReLU(Z) or X + ReLU(Z) depending on
// the residual mode. The head (hidden -> 2 logits) is only used while
// pretraining; detection reads the last hidden activations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "botfuse/error.hpp"
#include "botfuse/graph.hpp"
#include "botfuse/normalize.hpp"
#include "botfuse/rng.hpp"
#include "botfuse/serialize.hpp"

namespace botfuse {

enum class ResidualMode : std::uint8_t {
  PreActivation = 0,  // Z + ReLU(Z)
  Input = 1,          // X + ReLU(Z), X zero-padded when the layer widens
};

inline const char* to_string(ResidualMode m) { return m == ResidualMode::Input ? "input" : "pre_activation"; }

inline ResidualMode parse_residual(std::string_view s) {
  if (s == "input") return ResidualMode::Input;
  if (s == "pre_activation") return ResidualMode::PreActivation;
  throw Error(ErrorCode::InvalidArgument, "unknown residual mode '" + std::string(s) + "'");
}

struct GcnConfig {
  Architecture architecture = Architecture::C2;
  int depth = 12;
  int input_dim = static_cast<int>(kFlowFeatureDim);
  int hidden_dim = 32;
  // Z + ReLU(Z) is closer to the layer wording, but over 12+ layers it washes
  // the flow features out of the embedding; the input shortcut keeps them.
  ResidualMode residual = ResidualMode::Input;
  bool self_loops = false;
  // Without a bias, an all-ones input keeps every layer rank one (P is
  // nonnegative), so the stack could only threshold (P^N 1)_i.
  bool layer_bias = true;
  NormalizationMode normalization = NormalizationMode::PerVector;
  // Glorot bound multiplier. 1/sqrt(2.5) would preserve activation scale
  // through Z + ReLU(Z), but Adam at lr 0.003 then oscillates on 24-layer
  // stacks; a smaller start lets the biases carry the early signal.
  double init_gain = 0.3;
  std::uint64_t seed = 0;

  static GcnConfig for_architecture(Architecture a) {
    GcnConfig c;
    c.architecture = a;
    c.depth = default_depth(a);
    return c;
  }
};

inline constexpr int kNumClasses = 2;

struct GcnModel {
  GcnConfig config;
  std::vector<Matrix> weights;  // W_0 (input x hidden), then hidden x hidden
  std::vector<Vector> biases;   // one per layer, all zero when layer_bias is off
  Matrix head;                  // hidden x 2
  Vector head_bias;             // 2
  bool frozen = false;

  int depth() const { return static_cast<int>(weights.size()); }
  int hidden_dim() const { return config.hidden_dim; }

  PropagationOptions propagation_options() const { return {config.self_loops}; }

  bool operator==(const GcnModel& o) const {
    if (frozen != o.frozen || weights.size() != o.weights.size()) return false;
    if (config.architecture != o.config.architecture || config.depth != o.config.depth ||
        config.input_dim != o.config.input_dim || config.hidden_dim != o.config.hidden_dim ||
        config.residual != o.config.residual || config.self_loops != o.config.self_loops ||
        config.layer_bias != o.config.layer_bias || config.normalization != o.config.normalization) {
      return false;
    }
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] != o.weights[k] || biases[k] != o.biases[k]) return false;
    }
    return head == o.head && head_bias == o.head_bias;
  }
};

namespace detail {

inline Matrix glorot(int rows, int cols, double gain, Rng& rng) {
  const double bound = gain * std::sqrt(6.0 / (rows + cols));
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  return w;
}

inline void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::NonFiniteValue, what);
}

}  // namespace detail

inline GcnModel init_model(const GcnConfig& config) {
  if (config.depth < 1 || config.input_dim < 1 || config.hidden_dim < 1) {
    throw Error(ErrorCode::InvalidArgument, "depth and dimensions must be positive");
  }
  GcnModel m;
  m.config = config;
  Rng rng(mix_seed(config.seed, 0x6c617965));
  for (int k = 0; k < config.depth; ++k) {
    const int in = k == 0 ? config.input_dim : config.hidden_dim;
    m.weights.push_back(detail::glorot(in, config.hidden_dim, config.init_gain, rng));
    m.biases.push_back(Vector::Zero(config.hidden_dim));
  }
  m.head = detail::glorot(config.hidden_dim, kNumClasses, 1.0, rng);
  m.head_bias = Vector::Zero(kNumClasses);
  return m;
}

inline Matrix apply_residual(const Matrix& x, const Matrix& z, ResidualMode mode) {
  if (mode == ResidualMode::PreActivation) return z + z.cwiseMax(0.0);
  // Zero-padded identity shortcut when the layer widens (x narrower than z).
  Matrix y = z.cwiseMax(0.0);
  const auto shared = std::min(x.cols(), z.cols());
  y.leftCols(shared) += x.leftCols(shared);
  return y;
}

/// One residual GCN layer: Z = P X W (+ b), then the residual merge.
inline Matrix gcn_layer_forward(const PropagationMatrix& p, const Matrix& x, const Matrix& w,
                                ResidualMode mode = ResidualMode::PreActivation, const Vector* bias = nullptr) {
  if (x.rows() != p.size() || x.cols() != w.rows() || (bias && bias->size() != w.cols())) {
    throw Error(ErrorCode::DimensionMismatch, "gcn layer operands do not conform");
  }
  detail::check_finite(x, "non-finite layer input");
  Matrix z = (p.matrix * x) * w;
  if (bias) z.rowwise() += bias->transpose();
  return apply_residual(x, z, mode);
}

/// Intermediate values kept for the backward pass.
struct ForwardTrace {
  std::vector<Matrix> inputs;      // X_k fed into layer k
  std::vector<Matrix> propagated;  // P X_k
  std::vector<Matrix> pre;         // Z_k
  Matrix hidden;                   // output of the last layer
  Matrix logits;                   // empty unless the head ran
};

inline ForwardTrace forward_trace(const GcnModel& model, const PropagationMatrix& p, const Matrix& x0,
                                  bool with_head) {
  if (x0.cols() != model.config.input_dim || x0.rows() != p.size()) {
    throw Error(ErrorCode::DimensionMismatch, "input features must be n x " + std::to_string(model.config.input_dim));
  }
  detail::check_finite(x0, "non-finite input features");
  ForwardTrace t;
  t.inputs.reserve(model.weights.size());
  t.propagated.reserve(model.weights.size());
  t.pre.reserve(model.weights.size());
  Matrix x = x0;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    const auto& w = model.weights[k];
    if (x.cols() != w.rows()) throw Error(ErrorCode::DimensionMismatch, "weight chain does not conform");
    Matrix px = p.matrix * x;
    Matrix z = px * w;
    if (model.config.layer_bias) z.rowwise() += model.biases[k].transpose();
    Matrix y = apply_residual(x, z, model.config.residual);
    t.inputs.push_back(std::move(x));
    t.propagated.push_back(std::move(px));
    t.pre.push_back(std::move(z));
    x = std::move(y);
  }
  t.hidden = std::move(x);
  if (with_head) {
    t.logits = t.hidden * model.head;
    t.logits.rowwise() += model.head_bias.transpose();
  }
  return t;
}

/// Final hidden activations (n x hidden) or, with the head, n x 2 logits.
inline Matrix forward(const GcnModel& model, const PropagationMatrix& p, const Matrix& x0, bool with_head) {
  // Inference does not need the trace; run the cheap loop.
  if (x0.cols() != model.config.input_dim || x0.rows() != p.size()) {
    throw Error(ErrorCode::DimensionMismatch, "input features must be n x " + std::to_string(model.config.input_dim));
  }
  detail::check_finite(x0, "non-finite input features");
  Matrix x = x0;
  for (std::size_t k = 0; k < model.weights.size(); ++k) {
    const auto& w = model.weights[k];
    if (x.cols() != w.rows()) throw Error(ErrorCode::DimensionMismatch, "weight chain does not conform");
    Matrix z = (p.matrix * x) * w;
    if (model.config.layer_bias) z.rowwise() += model.biases[k].transpose();
    x = apply_residual(x, z, model.config.residual);
  }
  if (!with_head) return x;
  Matrix logits = x * model.head;
  logits.rowwise() += model.head_bias.transpose();
  return logits;
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;  // zero when the model has layer_bias off
  Matrix head;
  Vector head_bias;
  double loss = 0.0;
};

/// Mean cross-entropy of the softmax over `logits`, restricted to mask[i] != 0.
/// Optionally writes d loss / d logits.
inline double masked_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                   const std::vector<std::uint8_t>& mask, Matrix* grad = nullptr) {
  const auto n = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n || static_cast<Eigen::Index>(mask.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "labels and mask must have one entry per node");
  }
  std::size_t count = 0;
  for (auto m : mask) count += m != 0;
  if (count == 0) throw Error(ErrorCode::EmptyMask, "training mask selects no nodes");
  if (grad) *grad = Matrix::Zero(n, logits.cols());
  double loss = 0.0;
  const double scale = 1.0 / static_cast<double>(count);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw Error(ErrorCode::InvalidArgument, "label out of range");
    const double mx = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) sum += std::exp(logits(i, c) - mx);
    const double log_z = mx + std::log(sum);
    loss += (log_z - logits(i, y)) * scale;
    if (grad) {
      for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        (*grad)(i, c) = (std::exp(logits(i, c) - log_z) - (c == y ? 1.0 : 0.0)) * scale;
      }
    }
  }
  return loss;
}

/// Reverse-mode gradients of the masked mean cross-entropy with respect to
/// every weight, the head and its bias.
inline Gradients backward(const GcnModel& model, const PropagationMatrix& p, const Matrix& x0,
                          const std::vector<int>& labels, const std::vector<std::uint8_t>& mask,
                          Matrix* logits_out = nullptr) {
  if (model.frozen) throw Error(ErrorCode::FrozenModel, "gradients requested on a frozen model");
  ForwardTrace t = forward_trace(model, p, x0, true);

  Gradients g;
  Matrix grad_logits;
  g.loss = masked_cross_entropy(t.logits, labels, mask, &grad_logits);
  g.head = t.hidden.transpose() * grad_logits;
  g.head_bias = grad_logits.colwise().sum().transpose();
  Matrix grad_y = grad_logits * model.head.transpose();
  if (logits_out) *logits_out = t.logits;

  g.weights.resize(model.weights.size());
  g.biases.resize(model.weights.size());
  for (std::size_t k = model.weights.size(); k-- > 0;) {
    const Matrix& z = t.pre[k];
    const Matrix& x = t.inputs[k];
    Matrix grad_z;
    Matrix grad_x;
    if (model.config.residual == ResidualMode::PreActivation) {
      grad_z = grad_y.array() * (1.0 + (z.array() > 0.0).cast<double>());
    } else {
      grad_z = grad_y.array() * (z.array() > 0.0).cast<double>();
    }
    g.weights[k] = t.propagated[k].transpose() * grad_z;
    g.biases[k] = model.config.layer_bias ? Vector(grad_z.colwise().sum().transpose())
                                          : Vector::Zero(grad_z.cols());
    if (k == 0) break;
    // P is symmetric, so P^T (G_Z W^T) = P (G_Z W^T).
    grad_x = p.matrix * (grad_z * model.weights[k].transpose());
    if (model.config.residual == ResidualMode::Input) {
      const auto shared = std::min(x.cols(), z.cols());
      grad_x.leftCols(shared) += grad_y.leftCols(shared);
    }
    grad_y = std::move(grad_x);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Model file format (little-endian):
//   "BFGCN001" magic, u32 version, u8 architecture, u8 frozen, u8 residual,
//   u8 self_loops, u8 layer_bias, u8 normalization, u32 depth, u32 input_dim, u32 hidden_dim,
//   u32 classes, f64 init_gain, u64 seed, per layer W_k (row-major) then b_k,
//   head, head bias,
//   u64 FNV-1a checksum.

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::string_view kModelMagic = "BFGCN001";

inline Bytes serialize_model(const GcnModel& m) {
  ByteWriter w;
  w.raw(kModelMagic);
  w.u32(kModelFormatVersion);
  w.u8(static_cast<std::uint8_t>(m.config.architecture));
  w.u8(m.frozen ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(m.config.residual));
  w.u8(m.config.self_loops ? 1 : 0);
  w.u8(m.config.layer_bias ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(m.config.normalization));
  w.u32(static_cast<std::uint32_t>(m.weights.size()));
  w.u32(static_cast<std::uint32_t>(m.config.input_dim));
  w.u32(static_cast<std::uint32_t>(m.config.hidden_dim));
  w.u32(kNumClasses);
  w.f64(m.config.init_gain);
  w.u64(m.config.seed);
  auto put = [&](const auto& mat) {
    for (Eigen::Index i = 0; i < mat.size(); ++i) w.f64(mat.data()[i]);
  };
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    put(m.weights[k]);
    put(m.biases[k]);
  }
  put(m.head);
  put(m.head_bias);
  return w.finish();
}

inline GcnModel deserialize_model(const Bytes& bytes) {
  ByteReader r(bytes);
  if (!r.expect(kModelMagic)) throw Error(ErrorCode::CorruptPayload, "not a model file");
  const auto version = r.u32();
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "model format version " + std::to_string(version));
  }
  GcnModel m;
  const auto arch = r.u8();
  const auto frozen = r.u8();
  const auto residual = r.u8();
  const auto self_loops = r.u8();
  const auto layer_bias = r.u8();
  const auto norm = r.u8();
  if (arch > 1 || frozen > 1 || residual > 1 || self_loops > 1 || layer_bias > 1 || norm > 2) {
    throw Error(ErrorCode::CorruptPayload, "invalid model flags");
  }
  m.config.architecture = static_cast<Architecture>(arch);
  m.frozen = frozen == 1;
  m.config.residual = static_cast<ResidualMode>(residual);
  m.config.self_loops = self_loops == 1;
  m.config.layer_bias = layer_bias == 1;
  m.config.normalization = static_cast<NormalizationMode>(norm);
  const auto depth = r.u32();
  const auto input_dim = r.u32();
  const auto hidden = r.u32();
  const auto classes = r.u32();
  if (depth == 0 || input_dim == 0 || hidden == 0 || classes != kNumClasses || depth > 4096 || input_dim > 65536 ||
      hidden > 65536) {
    throw Error(ErrorCode::CorruptPayload, "invalid model dimensions");
  }
  m.config.depth = static_cast<int>(depth);
  m.config.input_dim = static_cast<int>(input_dim);
  m.config.hidden_dim = static_cast<int>(hidden);
  m.config.init_gain = r.f64();
  m.config.seed = r.u64();
  const std::uint64_t expected =
      (static_cast<std::uint64_t>(input_dim) * hidden + static_cast<std::uint64_t>(depth - 1) * hidden * hidden +
       static_cast<std::uint64_t>(depth) * hidden +
       static_cast<std::uint64_t>(hidden) * classes + classes) *
      8;
  if (r.remaining() != expected) throw Error(ErrorCode::CorruptPayload, "payload size does not match header");
  auto get = [&](auto& mat) {
    for (Eigen::Index i = 0; i < mat.size(); ++i) mat.data()[i] = r.f64();
  };
  for (std::uint32_t k = 0; k < depth; ++k) {
    Matrix wk(k == 0 ? input_dim : hidden, hidden);
    get(wk);
    m.weights.push_back(std::move(wk));
    Vector bk(hidden);
    get(bk);
    m.biases.push_back(std::move(bk));
  }
  m.head.resize(hidden, classes);
  get(m.head);
  m.head_bias.resize(classes);
  get(m.head_bias);
  return m;
}

inline void save_model(const std::filesystem::path& path, const GcnModel& m) { write_bytes(path, serialize_model(m)); }
inline GcnModel load_model(const std::filesystem::path& path) { return deserialize_model(read_bytes(path)); }

}  // namespace botfuse
