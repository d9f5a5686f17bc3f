#pragma once

// Min-max scaling of fused features into [0, 100].

#include <algorithm>
#include <cstdint>
#include <string_view>

#include "botfuse/error.hpp"
#include "botfuse/graph.hpp"

namespace botfuse {

enum class NormalizationMode : std::uint8_t {
  PerVector = 0,     // extremes taken within each node's own vector
  PerDimension = 1,  // extremes taken per column over the window's nodes
  None = 2,
};

inline const char* to_string(NormalizationMode m) {
  switch (m) {
    case NormalizationMode::PerVector: return "per_vector";
    case NormalizationMode::PerDimension: return "per_dimension";
    default: return "none";
  }
}

inline NormalizationMode parse_normalization(std::string_view s) {
  if (s == "per_vector") return NormalizationMode::PerVector;
  if (s == "per_dimension") return NormalizationMode::PerDimension;
  if (s == "none") return NormalizationMode::None;
  throw Error(ErrorCode::InvalidArgument, "unknown normalization mode '" + std::string(s) + "'");
}

/// (x - min) / (max - min) * 100 over one vector. A constant vector maps to
/// all zeros.
inline Vector normalize_fused(const Vector& v) {
  if (v.size() == 0) throw Error(ErrorCode::InvalidArgument, "cannot normalize an empty vector");
  if (!v.allFinite()) throw Error(ErrorCode::NonFiniteValue, "non-finite value in fused features");
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  if (!(hi > lo)) return Vector::Zero(v.size());
  Vector out = (v.array() - lo) / (hi - lo) * 100.0;
  // Guard against rounding pushing the extremes a hair outside the range.
  return out.cwiseMax(0.0).cwiseMin(100.0);
}

/// Applies the chosen mode to an n x d embedding matrix.
inline Matrix normalize_rows(const Matrix& x, NormalizationMode mode) {
  if (mode == NormalizationMode::None) return x;
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteValue, "non-finite value in fused features");
  Matrix out(x.rows(), x.cols());
  if (mode == NormalizationMode::PerVector) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = normalize_fused(x.row(i).transpose()).transpose();
    return out;
  }
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (x.rows() == 0) break;
    out.col(c) = normalize_fused(x.col(c));
  }
  return out;
}

}  // namespace botfuse
