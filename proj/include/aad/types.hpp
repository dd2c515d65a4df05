#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace aad {

using Index = std::size_t;

template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorT<double>;
using Matrix = MatrixT<double>;

/// Per-instance ensemble scores: one nonzero per tree (leaf members) or a
/// dense vector of member scores for small ensembles.
using SparseScoreVector = Eigen::SparseVector<double>;
using SparseScoreMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

using WeightVector = Vector;

enum class Label : std::int8_t { nominal = -1, anomaly = 1 };

inline int sign(Label y) { return static_cast<int>(y); }

inline const char* to_string(Label y) {
  return y == Label::anomaly ? "anomaly" : "nominal";
}

/// Raised when a caller breaks a documented precondition (dimension
/// mismatch, empty input where one is required, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// 64-bit FNV-1a over raw bytes; used for history snapshot hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t bytes,
                           std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

/// Deterministic seed derivation (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace aad
