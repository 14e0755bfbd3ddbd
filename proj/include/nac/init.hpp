#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/QR>

#include "nac/sparse.hpp"

namespace nac {

using Rng = std::mt19937_64;

enum class InitScheme { Orthogonal, KaimingNormal, KaimingUniform };

inline InitScheme parse_init_scheme(std::string_view name) {
  if (name == "orthogonal") return InitScheme::Orthogonal;
  if (name == "kaiming-normal" || name == "kaiming_normal") return InitScheme::KaimingNormal;
  if (name == "kaiming-uniform" || name == "kaiming_uniform") return InitScheme::KaimingUniform;
  throw std::invalid_argument("unknown init scheme '" + std::string(name) + "'");
}

inline std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::Orthogonal: return "orthogonal";
    case InitScheme::KaimingNormal: return "kaiming-normal";
    case InitScheme::KaimingUniform: return "kaiming-uniform";
  }
  return "?";
}

// splitmix64 finalizer; derives independent stream seeds from one run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Orthonormal columns when rows >= cols, orthonormal rows otherwise.
// QR of a Gaussian matrix with the sign of diag(R) folded into Q, which makes
// the square case Haar-distributed.
inline Matrix orthogonal_matrix(Index rows, Index cols, Rng& rng) {
  const bool tall = rows >= cols;
  const Index big = tall ? rows : cols;
  const Index small = tall ? cols : rows;
  Eigen::MatrixXd g = gaussian_matrix(big, small, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (Index j = 0; j < small; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  if (tall) return q;
  return q.transpose();
}

// Weights act as H * W, so fan_in is the row count.
inline Matrix kaiming_normal_matrix(Index rows, Index cols, Rng& rng) {
  return gaussian_matrix(rows, cols, rng, std::sqrt(2.0 / static_cast<double>(rows)));
}

inline Matrix kaiming_uniform_matrix(Index rows, Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows));
  std::uniform_real_distribution<double> uni(-bound, bound);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uni(rng);
  return m;
}

inline Matrix init_matrix(InitScheme scheme, Index rows, Index cols, Rng& rng) {
  if (rows < 1 || cols < 1) throw ShapeError("init_matrix: empty shape " + shape_string(rows, cols));
  switch (scheme) {
    case InitScheme::Orthogonal: return orthogonal_matrix(rows, cols, rng);
    case InitScheme::KaimingNormal: return kaiming_normal_matrix(rows, cols, rng);
    case InitScheme::KaimingUniform: return kaiming_uniform_matrix(rows, cols, rng);
  }
  throw std::logic_error("init_matrix: bad scheme");
}

}  // namespace nac
