#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace dmmd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// N x d particle positions, one particle per row.
using ParticleSet = Eigen::MatrixXd;

using Rng = std::mt19937_64;

/// Standard normal N x d draw, filled row by row.
inline ParticleSet standard_normal(Eigen::Index n, Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ParticleSet out(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) out(i, j) = normal(rng);
  return out;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

} // namespace dmmd
