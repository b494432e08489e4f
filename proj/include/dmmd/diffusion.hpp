#pragma once

#include "dmmd/types.hpp"

#include <utility>
#include <vector>

namespace dmmd {

/// Variance-preserving forward process x_t = alpha_t x_0 + beta_t eps on a discrete
/// table of L levels with a linear beta ramp.
class DiffusionSchedule {
public:
  DiffusionSchedule(int levels, double beta_start, double beta_end);

  int levels() const { return static_cast<int>(alpha_bar_.size()); }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  const std::vector<double>& alpha_bar() const { return alpha_bar_; }

  /// Table index used for a continuous t: round(t * (L - 1)).
  int index(double t) const;
  /// (alpha_t, beta_t); t = 0 gives (1, 0) and t = 1 gives (0, 1) exactly.
  std::pair<double, double> coefficients(double t) const;

private:
  double beta_start_;
  double beta_end_;
  std::vector<double> alpha_bar_;
};

DiffusionSchedule make_schedule(int levels, double beta_start, double beta_end);

/// alpha_t x0 + beta_t eps, elementwise.
ParticleSet noise(const ParticleSet& x0, double t, const ParticleSet& eps,
                  const DiffusionSchedule& schedule);

} // namespace dmmd
