#include "dmmd/diffusion.hpp"

#include "dmmd/error.hpp"

#include <cmath>

namespace dmmd {

DiffusionSchedule::DiffusionSchedule(int levels, double beta_start, double beta_end)
    : beta_start_(beta_start), beta_end_(beta_end) {
  if (levels < 2) throw ConfigError("schedule needs at least two levels");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("schedule requires 0 < beta_start <= beta_end < 1");
  alpha_bar_.resize(static_cast<std::size_t>(levels));
  double product = 1.0;
  for (int l = 0; l < levels; ++l) {
    const double beta = beta_start + (beta_end - beta_start) * l / (levels - 1.0);
    product *= 1.0 - beta;
    alpha_bar_[static_cast<std::size_t>(l)] = product;
  }
}

int DiffusionSchedule::index(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("noise level must lie in [0, 1]");
  return static_cast<int>(std::lround(t * (levels() - 1)));
}

std::pair<double, double> DiffusionSchedule::coefficients(double t) const {
  const int l = index(t);
  if (t == 0.0) return {1.0, 0.0};
  if (t == 1.0) return {0.0, 1.0};
  const double ab = alpha_bar_[static_cast<std::size_t>(l)];
  return {std::sqrt(ab), std::sqrt(1.0 - ab)};
}

DiffusionSchedule make_schedule(int levels, double beta_start, double beta_end) {
  return DiffusionSchedule(levels, beta_start, beta_end);
}

ParticleSet noise(const ParticleSet& x0, double t, const ParticleSet& eps,
                  const DiffusionSchedule& schedule) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw ShapeError("noise draw must match the clean batch shape");
  const auto [a, b] = schedule.coefficients(t);
  return a * x0 + b * eps;
}

} // namespace dmmd
