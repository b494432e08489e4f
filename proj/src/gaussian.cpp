#include "dmmd/gaussian.hpp"

#include "dmmd/error.hpp"

#include <cmath>

namespace dmmd {

namespace {

constexpr double kDivergenceNorm = 1e6;

void check_scales(double alpha, double sigma) {
  if (!(alpha > 0.0)) throw ConfigError("kernel bandwidth alpha must be positive");
  if (!(sigma > 0.0)) throw ConfigError("gaussian scale sigma must be positive");
}

void check_dim(const Eigen::Ref<const Vector>& mu0, int d) {
  if (d < 1) throw ConfigError("dimension must be >= 1");
  if (mu0.size() != d) throw ShapeError("mean vector length does not match dimension");
}

// Gradient at a given s = alpha^2 + 2 sigma^2; alpha = 0 is allowed here.
Vector grad_at(double s, const Eigen::Ref<const Vector>& mu0, int d) {
  return 2.0 * std::pow(s, -0.5 * d - 1.0) * std::exp(-mu0.squaredNorm() / (2.0 * s)) * mu0;
}

} // namespace

double gaussian_cross_term(double alpha, double sigma, const Eigen::Ref<const Vector>& mu0,
                           const Eigen::Ref<const Vector>& mu1) {
  check_scales(alpha, sigma);
  if (mu0.size() != mu1.size() || mu0.size() == 0) throw ShapeError("mean vectors mismatch");
  const double d = static_cast<double>(mu0.size());
  const double a2 = alpha * alpha;
  const double s2 = sigma * sigma;
  const double k2 = 1.0 / (1.0 / s2 + 1.0 / a2);
  const Vector hat1 = (a2 * mu1 + k2 * mu0) / (k2 + a2);
  const Vector hat0 = (a2 * mu0 + k2 * mu1) / (k2 + a2);
  const double prefactor = std::pow(a2 * s2 * (1.0 / k2 + 1.0 / a2), -0.5 * d);
  const double exponent = hat0.squaredNorm() / (2.0 * k2) + hat1.squaredNorm() / (2.0 * k2) -
                          hat0.dot(hat1) / a2 - mu0.squaredNorm() / (2.0 * s2) -
                          mu1.squaredNorm() / (2.0 * s2);
  return prefactor * std::exp(exponent);
}

double gaussian_mmd2(double alpha, double sigma, const Eigen::Ref<const Vector>& mu0, int d) {
  check_scales(alpha, sigma);
  check_dim(mu0, d);
  const double s = alpha * alpha + 2.0 * sigma * sigma;
  return 2.0 * std::pow(s, -0.5 * d) * -std::expm1(-mu0.squaredNorm() / (2.0 * s));
}

Vector gaussian_mmd2_grad_mu(double alpha, double sigma, const Eigen::Ref<const Vector>& mu0,
                             int d) {
  check_scales(alpha, sigma);
  check_dim(mu0, d);
  return grad_at(alpha * alpha + 2.0 * sigma * sigma, mu0, d);
}

double optimal_bandwidth(double mu_norm, double sigma, int d) {
  if (sigma < 0.0) throw ConfigError("sigma must be non-negative");
  if (d < 1) throw ConfigError("dimension must be >= 1");
  if (mu_norm < 0.0) throw ConfigError("mean norm must be non-negative");
  return std::sqrt(std::max(0.0, mu_norm * mu_norm / (d + 2.0) - 2.0 * sigma * sigma));
}

MeanFlowResult simulate_mean_flow(const Eigen::Ref<const Vector>& mu_init, double sigma, int d,
                                  double eta, int steps, MeanFlowMode mode, double alpha) {
  check_dim(mu_init, d);
  if (!(sigma > 0.0)) throw ConfigError("gaussian scale sigma must be positive");
  if (steps < 1) throw ConfigError("mean flow needs at least one step");
  if (!(eta > 0.0)) throw ConfigError("step size must be positive");
  if (mode == MeanFlowMode::Fixed && !(alpha > 0.0))
    throw ConfigError("fixed bandwidth must be positive");

  MeanFlowResult out;
  Vector mu = mu_init;
  out.mu_norm.push_back(mu.norm());
  for (int step = 0; step < steps; ++step) {
    const double a =
        mode == MeanFlowMode::Adaptive ? optimal_bandwidth(mu.norm(), sigma, d) : alpha;
    mu -= eta * grad_at(a * a + 2.0 * sigma * sigma, mu, d);
    out.alpha.push_back(a);
    out.mu_norm.push_back(mu.norm());
    if (!std::isfinite(out.mu_norm.back()) || out.mu_norm.back() > kDivergenceNorm) {
      out.diverged = true;
      break;
    }
  }
  return out;
}

std::string to_string(MeanFlowMode mode) {
  return mode == MeanFlowMode::Adaptive ? "adaptive" : "fixed";
}

MeanFlowMode mean_flow_mode_from_string(const std::string& name) {
  if (name == "adaptive") return MeanFlowMode::Adaptive;
  if (name == "fixed") return MeanFlowMode::Fixed;
  throw ConfigError("unknown mean-flow mode '" + name + "'");
}

} // namespace dmmd
