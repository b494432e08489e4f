#pragma once

#include "dmmd/types.hpp"

#include <string>
#include <vector>

namespace dmmd {

struct IsoGaussian {
  Vector mean;
  double sigma = 1.0;
};

/// E[k_alpha(X, Y)] for X ~ N(mu0, sigma^2 I), Y ~ N(mu1, sigma^2 I) and the
/// normalized Gaussian kernel k_alpha = alpha^(-d) exp(-||x - y||^2 / (2 alpha^2)).
double gaussian_cross_term(double alpha, double sigma, const Eigen::Ref<const Vector>& mu0,
                           const Eigen::Ref<const Vector>& mu1);

/// MMD^2 between N(0, sigma^2 I) and N(mu0, sigma^2 I) under k_alpha, d = mu0.size().
double gaussian_mmd2(double alpha, double sigma, const Eigen::Ref<const Vector>& mu0, int d);

/// Gradient of gaussian_mmd2 with respect to mu0.
Vector gaussian_mmd2_grad_mu(double alpha, double sigma, const Eigen::Ref<const Vector>& mu0,
                             int d);

/// Bandwidth maximizing ||grad_mu0 MMD^2||: sqrt(max(0, m^2 / (d + 2) - 2 sigma^2)).
double optimal_bandwidth(double mu_norm, double sigma, int d);

enum class MeanFlowMode { Adaptive, Fixed };

struct MeanFlowResult {
  std::vector<double> mu_norm; // ||mu|| before the first step and after every step
  std::vector<double> alpha;   // bandwidth used at each step
  bool diverged = false;
};

/// Gradient descent of gaussian_mmd2 on the mean, mu <- mu - eta * grad. Adaptive mode
/// picks optimal_bandwidth(||mu||) each step; fixed mode uses `alpha`. Stops early and
/// flags divergence once ||mu|| exceeds 1e6.
MeanFlowResult simulate_mean_flow(const Eigen::Ref<const Vector>& mu_init, double sigma, int d,
                                  double eta, int steps, MeanFlowMode mode, double alpha = 1.0);

std::string to_string(MeanFlowMode mode);
MeanFlowMode mean_flow_mode_from_string(const std::string& name);

} // namespace dmmd
