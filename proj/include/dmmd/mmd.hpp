#pragma once

#include "dmmd/kernels.hpp"

namespace dmmd {

/// Unbiased MMD^2 between the rows of X and Y. May be negative.
/// Throws EstimatorError when either set has fewer than two rows.
double mmd2_unbiased(const KernelSpec& spec, const ParticleSet& X, const ParticleSet& Y);

/// Same estimator from precomputed Gram matrices.
double mmd2_unbiased_from_grams(const Matrix& kxx, const Matrix& kyy, const Matrix& kxy);

struct MeanFeatureSummary {
  Vector mean;
  double mean_sq_norm = 0.0;
  Eigen::Index count = 0;
  double t = 0.0;
};

/// Summary of feature rows (one row per sample).
MeanFeatureSummary summarize_features(const Eigen::Ref<const Matrix>& features, double t);
MeanFeatureSummary summarize(const KernelSpec& spec, const ParticleSet& X);

/// Unbiased MMD^2 under a linear kernel on features, from summaries alone.
double mmd2_unbiased_linear_fast(const MeanFeatureSummary& sx, const MeanFeatureSummary& sy);

/// Empirical witness f(z) = mean_i k(p_i, z) - mean_j k(q_j, z).
class Witness {
public:
  Witness(KernelSpec spec, const ParticleSet& positive, const ParticleSet& negative);

  /// Reference sets given directly in feature space (rows).
  static Witness from_features(KernelSpec spec, Matrix positive, Matrix negative);
  /// Linear base kernel: f(z) = <phi(z), gap>.
  static Witness from_mean_gap(KernelSpec spec, Vector gap);

  Vector values(const ParticleSet& Z) const;
  ParticleSet gradients(const ParticleSet& Z) const;

  /// grad_v of the witness written in feature space, for feature rows V.
  Matrix feature_gradients(const Eigen::Ref<const Matrix>& V) const;

  const KernelSpec& spec() const { return spec_; }

private:
  Witness(KernelSpec spec) : spec_(std::move(spec)) {}
  Vector feature_values(const Eigen::Ref<const Matrix>& V) const;

  KernelSpec spec_;
  Matrix positive_;
  Matrix negative_;
  Vector gap_;
};

double witness_eval(const KernelSpec& spec, const ParticleSet& noisy, const ParticleSet& clean,
                    const Eigen::Ref<const Vector>& z);
Vector witness_grad(const KernelSpec& spec, const ParticleSet& noisy, const ParticleSet& clean,
                    const Eigen::Ref<const Vector>& z);

/// (1/N) sum ||phi(noisy_i, t)||^2 + (1/N) sum ||phi(clean_j, t)||^2
double l2_penalty(const FeatureNet& net, const ParticleSet& noisy, const ParticleSet& clean,
                  double t);

/// a_i ~ U[0, 1], one per aligned pair.
Vector interpolation_weights(Eigen::Index n, Rng& rng);
/// z_i = a_i noisy_i + (1 - a_i) clean_i
ParticleSet interpolate(const ParticleSet& noisy, const ParticleSet& clean, const Vector& a);

/// (1/N) sum_i (||grad f(z_i)|| - 1)^2 over interpolates with the given weights.
double grad_penalty(const KernelSpec& spec, const ParticleSet& noisy, const ParticleSet& clean,
                    const Vector& weights);
double grad_penalty(const KernelSpec& spec, const ParticleSet& noisy, const ParticleSet& clean,
                    Rng& rng);

} // namespace dmmd
