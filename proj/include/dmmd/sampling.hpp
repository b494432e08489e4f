#pragma once

#include "dmmd/diffusion.hpp"
#include "dmmd/models.hpp"

#include <functional>
#include <vector>

namespace dmmd {

struct FlowConfig {
  int levels = 100;         // T; levels t_min + i dt for i = T..0
  int steps_per_level = 10; // N_s
  double eta = 1.0;
  int particles = 1000;     // N_p
  double t_min = 0.05;
  double t_max = 1.0;
  int denoise_steps = 2;
  double denoise_eta = 5.0;
  double denoise_t_hi = 0.05;
  double denoise_t_lo = 0.0;
  int clean_batch = 1000;   // N_c

  void validate() const;
  /// Noise levels in visiting order, t_max first.
  std::vector<double> level_times() const;
  /// Noise levels of the denoising steps, t_hi first.
  std::vector<double> denoise_times() const;
  /// (T + 1) N_s + denoise_steps.
  long nfe() const;
};

using KernelAt = std::function<KernelSpec(double t)>;

struct FlowTrace {
  std::vector<double> times; // one entry per step taken
};

/// Exact particle flow: at every step Z <- Z - eta grad f, f the empirical witness between
/// the current particles (self-pairs included) and the clean batch.
ParticleSet run_flow(const KernelAt& kernel_at, const ParticleSet& clean, ParticleSet z,
                     const std::vector<double>& times, int steps_per_level, double eta,
                     FlowTrace* trace = nullptr);

/// Algorithm-2 flow from Z ~ N(0, I) (N_p x d draw from rng).
ParticleSet dmmd_sample(const Discriminator& model, const ParticleSet& clean,
                        const FlowConfig& cfg, Rng& rng, FlowTrace* trace = nullptr);

/// Extra exact-witness steps at denoise_times with learning rate eta_star.
ParticleSet denoise(const ParticleSet& particles, const Discriminator& model,
                    const ParticleSet& clean, double eta_star, int steps, double t_hi,
                    double t_lo);

struct MeanFeatureTable {
  std::vector<double> times;
  Matrix clean_mean; // K x levels
  Matrix noisy_mean; // K x levels

  Eigen::Index find(double t) const;
};

/// Dataset-level mean features at t with an explicit noise draw (rows of eps match data).
std::pair<Vector, Vector> mean_features_at(const FeatureModel& model, const ParticleSet& data,
                                           double t, const ParticleSet& eps,
                                           const DiffusionSchedule& schedule);

/// One table entry per time, one fresh eps per datum per level, drawn in `times` order.
MeanFeatureTable precompute_mean_features(const FeatureModel& model, const ParticleSet& data,
                                          const DiffusionSchedule& schedule,
                                          const std::vector<double>& times, Rng& rng);

/// Approximate flow f(z) = <phi(z, t), noisy_mean(t) - clean_mean(t)>; every row of z
/// evolves independently. Needs a linear base kernel.
ParticleSet admmd_flow(const FeatureModel& model, const MeanFeatureTable& table, ParticleSet z,
                       const std::vector<double>& times, int steps_per_level, double eta);

Vector admmd_sample_single(const FeatureModel& model, const MeanFeatureTable& table,
                           const FlowConfig& cfg, Rng& rng);
/// N_p independent single-particle flows, initial draws taken from rng in particle order.
ParticleSet admmd_sample(const FeatureModel& model, const MeanFeatureTable& table,
                         const FlowConfig& cfg, Rng& rng);

/// Denoising with the approximate witness; the table must contain the denoise times.
ParticleSet denoise_approx(const ParticleSet& particles, const FeatureModel& model,
                           const MeanFeatureTable& table, double eta_star, int steps,
                           double t_hi, double t_lo);

/// Per-particle flow Z <- Z - eta grad h(Z; t).
ParticleSet kale_flow(const KaleModel& model, ParticleSet z, const std::vector<double>& times,
                      int steps_per_level, double eta);
Vector kale_sample_single(const KaleModel& model, const FlowConfig& cfg, Rng& rng);
ParticleSet kale_sample(const KaleModel& model, const FlowConfig& cfg, Rng& rng);

/// Evenly spaced times from t_hi down to t_lo (t_hi alone when steps == 1).
std::vector<double> descending_times(double t_hi, double t_lo, int steps);

/// Worker threads used by the per-particle flows; 1 is the reference mode.
void set_thread_count(int threads);
int thread_count();

} // namespace dmmd
