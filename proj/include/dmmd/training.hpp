#pragma once

#include "dmmd/adam.hpp"
#include "dmmd/diffusion.hpp"
#include "dmmd/models.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace dmmd {

enum class Objective { Mmd, Kale };

std::string to_string(Objective objective);
Objective objective_from_string(const std::string& name);

struct TrainConfig {
  int iterations = 20000;
  int batch_size = 256;
  int noise_levels = 128;
  double lambda_grad = 0.1;
  double lambda_l2 = 0.0;
  AdamConfig adam;
  Objective objective = Objective::Mmd;
  double kale_lambda = 1.0;
  /// Snap sampled noise levels to the schedule grid before embedding them.
  bool discrete_t = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One noise level's contribution. For the KALE objective `divergence` holds the
/// parametric KALE value; for MMD it holds the unbiased MMD^2.
struct LossTerms {
  double loss = 0.0;
  double divergence = 0.0;
  double grad_penalty = 0.0;
  double l2 = 0.0;
  double mean_witness_grad_norm = 0.0;
  bool clamped = false;
  Vector grad;
};

/// Loss and exact parameter gradient for given noisy / clean batches and interpolation
/// weights: -MMD^2 + lambda_l2 L_l2 + lambda_grad L_grad (MMD models) or
/// -KALE + lambda_grad L_grad + lambda_l2 L_l2 (KALE model). Deterministic.
LossTerms loss_terms(const Model& model, double t, const ParticleSet& noisy,
                     const ParticleSet& clean, const Vector& interp_weights,
                     const TrainConfig& cfg);

/// Draws eps (row by row) and then the interpolation weights from `rng`, noises the batch
/// to level t and returns loss_terms.
LossTerms noise_conditional_loss(const Model& model, double t, const ParticleSet& clean,
                                 const DiffusionSchedule& schedule, Rng& rng,
                                 const TrainConfig& cfg);

/// Same as noise_conditional_loss for a KALE model.
LossTerms kale_objective(const KaleModel& model, double t, const ParticleSet& clean,
                         const DiffusionSchedule& schedule, Rng& rng, const TrainConfig& cfg);

struct TrainLogRow {
  long iter = 0;
  double mean_loss = 0.0;
  double mean_divergence = 0.0;
  double mean_grad_penalty = 0.0;
  double mean_l2 = 0.0;
  double mean_witness_grad_norm = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogRow> log;
  bool clamped = false;
};

using TrainCallback = std::function<void(const TrainLogRow&)>;

/// Algorithm-1 loop: per iteration one clean batch (without replacement), noise_levels
/// fresh t ~ U[0, 1] with fresh noise each, averaged loss, one Adam step.
TrainResult train_discriminator(const ParticleSet& data, Model model,
                                const DiffusionSchedule& schedule, const TrainConfig& cfg,
                                Rng& rng, const TrainCallback& on_iter = {});

/// train_discriminator with the KALE objective.
TrainResult train_kale(const ParticleSet& data, KaleModel model, const DiffusionSchedule& schedule,
                       const TrainConfig& cfg, Rng& rng, const TrainCallback& on_iter = {});

} // namespace dmmd
