#pragma once

#include "dmmd/types.hpp"

namespace dmmd {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for one flat parameter vector.
struct AdamState {
  AdamConfig config;
  Vector first_moment;
  Vector second_moment;
  long step = 0;

  AdamState() = default;
  AdamState(Eigen::Index parameter_count, AdamConfig cfg)
      : config(cfg), first_moment(Vector::Zero(parameter_count)),
        second_moment(Vector::Zero(parameter_count)) {}
};

/// One bias-corrected Adam update of `params` in place. Throws ShapeError on size
/// mismatch and NumericError if the update produces a non-finite parameter.
void adam_step(Vector& params, const Eigen::Ref<const Vector>& grads, AdamState& state);

} // namespace dmmd
