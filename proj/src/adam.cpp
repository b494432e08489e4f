#include "dmmd/adam.hpp"

#include "dmmd/error.hpp"

#include <cmath>

namespace dmmd {

void adam_step(Vector& params, const Eigen::Ref<const Vector>& grads, AdamState& state) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ShapeError("adam: parameter, gradient and moment sizes differ");
  if (!grads.allFinite()) throw NumericError("adam: non-finite gradient");

  const auto& c = state.config;
  state.step += 1;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grads;
  state.second_moment =
      c.beta2 * state.second_moment + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -= c.learning_rate * (state.first_moment.array() / correction1) /
                    ((state.second_moment.array() / correction2).sqrt() + c.epsilon);
  if (!params.allFinite()) throw NumericError("adam: parameters became non-finite");
}

} // namespace dmmd
