#pragma once

#include "dmmd/types.hpp"

namespace dmmd {

/// Sinusoidal noise-level embedding.
///
/// Returns [sin(s*w_0), ..., sin(s*w_{n-1}), cos(s*w_0), ..., cos(s*w_{n-1})] with
/// s = 1000 * t, w_i = 10000^(-2i/dim) and n = dim / 2. Throws ConfigError when dim
/// is odd or negative, NumericError when t is not finite.
Vector time_embedding(double t, int dim);

} // namespace dmmd
