#include "dmmd/time_embedding.hpp"

#include "dmmd/error.hpp"

#include <cmath>
#include <string>

namespace dmmd {

Vector time_embedding(double t, int dim) {
  if (dim < 0 || dim % 2 != 0)
    throw ConfigError("time embedding dimension must be even and non-negative, got " +
                      std::to_string(dim));
  if (!std::isfinite(t)) throw NumericError("time embedding: non-finite noise level");

  const int half = dim / 2;
  const double s = 1000.0 * t;
  Vector out(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / dim);
    out[i] = std::sin(s * freq);
    out[half + i] = std::cos(s * freq);
  }
  return out;
}

} // namespace dmmd
