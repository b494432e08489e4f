#pragma once

#include "dmmd/sampling.hpp"

#include <cstdint>
#include <string>

namespace dmmd {

enum class DatasetFamily { Checkerboard, TwoGaussians, Ring };

std::string to_string(DatasetFamily family);
DatasetFamily dataset_family_from_string(const std::string& name);

struct DatasetSpec {
  DatasetFamily family = DatasetFamily::Checkerboard;
  Eigen::Index count = 20000;
  std::uint64_t seed = 0;
  double eval_fraction = 0.2;
  // two_gaussians: modes at (+-separation, 0) with isotropic scale `scale`.
  double separation = 2.0;
  double scale = 0.5;
  // ring: radius with radial noise `scale`.
  double radius = 3.0;

  void validate() const;
};

struct Dataset {
  ParticleSet train;
  ParticleSet eval;
};

/// i.i.d. draws, split into train / eval by eval_fraction. The checkerboard is uniform on
/// the 8 cells (i + j even) of the 4 x 4 grid over [-4, 4]^2.
Dataset sample_dataset(const DatasetSpec& spec, Rng& rng);
/// Deterministic: seeded from the seed field of the argument.
Dataset sample_dataset(const DatasetSpec& spec);

/// Rows drawn uniformly without replacement.
ParticleSet subsample(const ParticleSet& data, Eigen::Index count, Rng& rng);

struct MetricValue {
  double value = 0.0;
  double std_error = 0.0;
};

/// Unbiased RBF-MMD^2 between samples and reference with a bootstrap standard error.
MetricValue eval_mmd(const ParticleSet& samples, const ParticleSet& reference, double sigma,
                     Rng& rng, int resamples = 200);

struct Baseline {
  enum class Kind { Fixed, LinearInterp } kind = Kind::Fixed;
  double sigma = 0.5;
  /// Kernel width at noise level t.
  double sigma_at(double t) const;
  std::string name() const;
};

/// Algorithm-2 flow with a data-space RBF kernel of width baseline.sigma_at(t).
ParticleSet baseline_flow(const Baseline& baseline, const ParticleSet& clean,
                          const FlowConfig& cfg, Rng& rng);

} // namespace dmmd
