#include "dmmd/data.hpp"

#include "dmmd/error.hpp"
#include "dmmd/mmd.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace dmmd {

std::string to_string(DatasetFamily family) {
  switch (family) {
  case DatasetFamily::Checkerboard:
    return "checkerboard";
  case DatasetFamily::TwoGaussians:
    return "two_gaussians";
  case DatasetFamily::Ring:
    return "ring";
  }
  return "unknown";
}

DatasetFamily dataset_family_from_string(const std::string& name) {
  if (name == "checkerboard") return DatasetFamily::Checkerboard;
  if (name == "two_gaussians") return DatasetFamily::TwoGaussians;
  if (name == "ring") return DatasetFamily::Ring;
  throw ConfigError("unknown dataset family '" + name + "'");
}

void DatasetSpec::validate() const {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
    throw ConfigError("dataset.eval_fraction must lie in (0, 1)");
  const auto eval_count = static_cast<Eigen::Index>(std::llround(count * eval_fraction));
  if (eval_count < 2 || count - eval_count < 2)
    throw ConfigError("dataset.count too small for a train / eval split of >= 2 each");
  if (!(scale > 0.0)) throw ConfigError("dataset.scale must be positive");
}

Dataset sample_dataset(const DatasetSpec& spec, Rng& rng) {
  spec.validate();
  ParticleSet all(spec.count, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < spec.count; ++i) {
    switch (spec.family) {
    case DatasetFamily::Checkerboard: {
      std::uniform_int_distribution<int> cell(0, 7);
      const int c = cell(rng);
      const int row = c / 2;
      const int col = 2 * (c % 2) + (row % 2); // (row + col) even
      all(i, 0) = -4.0 + 2.0 * col + 2.0 * unit(rng);
      all(i, 1) = -4.0 + 2.0 * row + 2.0 * unit(rng);
      break;
    }
    case DatasetFamily::TwoGaussians: {
      const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
      all(i, 0) = sign * spec.separation + spec.scale * normal(rng);
      all(i, 1) = spec.scale * normal(rng);
      break;
    }
    case DatasetFamily::Ring: {
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      const double r = spec.radius + spec.scale * normal(rng);
      all(i, 0) = r * std::cos(angle);
      all(i, 1) = r * std::sin(angle);
      break;
    }
    }
  }
  const auto eval_count = static_cast<Eigen::Index>(std::llround(spec.count * spec.eval_fraction));
  return {all.topRows(spec.count - eval_count), all.bottomRows(eval_count)};
}

Dataset sample_dataset(const DatasetSpec& spec) {
  Rng rng(spec.seed);
  return sample_dataset(spec, rng);
}

ParticleSet subsample(const ParticleSet& data, Eigen::Index count, Rng& rng) {
  if (count > data.rows()) throw ConfigError("cannot subsample more rows than available");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  ParticleSet out(count, data.cols());
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, data.rows() - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    out.row(i) = data.row(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

MetricValue eval_mmd(const ParticleSet& samples, const ParticleSet& reference, double sigma,
                     Rng& rng, int resamples) {
  if (samples.rows() < 2 || reference.rows() < 2)
    throw EstimatorError("evaluation MMD needs at least two samples per set");
  if (resamples < 2) throw ConfigError("bootstrap needs at least two resamples");
  const BaseKernel base = KernelSpec::rbf(sigma).base();
  const Matrix kxx = base_gram(base, samples, samples);
  const Matrix kyy = base_gram(base, reference, reference);
  const Matrix kxy = base_gram(base, samples, reference);

  MetricValue out;
  out.value = mmd2_unbiased_from_grams(kxx, kyy, kxy);

  // Resamples as multiplicity vectors: sum_{a != b} k = c^T K c - sum_i c_i K_ii.
  const Eigen::Index n = samples.rows();
  const Eigen::Index m = reference.rows();
  Matrix cx = Matrix::Zero(n, resamples);
  Matrix cy = Matrix::Zero(m, resamples);
  std::uniform_int_distribution<Eigen::Index> pick_x(0, n - 1);
  std::uniform_int_distribution<Eigen::Index> pick_y(0, m - 1);
  for (int r = 0; r < resamples; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) cx(pick_x(rng), r) += 1.0;
    for (Eigen::Index j = 0; j < m; ++j) cy(pick_y(rng), r) += 1.0;
  }
  const Matrix kx_c = kxx * cx;
  const Matrix ky_c = kyy * cy;
  const Matrix kxy_c = kxy * cy;
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  Vector boot(resamples);
  for (int r = 0; r < resamples; ++r) {
    const double xx = cx.col(r).dot(kx_c.col(r)) - cx.col(r).dot(kxx.diagonal());
    const double yy = cy.col(r).dot(ky_c.col(r)) - cy.col(r).dot(kyy.diagonal());
    const double xy = cx.col(r).dot(kxy_c.col(r));
    boot[r] = xx / (dn * (dn - 1)) + yy / (dm * (dm - 1)) - 2.0 * xy / (dn * dm);
  }
  const double mean = boot.mean();
  out.std_error = std::sqrt((boot.array() - mean).square().sum() / (resamples - 1));
  return out;
}

double Baseline::sigma_at(double t) const {
  return kind == Kind::Fixed ? sigma : 0.1 * (1.0 - t) + 0.5 * t;
}

std::string Baseline::name() const {
  if (kind == Kind::LinearInterp) return "linear_interp";
  char buf[64];
  std::snprintf(buf, sizeof buf, "fixed_sigma_%g", sigma);
  return buf;
}

ParticleSet baseline_flow(const Baseline& baseline, const ParticleSet& clean,
                          const FlowConfig& cfg, Rng& rng) {
  cfg.validate();
  if (baseline.kind == Baseline::Kind::Fixed && !(baseline.sigma > 0.0))
    throw ConfigError("baseline sigma must be positive");
  ParticleSet z = standard_normal(cfg.particles, clean.cols(), rng);
  return run_flow([&](double t) { return KernelSpec::rbf(baseline.sigma_at(t)); }, clean,
                  std::move(z), cfg.level_times(), cfg.steps_per_level, cfg.eta);
}

} // namespace dmmd
