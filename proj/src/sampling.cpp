#include "dmmd/sampling.hpp"

#include "dmmd/error.hpp"
#include "dmmd/mmd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace dmmd {

namespace {

std::atomic<int> g_threads{1};

void require_finite(const ParticleSet& z, double t, int step) {
  if (z.allFinite()) return;
  std::ostringstream os;
  os << "particle left the finite range at level t=" << t << ", step " << step;
  throw NumericError(os.str());
}

// Runs fn(begin, end) over row blocks of [0, n) on thread_count() threads.
template <class Fn> void for_row_blocks(Eigen::Index n, Fn&& fn) {
  const int threads = std::min<Eigen::Index>(g_threads.load(), std::max<Eigen::Index>(n, 1));
  if (threads <= 1) {
    fn(Eigen::Index{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  const Eigen::Index chunk = (n + threads - 1) / threads;
  for (int k = 0; k < threads; ++k) {
    const Eigen::Index begin = k * chunk;
    const Eigen::Index end = std::min(n, begin + chunk);
    pool.emplace_back([&, k, begin, end] {
      try {
        if (begin < end) fn(begin, end);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// grad f at every row of z for a witness given in feature space.
ParticleSet witness_gradients(const KernelSpec& spec, const ParticleSet& z,
                              const Matrix& clean_features) {
  if (!spec.is_composed()) {
    return Witness::from_features(spec, z, clean_features).feature_gradients(z);
  }
  const FeatureNet& net = *spec.net();
  FeatureNet::Tape tape;
  const Matrix v = net.forward(z.transpose(), spec.t(), &tape).transpose();
  const Matrix c = Witness::from_features(spec, v, clean_features).feature_gradients(v);
  return net.backward(tape, c.transpose(), nullptr).transpose();
}

ParticleSet draw_initial(const FlowConfig& cfg, Eigen::Index dim, Rng& rng) {
  return standard_normal(cfg.particles, dim, rng);
}

} // namespace

void set_thread_count(int threads) {
  if (threads < 1) throw ConfigError("thread count must be >= 1");
  g_threads = threads;
}

int thread_count() { return g_threads.load(); }

void FlowConfig::validate() const {
  if (levels < 0) throw ConfigError("flow.levels must be >= 0");
  if (steps_per_level < 1) throw ConfigError("flow.steps_per_level must be >= 1");
  if (!(eta >= 0.0)) throw ConfigError("flow.eta must be >= 0");
  if (particles < 1) throw ConfigError("flow.particles must be >= 1");
  if (!(t_min >= 0.0 && t_min < t_max && t_max <= 1.0))
    throw ConfigError("flow requires 0 <= t_min < t_max <= 1");
  if (denoise_steps < 0) throw ConfigError("flow.denoise_steps must be >= 0");
  if (!(denoise_eta >= 0.0)) throw ConfigError("flow.denoise_eta must be >= 0");
  if (!(denoise_t_lo >= 0.0 && denoise_t_lo <= denoise_t_hi && denoise_t_hi <= 1.0))
    throw ConfigError("flow requires 0 <= denoise_t_lo <= denoise_t_hi <= 1");
  if (clean_batch < 1) throw ConfigError("flow.clean_batch must be >= 1");
}

std::vector<double> FlowConfig::level_times() const {
  std::vector<double> times;
  for (int i = levels; i >= 0; --i) {
    const double t = levels == 0 ? t_min : t_min + (t_max - t_min) * i / levels;
    times.push_back(std::clamp(t, t_min, t_max));
  }
  return times;
}

std::vector<double> FlowConfig::denoise_times() const {
  return descending_times(denoise_t_hi, denoise_t_lo, denoise_steps);
}

long FlowConfig::nfe() const {
  return static_cast<long>(levels + 1) * steps_per_level + denoise_steps;
}

std::vector<double> descending_times(double t_hi, double t_lo, int steps) {
  std::vector<double> times;
  for (int k = 0; k < steps; ++k)
    times.push_back(steps == 1 ? t_hi : t_hi - (t_hi - t_lo) * k / (steps - 1.0));
  return times;
}

ParticleSet run_flow(const KernelAt& kernel_at, const ParticleSet& clean, ParticleSet z,
                     const std::vector<double>& times, int steps_per_level, double eta,
                     FlowTrace* trace) {
  if (clean.rows() < 1) throw ConfigError("flow needs a non-empty clean batch");
  if (clean.cols() != z.cols()) throw ShapeError("particles and clean batch differ in dimension");
  for (double t : times) {
    const KernelSpec spec = kernel_at(t);
    const Matrix clean_features = spec.embed(clean);
    for (int step = 0; step < steps_per_level; ++step) {
      if (trace) trace->times.push_back(t);
      if (eta == 0.0) continue;
      z -= eta * witness_gradients(spec, z, clean_features);
      require_finite(z, t, step);
    }
  }
  return z;
}

ParticleSet dmmd_sample(const Discriminator& model, const ParticleSet& clean,
                        const FlowConfig& cfg, Rng& rng, FlowTrace* trace) {
  cfg.validate();
  ParticleSet z = draw_initial(cfg, clean.cols(), rng);
  return run_flow([&](double t) { return kernel_at(model, t); }, clean, std::move(z),
                  cfg.level_times(), cfg.steps_per_level, cfg.eta, trace);
}

ParticleSet denoise(const ParticleSet& particles, const Discriminator& model,
                    const ParticleSet& clean, double eta_star, int steps, double t_hi,
                    double t_lo) {
  if (steps < 0) throw ConfigError("denoise steps must be >= 0");
  if (steps == 0 || eta_star == 0.0) return particles;
  return run_flow([&](double t) { return kernel_at(model, t); }, clean, particles,
                  descending_times(t_hi, t_lo, steps), 1, eta_star);
}

Eigen::Index MeanFeatureTable::find(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] == t) return static_cast<Eigen::Index>(i);
  throw ConfigError("mean-feature table has no entry for noise level " + std::to_string(t));
}

std::pair<Vector, Vector> mean_features_at(const FeatureModel& model, const ParticleSet& data,
                                           double t, const ParticleSet& eps,
                                           const DiffusionSchedule& schedule) {
  if (data.rows() == 0) throw ConfigError("mean features need a non-empty dataset");
  const FeatureNet& net = model.net();
  const Vector clean = net.forward(data.transpose(), t).rowwise().mean();
  const Vector noisy =
      net.forward(noise(data, t, eps, schedule).transpose(), t).rowwise().mean();
  return {clean, noisy};
}

MeanFeatureTable precompute_mean_features(const FeatureModel& model, const ParticleSet& data,
                                          const DiffusionSchedule& schedule,
                                          const std::vector<double>& times, Rng& rng) {
  if (data.rows() == 0) throw ConfigError("mean features need a non-empty dataset");
  MeanFeatureTable table;
  table.times = times;
  const int k = model.net().output_dim();
  table.clean_mean.resize(k, static_cast<Eigen::Index>(times.size()));
  table.noisy_mean.resize(k, static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    const ParticleSet eps = standard_normal(data.rows(), data.cols(), rng);
    auto [clean, noisy] = mean_features_at(model, data, times[i], eps, schedule);
    table.clean_mean.col(static_cast<Eigen::Index>(i)) = clean;
    table.noisy_mean.col(static_cast<Eigen::Index>(i)) = noisy;
  }
  return table;
}

ParticleSet admmd_flow(const FeatureModel& model, const MeanFeatureTable& table, ParticleSet z,
                       const std::vector<double>& times, int steps_per_level, double eta) {
  if (!std::holds_alternative<LinearKernel>(model.base()))
    throw UnsupportedOperation("approximate flow needs a linear base kernel");
  const FeatureNet& net = model.net();
  if (z.cols() != net.input_dim()) throw ShapeError("particle dimension does not match network");
  for (double t : times) {
    const Eigen::Index col = table.find(t);
    const Vector gap = table.noisy_mean.col(col) - table.clean_mean.col(col);
    for_row_blocks(z.rows(), [&](Eigen::Index begin, Eigen::Index end) {
      auto block = z.middleRows(begin, end - begin);
      for (int step = 0; step < steps_per_level; ++step) {
        if (eta == 0.0) break;
        FeatureNet::Tape tape;
        net.forward(block.transpose(), t, &tape);
        block -= eta * net.backward(tape, gap.replicate(1, block.rows()), nullptr).transpose();
        require_finite(block, t, step);
      }
    });
  }
  return z;
}

Vector admmd_sample_single(const FeatureModel& model, const MeanFeatureTable& table,
                           const FlowConfig& cfg, Rng& rng) {
  cfg.validate();
  ParticleSet z = standard_normal(1, model.net().input_dim(), rng);
  return admmd_flow(model, table, std::move(z), cfg.level_times(), cfg.steps_per_level, cfg.eta)
      .row(0)
      .transpose();
}

ParticleSet admmd_sample(const FeatureModel& model, const MeanFeatureTable& table,
                         const FlowConfig& cfg, Rng& rng) {
  cfg.validate();
  ParticleSet z = draw_initial(cfg, model.net().input_dim(), rng);
  return admmd_flow(model, table, std::move(z), cfg.level_times(), cfg.steps_per_level, cfg.eta);
}

ParticleSet denoise_approx(const ParticleSet& particles, const FeatureModel& model,
                           const MeanFeatureTable& table, double eta_star, int steps,
                           double t_hi, double t_lo) {
  if (steps < 0) throw ConfigError("denoise steps must be >= 0");
  if (steps == 0 || eta_star == 0.0) return particles;
  return admmd_flow(model, table, particles, descending_times(t_hi, t_lo, steps), 1, eta_star);
}

ParticleSet kale_flow(const KaleModel& model, ParticleSet z, const std::vector<double>& times,
                      int steps_per_level, double eta) {
  for (double t : times) {
    for_row_blocks(z.rows(), [&](Eigen::Index begin, Eigen::Index end) {
      ParticleSet block = z.middleRows(begin, end - begin);
      for (int step = 0; step < steps_per_level; ++step) {
        if (eta == 0.0) break;
        block -= eta * model.witness_grad(block, t);
        require_finite(block, t, step);
      }
      z.middleRows(begin, end - begin) = block;
    });
  }
  return z;
}

Vector kale_sample_single(const KaleModel& model, const FlowConfig& cfg, Rng& rng) {
  cfg.validate();
  ParticleSet z = standard_normal(1, model.phi().input_dim(), rng);
  return kale_flow(model, std::move(z), cfg.level_times(), cfg.steps_per_level, cfg.eta)
      .row(0)
      .transpose();
}

ParticleSet kale_sample(const KaleModel& model, const FlowConfig& cfg, Rng& rng) {
  cfg.validate();
  ParticleSet z = draw_initial(cfg, model.phi().input_dim(), rng);
  return kale_flow(model, std::move(z), cfg.level_times(), cfg.steps_per_level, cfg.eta);
}

} // namespace dmmd
