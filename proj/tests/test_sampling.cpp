#include "dmmd/error.hpp"
#include "dmmd/mmd.hpp"
#include "dmmd/sampling.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace dmmd;
using namespace dmmd::test;

namespace {

FeatureModel random_linear_model(Rng& rng) { return FeatureModel(small_net(rng, 2, 3), LinearKernel{}); }

FlowConfig small_flow() {
  FlowConfig cfg;
  cfg.levels = 3;
  cfg.steps_per_level = 2;
  cfg.eta = 0.5;
  cfg.particles = 7;
  cfg.denoise_steps = 2;
  return cfg;
}

} // namespace

TEST_CASE("flow schedule") {
  FlowConfig cfg;
  cfg.levels = 0;
  CHECK(cfg.level_times() == std::vector<double>{0.05});
  cfg.levels = 2;
  const auto times = cfg.level_times();
  REQUIRE(times.size() == 3);
  CHECK(times[0] == 1.0);
  CHECK(times[1] == doctest::Approx(0.525));
  CHECK(times[2] == 0.05);
  cfg.levels = 100;
  cfg.steps_per_level = 10;
  cfg.denoise_steps = 2;
  CHECK(cfg.nfe() == 1012);
  CHECK(cfg.denoise_times() == std::vector<double>{0.05, 0.0});
  cfg.eta = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("exact flow hand example") {
  auto id = std::make_shared<const FeatureNet>(identity_net(1));
  const ParticleSet clean = points({2, 2, 2});
  const ParticleSet out =
      run_flow([&](double t) { return KernelSpec::linear().composed_with(id, t); }, clean,
               points({0}), {0.05}, 1, 1.0);
  CHECK(out(0, 0) == doctest::Approx(2.0));
  const ParticleSet plain =
      run_flow([](double) { return KernelSpec::linear(); }, clean, points({0}), {0.05}, 1, 1.0);
  CHECK(plain(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("exact flow step equals the witness gradient") {
  Rng rng(91);
  for (int trial = 0; trial < 8; ++trial) {
    const KernelSpec spec = random_spec(rng, trial, 2, 0.3);
    const ParticleSet clean = standard_normal(6, 2, rng);
    const ParticleSet z = standard_normal(4, 2, rng);
    const ParticleSet out = run_flow([&](double) { return spec; }, clean, z, {0.3}, 1, 0.2);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const Vector expected =
          z.row(i).transpose() - 0.2 * witness_grad(spec, z, clean, z.row(i).transpose());
      CHECK((out.row(i).transpose() - expected).norm() < 1e-12);
    }
  }
}

TEST_CASE("exact flow with zero step returns the initial draw") {
  Rng rng(92);
  const Discriminator model = random_linear_model(rng);
  const ParticleSet clean = standard_normal(10, 2, rng);
  FlowConfig cfg = small_flow();
  cfg.eta = 0.0;
  Rng r1(3), r2(3);
  FlowTrace trace;
  CHECK(dmmd_sample(model, clean, cfg, r1, &trace) == standard_normal(cfg.particles, 2, r2));
  CHECK(trace.times.size() == static_cast<std::size_t>((cfg.levels + 1) * cfg.steps_per_level));
}

TEST_CASE("exact flow is deterministic") {
  Rng rng(93);
  const Discriminator model = FeatureModel(small_net(rng, 2, 3), RbfKernel{1.0});
  const ParticleSet clean = standard_normal(10, 2, rng);
  Rng r1(4), r2(4);
  CHECK(dmmd_sample(model, clean, small_flow(), r1) == dmmd_sample(model, clean, small_flow(), r2));
}

TEST_CASE("denoising identities") {
  Rng rng(94);
  const Discriminator model = random_linear_model(rng);
  const ParticleSet clean = standard_normal(10, 2, rng);
  const ParticleSet z = standard_normal(5, 2, rng);
  CHECK(denoise(z, model, clean, 3.0, 0, 0.05, 0.0) == z);
  CHECK(denoise(z, model, clean, 0.0, 4, 0.05, 0.0) == z);
  CHECK(denoise(z, model, clean, 1.0, 2, 0.05, 0.0) != z);
}

TEST_CASE("mean feature table") {
  Rng rng(95);
  FeatureNet net = small_net(rng, 2, 3);
  std::vector<DenseLayer> layers = net.layers();
  layers.back().weight.setZero();
  const FeatureModel constant(FeatureNet(2, net.embed_dim(), layers), LinearKernel{});
  const auto schedule = make_schedule(100, 1e-3, 0.05);
  const ParticleSet data = standard_normal(9, 2, rng);
  const MeanFeatureTable table = precompute_mean_features(constant, data, schedule, {0.9, 0.3}, rng);
  for (Eigen::Index l = 0; l < 2; ++l) {
    CHECK((table.clean_mean.col(l) - layers.back().bias).norm() < 1e-14);
    CHECK((table.noisy_mean.col(l) - layers.back().bias).norm() < 1e-14);
  }

  const FeatureModel model(net, LinearKernel{});
  const MeanFeatureTable t0 = precompute_mean_features(model, data, schedule, {0.0}, rng);
  CHECK(t0.clean_mean.col(0) == t0.noisy_mean.col(0));

  const FeatureModel id(identity_net(1), LinearKernel{});
  const auto hand = make_schedule(2, 0.36, 0.36);
  const auto [clean, noisy] = mean_features_at(id, points({0, 2}), 0.25, points({1, -1}), hand);
  CHECK(clean[0] == doctest::Approx(1.0));
  CHECK(noisy[0] == doctest::Approx(0.8));
  CHECK(table.find(0.3) == 1);
  CHECK_THROWS_AS(table.find(0.5), ConfigError);
}

TEST_CASE("approximate flow") {
  Rng rng(96);
  const FeatureModel model = random_linear_model(rng);
  const auto schedule = make_schedule(100, 1e-3, 0.05);
  const ParticleSet data = standard_normal(30, 2, rng);
  FlowConfig cfg = small_flow();
  std::vector<double> times = cfg.level_times();
  const auto dn = cfg.denoise_times();
  times.insert(times.end(), dn.begin(), dn.end());
  const MeanFeatureTable table = precompute_mean_features(model, data, schedule, times, rng);

  FlowConfig still = cfg;
  still.eta = 0.0;
  Rng r1(5), r2(5);
  CHECK(admmd_sample(model, table, still, r1) == standard_normal(cfg.particles, 2, r2));

  // Particles evolve independently: the batch equals per-particle runs.
  Rng r3(6), r4(6);
  const ParticleSet batch = admmd_sample(model, table, cfg, r3);
  for (Eigen::Index i = 0; i < batch.rows(); ++i)
    CHECK((admmd_sample_single(model, table, cfg, r4).transpose() - batch.row(i)).norm() < 1e-12);

  // One step moves each particle by -eta J^T (noisy mean - clean mean).
  const ParticleSet z = standard_normal(3, 2, rng);
  const ParticleSet one = admmd_flow(model, table, z, {times[0]}, 1, 0.3);
  const Vector gap = table.noisy_mean.col(0) - table.clean_mean.col(0);
  const auto spec = model.kernel_at(times[0]);
  const Witness w = Witness::from_mean_gap(spec, gap);
  CHECK((one - (z - 0.3 * w.gradients(z))).norm() < 1e-12);

  CHECK(denoise_approx(batch, model, table, 2.0, 0, 0.05, 0.0) == batch);
  CHECK(denoise_approx(batch, model, table, 0.0, 2, 0.05, 0.0) == batch);
  CHECK(denoise_approx(batch, model, table, 2.0, 2, 0.05, 0.0) != batch);

  const FeatureModel rbf(small_net(rng, 2, 3), RbfKernel{1.0});
  CHECK_THROWS_AS(admmd_flow(rbf, table, z, {times[0]}, 1, 0.3), UnsupportedOperation);
}

TEST_CASE("threaded flows agree with the sequential result") {
  Rng rng(97);
  const FeatureModel model = random_linear_model(rng);
  const auto schedule = make_schedule(100, 1e-3, 0.05);
  const ParticleSet data = standard_normal(30, 2, rng);
  FlowConfig cfg = small_flow();
  cfg.particles = 50;
  const MeanFeatureTable table =
      precompute_mean_features(model, data, schedule, cfg.level_times(), rng);
  const KaleModel kale(small_net(rng, 2, 3), small_net(rng, 0, 3, Activation::Gelu, 4, {4}));

  Rng r1(8), r2(8), r3(9), r4(9);
  const ParticleSet seq = admmd_sample(model, table, cfg, r1);
  const ParticleSet kseq = kale_sample(kale, cfg, r3);
  set_thread_count(3);
  const ParticleSet par = admmd_sample(model, table, cfg, r2);
  const ParticleSet kpar = kale_sample(kale, cfg, r4);
  set_thread_count(1);
  CHECK((seq - par).norm() <= 1e-12 * (1 + seq.norm()));
  CHECK((kseq - kpar).norm() <= 1e-12 * (1 + kseq.norm()));
  CHECK_THROWS_AS(set_thread_count(0), ConfigError);
}

TEST_CASE("kale flow") {
  Rng rng(98);
  FeatureNet head = small_net(rng, 0, 2, Activation::Gelu, 4, {4});
  std::vector<DenseLayer> layers = head.layers();
  layers.back().weight.setZero();
  layers.back().bias << 0.0, 0.0;
  const KaleModel flat(identity_net(2), FeatureNet(0, 4, layers));
  const ParticleSet z = standard_normal(5, 2, rng);
  CHECK(kale_flow(flat, z, {0.9, 0.5}, 3, 1.0) == z);

  // Identity features, alpha = (1, -2): h is linear and every step shifts by -eta alpha.
  layers.back().bias << 1.0, -2.0;
  const KaleModel linear(identity_net(2), FeatureNet(0, 4, layers));
  const ParticleSet moved = kale_flow(linear, z, {0.9, 0.5}, 3, 0.1);
  Vector shift(2);
  shift << -0.6, 1.2;
  CHECK((moved.rowwise() - shift.transpose() - z).norm() < 1e-12);

  FlowConfig cfg = small_flow();
  cfg.eta = 0.0;
  Rng r1(2), r2(2);
  CHECK(kale_sample(linear, cfg, r1) == standard_normal(cfg.particles, 2, r2));
  Rng r3(2), r4(2);
  CHECK(kale_sample_single(linear, cfg, r3).transpose() == standard_normal(1, 2, r4));
}

TEST_CASE("approximate step differs from the exact step by the feature-mean gap") {
  Rng rng(99);
  const FeatureModel model = random_linear_model(rng);
  const auto schedule = make_schedule(100, 1e-3, 0.05);
  const ParticleSet data = standard_normal(40, 2, rng);
  const double t = 0.6;
  const ParticleSet eps = standard_normal(40, 2, rng);
  const auto [clean_mean, noisy_mean] = mean_features_at(model, data, t, eps, schedule);
  MeanFeatureTable table{{t}, clean_mean, noisy_mean};

  // Particles equal to the noised dataset: the interaction mean equals the table's noisy mean.
  const ParticleSet z = noise(data, t, eps, schedule);
  const ParticleSet exact = run_flow([&](double s) { return model.kernel_at(s); }, data, z, {t}, 1, 0.4);
  const ParticleSet approx = admmd_flow(model, table, z, {t}, 1, 0.4);
  CHECK((exact - approx).norm() < 1e-10);

  // Other particles: the update difference is -eta J^T (particle mean - noisy mean).
  const ParticleSet other = standard_normal(40, 2, rng);
  const ParticleSet e2 = run_flow([&](double s) { return model.kernel_at(s); }, data, other, {t}, 1, 0.4);
  const ParticleSet a2 = admmd_flow(model, table, other, {t}, 1, 0.4);
  const Vector particle_mean = model.net().forward(other.transpose(), t).rowwise().mean();
  const Witness gap_witness = Witness::from_mean_gap(model.kernel_at(t), particle_mean - noisy_mean);
  CHECK((e2 - a2 + 0.4 * gap_witness.gradients(other)).norm() < 1e-10);
}

TEST_CASE("identity features drift by the mean gap") {
  const FeatureModel id(identity_net(1), LinearKernel{});
  MeanFeatureTable table{{0.5}, Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 0.5)};
  const ParticleSet out = admmd_flow(id, table, points({-1, 0, 3}), {0.5}, 2, 0.25);
  // Each step adds eta * (clean mean - noisy mean) = 0.375.
  CHECK(out(0, 0) == doctest::Approx(-0.25));
  CHECK(out(1, 0) == doctest::Approx(0.75));
  CHECK(out(2, 0) == doctest::Approx(3.75));
}
