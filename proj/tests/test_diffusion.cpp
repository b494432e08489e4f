#include "dmmd/diffusion.hpp"
#include "dmmd/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace dmmd;

TEST_CASE("schedule table") {
  const auto s = make_schedule(2, 0.5, 0.5);
  REQUIRE(s.alpha_bar().size() == 2);
  CHECK(s.alpha_bar()[0] == 0.5);
  CHECK(s.alpha_bar()[1] == 0.25);
  CHECK(s.coefficients(0.25).first == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(s.coefficients(0.75).first == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("schedule boundaries and rounding") {
  const auto s = make_schedule(1000, 1e-4, 2e-4);
  CHECK(s.coefficients(0.0) == std::pair<double, double>{1.0, 0.0});
  CHECK(s.coefficients(1.0) == std::pair<double, double>{0.0, 1.0});
  CHECK(s.index(0.5) == 500);
  CHECK(s.coefficients(0.5).first == doctest::Approx(std::sqrt(s.alpha_bar()[500])).epsilon(1e-15));
  for (int l = 0; l < 1000; ++l) {
    const auto [a, b] = s.coefficients(l / 999.0);
    CHECK(std::abs(a * a + b * b - 1.0) <= 1e-12);
  }
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(make_schedule(1, 0.1, 0.2), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), ConfigError);
  const auto s = make_schedule(10, 0.1, 0.2);
  CHECK_THROWS_AS(s.coefficients(-0.01), ConfigError);
  CHECK_THROWS_AS(s.coefficients(1.01), ConfigError);
}

TEST_CASE("noising") {
  Rng rng(61);
  const auto s = make_schedule(100, 1e-3, 0.05);
  const ParticleSet x0 = standard_normal(5, 3, rng);
  const ParticleSet eps = standard_normal(5, 3, rng);
  CHECK(noise(x0, 0.0, eps, s) == x0);
  CHECK(noise(x0, 1.0, eps, s) == eps);
  CHECK_THROWS_AS(noise(x0, 0.5, standard_normal(4, 3, rng), s), ShapeError);

  // alpha_t = 0.8, beta_t = 0.6 at index 1 of a two-level table with beta_0 = 0.36.
  const auto hand = make_schedule(2, 0.36, 0.36);
  ParticleSet one(1, 1), half(1, 1);
  one << 1.0;
  half << 0.5;
  CHECK(noise(one, 0.25, half, hand)(0, 0) == doctest::Approx(1.1).epsilon(1e-14));
}

TEST_CASE("noising preserves variance and corrupts monotonically") {
  Rng rng(62);
  const Eigen::Index n = 100000;
  const auto s = make_schedule(1000, 1e-4, 2e-4);
  const ParticleSet x0 = standard_normal(n, 1, rng);
  const ParticleSet eps = standard_normal(n, 1, rng);
  const double dn = static_cast<double>(n);
  const Vector c0 = x0.col(0).array() - x0.col(0).mean();
  double previous = 2.0;
  for (int l = 0; l < s.levels(); ++l) {
    const double t = l / (s.levels() - 1.0);
    const Vector xt = noise(x0, t, eps, s).col(0);
    const Vector ct = xt.array() - xt.mean();
    const double var = ct.squaredNorm() / (dn - 1);
    const double fourth = ct.array().pow(4).mean();
    const double se = std::sqrt((fourth - var * var) / dn);
    CHECK(std::abs(var - 1.0) <= 3 * se);
    const double corr = ct.dot(c0) / (ct.norm() * c0.norm());
    CHECK(corr < previous);
    previous = corr;
  }
}
