#include "dmmd/error.hpp"
#include "dmmd/kernels.hpp"
#include "fd.hpp"
#include "helpers.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <cmath>

using namespace dmmd;
using namespace dmmd::test;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

} // namespace

TEST_CASE("base kernel values") {
  CHECK(kernel_eval(KernelSpec::rbf(1.0), vec({0.3, -1.0}), vec({0.3, -1.0})) == 1.0);
  CHECK(kernel_eval(KernelSpec::rbf(std::sqrt(2.0)), vec({0.0}), vec({2.0})) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(kernel_eval(KernelSpec::normalized_gaussian(2.0, 1), vec({1.5}), vec({1.5})) ==
        doctest::Approx(0.5));
  CHECK(kernel_eval(KernelSpec::rational_quadratic(1.0), vec({0.0, 0.0}), vec({1.0, 1.0})) ==
        doctest::Approx(0.5));
  CHECK(kernel_eval(KernelSpec::linear(), vec({1.0, 2.0}), vec({3.0, -1.0})) == 1.0);
}

TEST_CASE("kernel gradients in the second argument") {
  const Vector g = kernel_grad_y(KernelSpec::linear(), vec({1.0, 2.0}), vec({-7.0, 0.1}));
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 2.0);
  CHECK(kernel_grad_y(KernelSpec::rbf(1.0), vec({0.0}), vec({1.0}))[0] ==
        doctest::Approx(-std::exp(-0.5)).epsilon(1e-14));
}

TEST_CASE("identity composition reproduces the base kernel") {
  auto id = std::make_shared<const FeatureNet>(identity_net(2));
  const auto spec = KernelSpec::rbf(0.7).composed_with(id, 0.3);
  const Vector x = vec({0.2, -0.4});
  const Vector y = vec({1.0, 0.5});
  CHECK(kernel_eval(spec, x, y) == doctest::Approx(kernel_eval(KernelSpec::rbf(0.7), x, y)));
}

TEST_CASE("kernel gradients match finite differences") {
  Rng rng(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 120; ++trial) {
    const KernelSpec spec =
        trial % 5 == 4 ? KernelSpec::rbf(0.9) : random_spec(rng, trial, 2, 0.1 + 0.007 * trial);
    Vector x(2), y(2);
    for (auto& v : x) v = normal(rng);
    for (auto& v : y) v = normal(rng);
    const Vector g = kernel_grad_y(spec, x, y);
    const Vector fd = numeric_gradient([&](const Vector& yy) { return kernel_eval(spec, x, yy); }, y);
    CHECK(max_rel_error(g, fd) < 1e-6);
  }
}

TEST_CASE("radial profile derivatives") {
  for (const BaseKernel& base :
       {KernelSpec::rbf(0.6).base(), KernelSpec::rational_quadratic(1.7).base(),
        KernelSpec::normalized_gaussian(0.9, 2).base()}) {
    for (double r2 : {0.0, 0.3, 2.5}) {
      const double h = 1e-6;
      const auto p = radial_profile(base, r2);
      const double dk = (radial_profile(base, r2 + h).value - radial_profile(base, r2 + 0 * h).value);
      (void)dk;
      const double dk_central =
          (radial_profile(base, r2 + h).value - radial_profile(base, std::max(0.0, r2 - h)).value) /
          (r2 >= h ? 2 * h : h + r2);
      CHECK(p.psi == doctest::Approx(-2.0 * dk_central).epsilon(1e-5));
      const double dpsi_central =
          (radial_profile(base, r2 + h).psi - radial_profile(base, std::max(0.0, r2 - h)).psi) /
          (r2 >= h ? 2 * h : h + r2);
      CHECK(p.dpsi == doctest::Approx(dpsi_central).epsilon(1e-5));

      Matrix r(1, 1);
      r(0, 0) = r2;
      CHECK(radial_value(base, r)(0, 0) == doctest::Approx(p.value).epsilon(1e-14));
      CHECK(radial_psi(base, r)(0, 0) == doctest::Approx(p.psi).epsilon(1e-14));
      CHECK(radial_dpsi(base, r)(0, 0) == doctest::Approx(p.dpsi).epsilon(1e-14));
    }
  }
}

TEST_CASE("kernels are exactly symmetric") {
  Rng rng(22);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const KernelSpec spec = random_spec(rng, trial, 2);
    Vector x(2), y(2);
    for (auto& v : x) v = normal(rng);
    for (auto& v : y) v = normal(rng);
    CHECK(kernel_eval(spec, x, y) == kernel_eval(spec, y, x));
    CHECK(kernel_eval(KernelSpec::rbf(0.5), x, y) == kernel_eval(KernelSpec::rbf(0.5), y, x));
  }
}

TEST_CASE("gaussian gram matrices are positive semi-definite") {
  Rng rng(23);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x(8, 3);
    for (auto& v : x.reshaped()) v = normal(rng);
    for (const KernelSpec& spec : {KernelSpec::rbf(0.8), KernelSpec::normalized_gaussian(1.2, 3)}) {
      const Matrix k = kernel_gram(spec, x, x);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
    }
  }
}

TEST_CASE("stationary kernels are flat at zero distance") {
  const Vector x = vec({0.4, -2.0});
  CHECK(kernel_grad_y(KernelSpec::rbf(0.3), x, x).norm() == 0.0);
  CHECK(kernel_grad_y(KernelSpec::normalized_gaussian(0.3, 2), x, x).norm() == 0.0);
}

TEST_CASE("gram matrix agrees with pointwise evaluation") {
  Rng rng(24);
  const KernelSpec spec = random_spec(rng, 2, 2);
  const Matrix x = Matrix::Random(4, 2);
  const Matrix y = Matrix::Random(3, 2);
  const Matrix k = kernel_gram(spec, x, y);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(k(i, j) == doctest::Approx(kernel_eval(spec, x.row(i).transpose(), y.row(j).transpose()))
                           .epsilon(1e-12));
}

TEST_CASE("kernel argument validation") {
  CHECK_THROWS_AS(KernelSpec::rbf(0.0), ConfigError);
  CHECK_THROWS_AS(KernelSpec::rational_quadratic(-1.0), ConfigError);
  CHECK_THROWS_AS(KernelSpec::normalized_gaussian(1.0, 0), ConfigError);
  CHECK_THROWS_AS(kernel_eval(KernelSpec::rbf(1.0), vec({1.0}), vec({1.0, 2.0})), ShapeError);
  CHECK_THROWS_AS(kernel_eval(KernelSpec::normalized_gaussian(1.0, 2), vec({1.0}), vec({1.0})),
                  ShapeError);
  auto id = std::make_shared<const FeatureNet>(identity_net(1));
  CHECK_THROWS_AS(KernelSpec::linear().composed_with(id, 1.5), ConfigError);
}
