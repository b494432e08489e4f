#include "dmmd/adam.hpp"
#include "dmmd/error.hpp"
#include "dmmd/feature_net.hpp"
#include "dmmd/program.hpp"
#include "dmmd/time_embedding.hpp"
#include "fd.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace dmmd;
using dmmd::test::max_rel_error;
using dmmd::test::numeric_gradient;

namespace {

FeatureNet random_net(Rng& rng, Activation hidden, int input_dim = 2, int embed_dim = 4) {
  std::uniform_int_distribution<int> width(2, 5);
  std::vector<int> widths{width(rng), width(rng), 3};
  auto net = FeatureNet::make(input_dim, embed_dim, widths, hidden, Activation::Identity, rng);
  // Non-zero biases so every code path is exercised.
  Vector p = net.parameters();
  std::normal_distribution<double> normal(0.0, 0.3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += normal(rng);
  net.set_parameters(p);
  return net;
}

Vector random_vector(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

} // namespace

TEST_CASE("time embedding values") {
  const Vector e0 = time_embedding(0.0, 4);
  CHECK(e0.size() == 4);
  CHECK(e0[0] == doctest::Approx(0.0));
  CHECK(e0[1] == doctest::Approx(0.0));
  CHECK(e0[2] == doctest::Approx(1.0));
  CHECK(e0[3] == doctest::Approx(1.0));

  const Vector e1 = time_embedding(0.001, 2);
  CHECK(e1[0] == doctest::Approx(std::sin(1.0)));
  CHECK(e1[1] == doctest::Approx(std::cos(1.0)));

  CHECK_THROWS_AS(time_embedding(0.5, 3), ConfigError);
  CHECK_THROWS_AS(time_embedding(std::nan(""), 4), NumericError);
}

TEST_CASE("time embedding stays on the unit circle per frequency") {
  for (double t : {0.0, 0.1, 0.37, 1.0}) {
    const Vector e = time_embedding(t, 16);
    for (int i = 0; i < 8; ++i)
      CHECK(e[i] * e[i] + e[i + 8] * e[i + 8] == doctest::Approx(1.0));
  }
}

TEST_CASE("feature net rejects malformed shapes") {
  Rng rng(1);
  std::vector<int> widths{4, 3};
  auto net = FeatureNet::make(2, 4, widths, Activation::Gelu, Activation::Identity, rng);
  CHECK(net.output_dim() == 3);
  CHECK(net.parameter_count() == (4 * 6 + 4) + (3 * 4 + 3));
  CHECK_THROWS_AS(net.forward(Matrix::Zero(3, 2), 0.5), ShapeError);
  CHECK_THROWS_AS(net.set_parameters(Vector::Zero(5)), ShapeError);
  CHECK_THROWS_AS(FeatureNet::make(2, 3, widths, Activation::Gelu, Activation::Identity, rng),
                  ConfigError);
}

TEST_CASE("parameters round-trip through the flat layout") {
  Rng rng(2);
  auto net = random_net(rng, Activation::Gelu);
  const Vector p = net.parameters();
  auto copy = net;
  copy.set_parameters(p);
  const Matrix x = Matrix::Random(2, 5);
  CHECK((copy.forward(x, 0.3) - net.forward(x, 0.3)).norm() == doctest::Approx(0.0));
}

TEST_CASE("batched forward agrees with per-point forward") {
  Rng rng(3);
  auto net = random_net(rng, Activation::Elu);
  const Matrix x = Matrix::Random(2, 7);
  const Matrix y = net.forward(x, 0.42);
  for (int j = 0; j < 7; ++j)
    CHECK((y.col(j) - net.forward_point(x.col(j), 0.42)).norm() < 1e-14);
}

TEST_CASE("reverse pass matches finite differences") {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Activation act = trial % 2 == 0 ? Activation::Gelu : Activation::Elu;
    auto net = random_net(rng, act);
    const double t = 0.1 + 0.008 * trial;
    const Vector x = random_vector(2, rng);
    const Vector c = random_vector(net.output_dim(), rng);

    FeatureNet::Tape tape;
    net.forward(x, t, &tape);
    Vector pgrad = Vector::Zero(net.parameter_count());
    const Vector xgrad = net.backward(tape, c, &pgrad).col(0);

    auto in_fn = [&](const Vector& xx) { return net.forward_point(xx, t).dot(c); };
    CHECK(max_rel_error(xgrad, numeric_gradient(in_fn, x)) < 1e-6);

    auto param_fn = [&](const Vector& p) {
      auto copy = net;
      copy.set_parameters(p);
      return copy.forward_point(x, t).dot(c);
    };
    CHECK(max_rel_error(pgrad, numeric_gradient(param_fn, net.parameters())) < 1e-6);
  }
}

TEST_CASE("jvp matches finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto net = random_net(rng, Activation::Gelu);
    const Vector x = random_vector(2, rng);
    const Vector v = random_vector(2, rng);
    FeatureNet::Tape tape;
    net.forward(x, 0.5, &tape);
    const Vector jv = net.jvp(tape, v).col(0);
    const double h = 1e-6;
    const Vector fd =
        (net.forward_point(x + h * v, 0.5) - net.forward_point(x - h * v, 0.5)) / (2 * h);
    CHECK(max_rel_error(jv, fd) < 1e-6);
  }
}

TEST_CASE("forward-over-reverse matches differentiated reverse pass") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Activation act = trial % 3 == 0 ? Activation::Elu : Activation::Gelu;
    auto net = random_net(rng, act);
    const double t = 0.05 + 0.009 * trial;
    const Vector x = random_vector(2, rng);
    const Vector v = random_vector(2, rng);
    const Vector c = random_vector(net.output_dim(), rng);
    const Vector c_dot = random_vector(net.output_dim(), rng);

    FeatureNet::Tape tape;
    net.forward(x, t, &tape);
    FeatureNet::TangentTape tangents;
    net.jvp(tape, v, &tangents);
    Vector pdot = Vector::Zero(net.parameter_count());
    Matrix input_cot;
    const Vector xdot = net.backward_tangent(tape, tangents, c, c_dot, &pdot, &input_cot).col(0);

    auto reverse_at = [&](double s, Vector* pg) {
      FeatureNet::Tape tp;
      net.forward(Vector(x + s * v), t, &tp);
      return Vector(net.backward(tp, Vector(c + s * c_dot), pg).col(0));
    };
    const double h = 1e-5;
    Vector pg_up = Vector::Zero(net.parameter_count());
    Vector pg_down = Vector::Zero(net.parameter_count());
    const Vector up = reverse_at(h, &pg_up);
    const Vector down = reverse_at(-h, &pg_down);
    CHECK(max_rel_error(xdot, (up - down) / (2 * h)) < 1e-6);
    CHECK(max_rel_error(pdot, (pg_up - pg_down) / (2 * h)) < 1e-6);
    CHECK((input_cot.col(0) - reverse_at(0.0, nullptr)).norm() < 1e-12);
  }
}

TEST_CASE("program gradient of a penalty-style loss matches finite differences") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Activation act = trial % 2 == 0 ? Activation::Gelu : Activation::Elu;
    auto net = random_net(rng, act);
    const double t = 0.2 + 0.005 * trial;
    std::vector<Vector> xs, zs;
    for (int i = 0; i < 3; ++i) xs.push_back(random_vector(2, rng));
    for (int i = 0; i < 2; ++i) zs.push_back(random_vector(2, rng));

    // Witness direction from the mean features, squared-norm penalty and an exp term.
    auto build = [&](const FeatureNet& n, Program& prog) {
      std::vector<Program::NodeId> feats;
      for (const auto& x : xs) feats.push_back(prog.features(prog.constant(x), t));
      const auto direction = prog.mean(feats);
      std::vector<Program::NodeId> terms;
      for (const auto& z : zs) {
        const auto g = prog.input_grad(prog.constant(z), t, direction);
        const auto gap = prog.sub(prog.norm(g), prog.scalar(1.0));
        terms.push_back(prog.dot(gap, gap));
      }
      const auto penalty = prog.mean(terms);
      const auto l2 = prog.scale(prog.dot(feats[0], feats[0]), 0.5);
      const auto e = prog.exp(prog.scale(prog.dot(feats[1], direction), 0.1));
      (void)n;
      return prog.add(prog.add(penalty, l2), prog.sub(e, prog.scalar(0.3)));
    };

    Program prog(net);
    const auto loss = build(net, prog);
    const Vector grad = loss_grad_params(prog, loss);

    auto f = [&](const Vector& p) {
      auto copy = net;
      copy.set_parameters(p);
      Program pr(copy);
      return pr.scalar_value(build(copy, pr));
    };
    CHECK(max_rel_error(grad, numeric_gradient(f, net.parameters())) < 1e-6);
  }
}

TEST_CASE("program refuses to differentiate through opaque nodes") {
  Rng rng(14);
  auto net = random_net(rng, Activation::Gelu);
  Program prog(net);
  const auto phi = prog.features(prog.constant(Vector::Ones(2)), 0.5);
  const auto squashed =
      prog.opaque(phi, [](const Vector& v) { return Vector(v.array().tanh()); }, "tanh");
  const auto loss = prog.dot(squashed, squashed);
  CHECK(std::isfinite(prog.scalar_value(loss)));
  CHECK_THROWS_AS(prog.gradient(loss), UnsupportedOperation);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState state(3, cfg);
  Vector p(3);
  p << 1.0, -2.0, 0.5;
  Vector g(3);
  g << 4.0, -0.25, 0.0;
  adam_step(p, g, state);
  CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 4.0 / (4.0 + 1e-8)));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.01 * 0.25 / (0.25 + 1e-8)));
  CHECK(p[2] == doctest::Approx(0.5));
  CHECK(state.step == 1);
}

TEST_CASE("adam second step uses bias-corrected moments") {
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  AdamState state(1, cfg);
  Vector p = Vector::Constant(1, 0.0);
  adam_step(p, Vector::Constant(1, 1.0), state);
  adam_step(p, Vector::Constant(1, 3.0), state);
  const double m = (0.9 * 0.1 * 1.0 + 0.1 * 3.0) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 1.0 + 0.001 * 9.0) / (1 - 0.999 * 0.999);
  CHECK(p[0] == doctest::Approx(-0.1 - 0.1 * m / (std::sqrt(v) + 1e-8)));
}

TEST_CASE("adam rejects bad input") {
  AdamState state(2, AdamConfig{});
  Vector p = Vector::Zero(2);
  CHECK_THROWS_AS(adam_step(p, Vector::Zero(3), state), ShapeError);
  Vector g(2);
  g << 1.0, std::nan("");
  CHECK_THROWS_AS(adam_step(p, g, state), NumericError);
}
