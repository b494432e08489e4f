#pragma once

#include "dmmd/feature_net.hpp"
#include "dmmd/kernels.hpp"

#include <memory>
#include <vector>

namespace dmmd::test {

/// phi(x) = x, no time input.
inline FeatureNet identity_net(int dim) {
  DenseLayer layer{Matrix::Identity(dim, dim), Vector::Zero(dim), Activation::Identity};
  return FeatureNet(dim, 0, {layer});
}

/// Small random net with non-zero biases.
inline FeatureNet small_net(Rng& rng, int input_dim, int output_dim,
                            Activation hidden = Activation::Gelu, int embed_dim = 4,
                            std::vector<int> hidden_widths = {5, 4}) {
  std::vector<int> widths = hidden_widths;
  widths.push_back(output_dim);
  auto net = FeatureNet::make(input_dim, embed_dim, widths, hidden, Activation::Identity, rng);
  Vector p = net.parameters();
  std::normal_distribution<double> normal(0.0, 0.2);
  for (auto& v : p) v += normal(rng);
  net.set_parameters(p);
  return net;
}

inline ParticleSet points(std::initializer_list<double> values) {
  ParticleSet out(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) out(i++, 0) = v;
  return out;
}

inline KernelSpec random_spec(Rng& rng, int family, int input_dim, double t = 0.4) {
  auto net = std::make_shared<const FeatureNet>(small_net(rng, input_dim, 3));
  switch (family % 4) {
  case 0:
    return KernelSpec::linear().composed_with(net, t);
  case 1:
    return KernelSpec::rbf(1.3).composed_with(net, t);
  case 2:
    return KernelSpec::rational_quadratic(0.8).composed_with(net, t);
  default:
    return KernelSpec::normalized_gaussian(1.1, 3).composed_with(net, t);
  }
}

} // namespace dmmd::test
