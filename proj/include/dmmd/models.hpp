#pragma once

#include "dmmd/checkpoint.hpp"
#include "dmmd/kernels.hpp"

#include <string>
#include <variant>
#include <vector>

namespace dmmd {

enum class ModelKind { Features, Bandwidth, Kale };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::Bandwidth;
  // Deep features phi(x, t).
  std::vector<int> hidden{64, 64, 64};
  int feature_dim = 32;
  Activation activation = Activation::Gelu;
  int embed_dim = 128;
  std::string kernel = "linear";
  double kernel_param = 1.0; // rbf sigma or rational-quadratic alpha
  // Learned RBF width sigma(t) = sigma_min + relu(g(t)).
  std::vector<int> bandwidth_widths{64, 32, 16, 1};
  int bandwidth_embed_dim = 1024;
  double sigma_min = 0.001;
  double bandwidth_bias_init = 0.0;
  double bandwidth_output_scale = 1.0; // multiplies the initial output-layer weights
  // KALE head alpha(t).
  int head_hidden = 64;
};

BaseKernel make_base_kernel(const std::string& family, double param, int dim);

/// Base kernel on top of learned features phi(x, t).
class FeatureModel {
public:
  FeatureModel(FeatureNet net, BaseKernel base);

  const FeatureNet& net() const { return net_; }
  const BaseKernel& base() const { return base_; }
  KernelSpec kernel_at(double t) const;

  Eigen::Index parameter_count() const { return net_.parameter_count(); }
  Vector parameters() const { return net_.parameters(); }
  void set_parameters(const Eigen::Ref<const Vector>& p) { net_.set_parameters(p); }

private:
  FeatureNet net_;
  BaseKernel base_;
};

/// RBF kernel in data space with a learned noise-dependent width.
class BandwidthModel {
public:
  BandwidthModel(FeatureNet g, double sigma_min);

  const FeatureNet& net() const { return g_; }
  double sigma_min() const { return sigma_min_; }

  double sigma(double t) const;
  /// sigma(t); when `dsigma` is non-null it receives d sigma / d theta.
  double sigma(double t, Vector* dsigma) const;
  KernelSpec kernel_at(double t) const { return KernelSpec::rbf(sigma(t)); }

  Eigen::Index parameter_count() const { return g_.parameter_count(); }
  Vector parameters() const { return g_.parameters(); }
  void set_parameters(const Eigen::Ref<const Vector>& p) { g_.set_parameters(p); }

private:
  FeatureNet g_;
  double sigma_min_;
};

/// Parametric witness h(x, t) = phi(x, t)^T alpha(t).
class KaleModel {
public:
  KaleModel(FeatureNet phi, FeatureNet head);

  const FeatureNet& phi() const { return phi_; }
  const FeatureNet& head() const { return head_; }

  Vector alpha(double t) const;
  Vector witness(const ParticleSet& X, double t) const;
  ParticleSet witness_grad(const ParticleSet& X, double t) const;

  /// Flat layout: [phi parameters, head parameters].
  Eigen::Index parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Eigen::Ref<const Vector>& p);

private:
  FeatureNet phi_;
  FeatureNet head_;
};

using Discriminator = std::variant<FeatureModel, BandwidthModel>;
using Model = std::variant<FeatureModel, BandwidthModel, KaleModel>;

KernelSpec kernel_at(const Discriminator& model, double t);
Eigen::Index parameter_count(const Model& model);
Vector parameters(const Model& model);
void set_parameters(Model& model, const Eigen::Ref<const Vector>& p);
ModelKind kind_of(const Model& model);
Discriminator as_discriminator(const Model& model);

/// Freshly initialized model for data of dimension `data_dim`.
Model make_model(const ModelConfig& cfg, int data_dim, Rng& rng);

/// Model networks and kernel description; extra metadata goes in ckpt.meta.
Checkpoint to_checkpoint(const Model& model);
Model from_checkpoint(const Checkpoint& ckpt);

} // namespace dmmd
