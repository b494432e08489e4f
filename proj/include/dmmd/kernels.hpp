#pragma once

#include "dmmd/feature_net.hpp"

#include <memory>
#include <string>
#include <variant>

namespace dmmd {

struct LinearKernel {};
struct RbfKernel {
  double sigma = 1.0;
};
/// (1 + r^2 / (2 alpha))^(-alpha)
struct RationalQuadraticKernel {
  double alpha = 1.0;
};
/// alpha^(-dim) exp(-r^2 / (2 alpha^2))
struct NormalizedGaussianKernel {
  double alpha = 1.0;
  int dim = 1;
};

using BaseKernel =
    std::variant<LinearKernel, RbfKernel, RationalQuadraticKernel, NormalizedGaussianKernel>;

/// A base kernel, optionally applied on top of phi(., t) of a feature network.
class KernelSpec {
public:
  static KernelSpec linear();
  static KernelSpec rbf(double sigma);
  static KernelSpec rational_quadratic(double alpha);
  static KernelSpec normalized_gaussian(double alpha, int dim);

  /// k(x, y) = base(phi(x, t), phi(y, t)).
  KernelSpec composed_with(std::shared_ptr<const FeatureNet> net, double t) const;

  const BaseKernel& base() const { return base_; }
  bool is_linear() const { return std::holds_alternative<LinearKernel>(base_); }
  bool is_composed() const { return net_ != nullptr; }
  const FeatureNet* net() const { return net_.get(); }
  const std::shared_ptr<const FeatureNet>& shared_net() const { return net_; }
  double t() const { return t_; }
  std::string family() const;

  /// Rows of X mapped into the space the base kernel acts on.
  Matrix embed(const Eigen::Ref<const Matrix>& X) const;

private:
  explicit KernelSpec(BaseKernel base) : base_(base) {}

  BaseKernel base_;
  std::shared_ptr<const FeatureNet> net_;
  double t_ = 0.0;
};

/// Radial profile of a stationary base kernel as a function of r^2 = ||u - v||^2:
/// value k, psi = -2 dk/dr^2 (so grad_v k = psi (u - v)), and dpsi = dpsi/dr^2.
struct RadialProfile {
  double value;
  double psi;
  double dpsi;
};
RadialProfile radial_profile(const BaseKernel& base, double r2);
bool is_stationary(const BaseKernel& base);

/// Elementwise radial profile over a matrix of squared distances.
Matrix radial_value(const BaseKernel& base, const Matrix& r2);
Matrix radial_psi(const BaseKernel& base, const Matrix& r2);
Matrix radial_dpsi(const BaseKernel& base, const Matrix& r2);

/// Squared distances between the rows of U and V, clamped at zero.
Matrix squared_distances(const Eigen::Ref<const Matrix>& U, const Eigen::Ref<const Matrix>& V);

double base_eval(const BaseKernel& base, const Eigen::Ref<const Vector>& u,
                 const Eigen::Ref<const Vector>& v);
Vector base_grad_v(const BaseKernel& base, const Eigen::Ref<const Vector>& u,
                   const Eigen::Ref<const Vector>& v);
/// Gram matrix between the rows of U and V in base-kernel space.
Matrix base_gram(const BaseKernel& base, const Eigen::Ref<const Matrix>& U,
                 const Eigen::Ref<const Matrix>& V);

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y);
Vector kernel_grad_y(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                     const Eigen::Ref<const Vector>& y);
/// Gram matrix between the rows of X and Y.
Matrix kernel_gram(const KernelSpec& spec, const Eigen::Ref<const Matrix>& X,
                   const Eigen::Ref<const Matrix>& Y);

} // namespace dmmd
