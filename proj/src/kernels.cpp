#include "dmmd/kernels.hpp"

#include "dmmd/error.hpp"

#include <cmath>

namespace dmmd {

namespace {

template <class... Ts> struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts> Overloaded(Ts...) -> Overloaded<Ts...>;

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
}

void check_ng_dim(const BaseKernel& base, Eigen::Index n) {
  if (const auto* ng = std::get_if<NormalizedGaussianKernel>(&base); ng && ng->dim != n)
    throw ShapeError("normalized gaussian kernel dimension does not match its inputs");
}

} // namespace

KernelSpec KernelSpec::linear() { return KernelSpec(LinearKernel{}); }

KernelSpec KernelSpec::rbf(double sigma) {
  require_positive(sigma, "rbf sigma");
  return KernelSpec(RbfKernel{sigma});
}

KernelSpec KernelSpec::rational_quadratic(double alpha) {
  require_positive(alpha, "rational quadratic alpha");
  return KernelSpec(RationalQuadraticKernel{alpha});
}

KernelSpec KernelSpec::normalized_gaussian(double alpha, int dim) {
  require_positive(alpha, "normalized gaussian alpha");
  if (dim < 1) throw ConfigError("normalized gaussian dimension must be >= 1");
  return KernelSpec(NormalizedGaussianKernel{alpha, dim});
}

KernelSpec KernelSpec::composed_with(std::shared_ptr<const FeatureNet> net, double t) const {
  if (!net) throw ConfigError("composed kernel needs a feature network");
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("noise level must lie in [0, 1]");
  KernelSpec out = *this;
  out.net_ = std::move(net);
  out.t_ = t;
  return out;
}

std::string KernelSpec::family() const {
  return std::visit(Overloaded{[](const LinearKernel&) { return std::string("linear"); },
                               [](const RbfKernel&) { return std::string("rbf"); },
                               [](const RationalQuadraticKernel&) {
                                 return std::string("rational_quadratic");
                               },
                               [](const NormalizedGaussianKernel&) {
                                 return std::string("normalized_gaussian");
                               }},
                    base_);
}

Matrix KernelSpec::embed(const Eigen::Ref<const Matrix>& X) const {
  if (!net_) return X;
  if (X.cols() != net_->input_dim()) throw ShapeError("particle dimension does not match network");
  return net_->forward(X.transpose(), t_).transpose();
}

bool is_stationary(const BaseKernel& base) { return !std::holds_alternative<LinearKernel>(base); }

RadialProfile radial_profile(const BaseKernel& base, double r2) {
  return std::visit(
      Overloaded{
          [](const LinearKernel&) -> RadialProfile {
            throw UnsupportedOperation("linear kernel has no radial profile");
          },
          [r2](const RbfKernel& k) {
            const double s2 = k.sigma * k.sigma;
            const double v = std::exp(-r2 / (2.0 * s2));
            return RadialProfile{v, v / s2, -v / (2.0 * s2 * s2)};
          },
          [r2](const RationalQuadraticKernel& k) {
            const double b = 1.0 + r2 / (2.0 * k.alpha);
            const double psi = std::pow(b, -k.alpha - 1.0);
            return RadialProfile{psi * b, psi, -(k.alpha + 1.0) / (2.0 * k.alpha) * psi / b};
          },
          [r2](const NormalizedGaussianKernel& k) {
            const double a2 = k.alpha * k.alpha;
            const double v = std::pow(k.alpha, -k.dim) * std::exp(-r2 / (2.0 * a2));
            return RadialProfile{v, v / a2, -v / (2.0 * a2 * a2)};
          }},
      base);
}

Matrix radial_value(const BaseKernel& base, const Matrix& r2) {
  return std::visit(
      Overloaded{[](const LinearKernel&) -> Matrix {
                   throw UnsupportedOperation("linear kernel has no radial profile");
                 },
                 [&](const RbfKernel& k) -> Matrix {
                   return (r2.array() * (-0.5 / (k.sigma * k.sigma))).exp().matrix();
                 },
                 [&](const RationalQuadraticKernel& k) -> Matrix {
                   return (1.0 + r2.array() / (2.0 * k.alpha)).pow(-k.alpha).matrix();
                 },
                 [&](const NormalizedGaussianKernel& k) -> Matrix {
                   return (std::pow(k.alpha, -k.dim) *
                           (r2.array() * (-0.5 / (k.alpha * k.alpha))).exp())
                       .matrix();
                 }},
      base);
}

Matrix radial_psi(const BaseKernel& base, const Matrix& r2) {
  return std::visit(
      Overloaded{[](const LinearKernel&) -> Matrix {
                   throw UnsupportedOperation("linear kernel has no radial profile");
                 },
                 [&](const RbfKernel& k) -> Matrix {
                   return radial_value(base, r2) / (k.sigma * k.sigma);
                 },
                 [&](const RationalQuadraticKernel& k) -> Matrix {
                   return (1.0 + r2.array() / (2.0 * k.alpha)).pow(-k.alpha - 1.0).matrix();
                 },
                 [&](const NormalizedGaussianKernel& k) -> Matrix {
                   return radial_value(base, r2) / (k.alpha * k.alpha);
                 }},
      base);
}

Matrix radial_dpsi(const BaseKernel& base, const Matrix& r2) {
  return std::visit(
      Overloaded{[](const LinearKernel&) -> Matrix {
                   throw UnsupportedOperation("linear kernel has no radial profile");
                 },
                 [&](const RbfKernel& k) -> Matrix {
                   const double s2 = k.sigma * k.sigma;
                   return radial_value(base, r2) * (-0.5 / (s2 * s2));
                 },
                 [&](const RationalQuadraticKernel& k) -> Matrix {
                   return (-(k.alpha + 1.0) / (2.0 * k.alpha) *
                           (1.0 + r2.array() / (2.0 * k.alpha)).pow(-k.alpha - 2.0))
                       .matrix();
                 },
                 [&](const NormalizedGaussianKernel& k) -> Matrix {
                   const double a2 = k.alpha * k.alpha;
                   return radial_value(base, r2) * (-0.5 / (a2 * a2));
                 }},
      base);
}

Matrix squared_distances(const Eigen::Ref<const Matrix>& U, const Eigen::Ref<const Matrix>& V) {
  if (U.cols() != V.cols()) throw ShapeError("squared_distances: column mismatch");
  if (U.cols() <= 8) {
    // Direct differences: cheaper than a GEMM at low dimension and free of cancellation.
    Matrix r2 = Matrix::Zero(U.rows(), V.rows());
    for (Eigen::Index k = 0; k < U.cols(); ++k) {
      const auto u = U.col(k).array();
      for (Eigen::Index j = 0; j < V.rows(); ++j) r2.col(j).array() += (u - V(j, k)).square();
    }
    return r2;
  }
  Matrix r2 = -2.0 * U * V.transpose();
  r2.colwise() += U.rowwise().squaredNorm();
  r2.rowwise() += V.rowwise().squaredNorm().transpose();
  return r2.cwiseMax(0.0);
}

double base_eval(const BaseKernel& base, const Eigen::Ref<const Vector>& u,
                 const Eigen::Ref<const Vector>& v) {
  if (u.size() != v.size()) throw ShapeError("kernel arguments differ in dimension");
  check_ng_dim(base, u.size());
  if (std::holds_alternative<LinearKernel>(base)) return u.dot(v);
  return radial_profile(base, (u - v).squaredNorm()).value;
}

Vector base_grad_v(const BaseKernel& base, const Eigen::Ref<const Vector>& u,
                   const Eigen::Ref<const Vector>& v) {
  if (u.size() != v.size()) throw ShapeError("kernel arguments differ in dimension");
  check_ng_dim(base, u.size());
  if (std::holds_alternative<LinearKernel>(base)) return u;
  const Vector diff = u - v;
  return radial_profile(base, diff.squaredNorm()).psi * diff;
}

Matrix base_gram(const BaseKernel& base, const Eigen::Ref<const Matrix>& U,
                 const Eigen::Ref<const Matrix>& V) {
  if (U.cols() != V.cols()) throw ShapeError("kernel arguments differ in dimension");
  check_ng_dim(base, U.cols());
  if (std::holds_alternative<LinearKernel>(base)) return U * V.transpose();
  return radial_value(base, squared_distances(U, V));
}

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y) {
  if (x.size() != y.size()) throw ShapeError("kernel arguments differ in dimension");
  if (!spec.is_composed()) return base_eval(spec.base(), x, y);
  return base_eval(spec.base(), spec.net()->forward_point(x, spec.t()),
                   spec.net()->forward_point(y, spec.t()));
}

Vector kernel_grad_y(const KernelSpec& spec, const Eigen::Ref<const Vector>& x,
                     const Eigen::Ref<const Vector>& y) {
  if (x.size() != y.size()) throw ShapeError("kernel arguments differ in dimension");
  Vector g;
  if (!spec.is_composed()) {
    g = base_grad_v(spec.base(), x, y);
  } else {
    const FeatureNet& net = *spec.net();
    FeatureNet::Tape tape;
    const Vector v = net.forward(y, spec.t(), &tape);
    const Vector u = net.forward_point(x, spec.t());
    g = net.backward(tape, base_grad_v(spec.base(), u, v), nullptr);
  }
  if (!g.allFinite()) throw NumericError("kernel gradient is not finite");
  return g;
}

Matrix kernel_gram(const KernelSpec& spec, const Eigen::Ref<const Matrix>& X,
                   const Eigen::Ref<const Matrix>& Y) {
  if (X.cols() != Y.cols()) throw ShapeError("kernel arguments differ in dimension");
  return base_gram(spec.base(), spec.embed(X), spec.embed(Y));
}

} // namespace dmmd
