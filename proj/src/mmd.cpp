#include "dmmd/mmd.hpp"

#include "dmmd/error.hpp"

#include <cmath>

namespace dmmd {

namespace {

double off_diagonal_sum(const Matrix& k) { return k.sum() - k.trace(); }

void require_nonempty(const Matrix& m, const char* what) {
  if (m.rows() == 0) throw EstimatorError(std::string(what) + " is empty");
}

} // namespace

double mmd2_unbiased_from_grams(const Matrix& kxx, const Matrix& kyy, const Matrix& kxy) {
  const double n = static_cast<double>(kxx.rows());
  const double m = static_cast<double>(kyy.rows());
  if (n < 2 || m < 2) throw EstimatorError("unbiased MMD needs at least two samples per set");
  return off_diagonal_sum(kxx) / (n * (n - 1)) + off_diagonal_sum(kyy) / (m * (m - 1)) -
         2.0 * kxy.sum() / (n * m);
}

double mmd2_unbiased(const KernelSpec& spec, const ParticleSet& X, const ParticleSet& Y) {
  if (X.rows() < 2 || Y.rows() < 2)
    throw EstimatorError("unbiased MMD needs at least two samples per set");
  if (X.cols() != Y.cols()) throw ShapeError("sample sets differ in dimension");
  const Matrix u = spec.embed(X);
  const Matrix v = spec.embed(Y);
  return mmd2_unbiased_from_grams(base_gram(spec.base(), u, u), base_gram(spec.base(), v, v),
                                  base_gram(spec.base(), u, v));
}

MeanFeatureSummary summarize_features(const Eigen::Ref<const Matrix>& features, double t) {
  if (features.rows() == 0) throw EstimatorError("cannot summarize an empty set");
  MeanFeatureSummary s;
  s.count = features.rows();
  s.mean = features.colwise().mean().transpose();
  s.mean_sq_norm = features.rowwise().squaredNorm().mean();
  s.t = t;
  return s;
}

MeanFeatureSummary summarize(const KernelSpec& spec, const ParticleSet& X) {
  return summarize_features(spec.embed(X), spec.t());
}

double mmd2_unbiased_linear_fast(const MeanFeatureSummary& sx, const MeanFeatureSummary& sy) {
  if (sx.t != sy.t) throw ConfigError("feature summaries were taken at different noise levels");
  if (sx.mean.size() != sy.mean.size()) throw ShapeError("feature summaries differ in size");
  if (sx.count < 2 || sy.count < 2)
    throw EstimatorError("unbiased MMD needs at least two samples per set");
  const double n = static_cast<double>(sx.count);
  const double m = static_cast<double>(sy.count);
  // sum_{i != j} <u_i, u_j> = ||sum u||^2 - sum ||u||^2
  const double xx = (n * sx.mean.squaredNorm() - sx.mean_sq_norm) / (n - 1);
  const double yy = (m * sy.mean.squaredNorm() - sy.mean_sq_norm) / (m - 1);
  return xx + yy - 2.0 * sx.mean.dot(sy.mean);
}

Witness::Witness(KernelSpec spec, const ParticleSet& positive, const ParticleSet& negative)
    : spec_(std::move(spec)) {
  require_nonempty(positive, "witness positive set");
  require_nonempty(negative, "witness negative set");
  if (positive.cols() != negative.cols()) throw ShapeError("witness sets differ in dimension");
  Matrix p = spec_.embed(positive);
  Matrix q = spec_.embed(negative);
  if (spec_.is_linear()) {
    gap_ = p.colwise().mean().transpose() - q.colwise().mean().transpose();
  } else {
    positive_ = std::move(p);
    negative_ = std::move(q);
  }
}

Witness Witness::from_features(KernelSpec spec, Matrix positive, Matrix negative) {
  require_nonempty(positive, "witness positive set");
  require_nonempty(negative, "witness negative set");
  if (positive.cols() != negative.cols()) throw ShapeError("witness sets differ in dimension");
  Witness w(std::move(spec));
  if (w.spec_.is_linear()) {
    w.gap_ = positive.colwise().mean().transpose() - negative.colwise().mean().transpose();
  } else {
    w.positive_ = std::move(positive);
    w.negative_ = std::move(negative);
  }
  return w;
}

Witness Witness::from_mean_gap(KernelSpec spec, Vector gap) {
  if (!spec.is_linear())
    throw UnsupportedOperation("mean-gap witness requires a linear base kernel");
  Witness w(std::move(spec));
  w.gap_ = std::move(gap);
  return w;
}

Vector Witness::feature_values(const Eigen::Ref<const Matrix>& V) const {
  if (spec_.is_linear()) {
    if (V.cols() != gap_.size()) throw ShapeError("witness query dimension mismatch");
    return V * gap_;
  }
  const Matrix kp = base_gram(spec_.base(), V, positive_);
  const Matrix kq = base_gram(spec_.base(), V, negative_);
  return kp.rowwise().mean() - kq.rowwise().mean();
}

Matrix Witness::feature_gradients(const Eigen::Ref<const Matrix>& V) const {
  if (spec_.is_linear()) {
    if (V.cols() != gap_.size()) throw ShapeError("witness query dimension mismatch");
    return gap_.transpose().replicate(V.rows(), 1);
  }
  if (V.cols() != positive_.cols()) throw ShapeError("witness query dimension mismatch");
  // sum_i w_i psi(||u_i - v||^2) (u_i - v), one row per query v.
  auto pull = [&](const Matrix& refs) {
    const Matrix psi = radial_psi(spec_.base(), squared_distances(V, refs)) /
                       static_cast<double>(refs.rows());
    Matrix out = psi * refs;
    out -= V.cwiseProduct(psi.rowwise().sum().replicate(1, V.cols()));
    return out;
  };
  return pull(positive_) - pull(negative_);
}

Vector Witness::values(const ParticleSet& Z) const { return feature_values(spec_.embed(Z)); }

ParticleSet Witness::gradients(const ParticleSet& Z) const {
  ParticleSet g;
  if (!spec_.is_composed()) {
    g = feature_gradients(Z);
  } else {
    const FeatureNet& net = *spec_.net();
    if (Z.cols() != net.input_dim()) throw ShapeError("particle dimension does not match network");
    FeatureNet::Tape tape;
    const Matrix v = net.forward(Z.transpose(), spec_.t(), &tape).transpose();
    g = net.backward(tape, feature_gradients(v).transpose(), nullptr).transpose();
  }
  if (!g.allFinite()) throw NumericError("witness gradient is not finite");
  return g;
}

double witness_eval(const KernelSpec& spec, const ParticleSet& noisy, const ParticleSet& clean,
                    const Eigen::Ref<const Vector>& z) {
  return Witness(spec, noisy, clean).values(z.transpose())[0];
}

Vector witness_grad(const KernelSpec& spec, const ParticleSet& noisy, const ParticleSet& clean,
                    const Eigen::Ref<const Vector>& z) {
  return Witness(spec, noisy, clean).gradients(z.transpose()).row(0).transpose();
}

double l2_penalty(const FeatureNet& net, const ParticleSet& noisy, const ParticleSet& clean,
                  double t) {
  require_nonempty(noisy, "noisy set");
  require_nonempty(clean, "clean set");
  const Matrix fn = net.forward(noisy.transpose(), t);
  const Matrix fc = net.forward(clean.transpose(), t);
  return fn.colwise().squaredNorm().mean() + fc.colwise().squaredNorm().mean();
}

Vector interpolation_weights(Eigen::Index n, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector a(n);
  for (auto& v : a) v = uniform(rng);
  return a;
}

ParticleSet interpolate(const ParticleSet& noisy, const ParticleSet& clean, const Vector& a) {
  if (noisy.rows() != clean.rows() || noisy.cols() != clean.cols() || a.size() != noisy.rows())
    throw ShapeError("interpolation needs aligned noisy/clean pairs");
  return noisy.array().colwise() * a.array() + clean.array().colwise() * (1.0 - a.array());
}

double grad_penalty(const KernelSpec& spec, const ParticleSet& noisy, const ParticleSet& clean,
                    const Vector& weights) {
  const ParticleSet z = interpolate(noisy, clean, weights);
  const ParticleSet g = Witness(spec, noisy, clean).gradients(z);
  return (g.rowwise().norm().array() - 1.0).square().mean();
}

double grad_penalty(const KernelSpec& spec, const ParticleSet& noisy, const ParticleSet& clean,
                    Rng& rng) {
  if (noisy.rows() != clean.rows()) throw ShapeError("interpolation needs aligned noisy/clean pairs");
  return grad_penalty(spec, noisy, clean, interpolation_weights(noisy.rows(), rng));
}

} // namespace dmmd
