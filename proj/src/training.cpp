#include "dmmd/training.hpp"

#include "dmmd/error.hpp"
#include "dmmd/mmd.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dmmd {

namespace {

constexpr double kKaleClamp = 20.0;

// Rows: sum_j w_ij (b_j - a_i).
Matrix pull(const Matrix& w, const Matrix& a, const Matrix& b) {
  Matrix out = w * b;
  out -= a.cwiseProduct(w.rowwise().sum().replicate(1, a.cols()));
  return out;
}

struct PenaltyWeights {
  Vector norms;     // ||g_m||
  Matrix upstream;  // d (lambda * penalty) / d g, columns like g
  double value = 0.0;
};

// g is d x n (one column per interpolate).
PenaltyWeights penalty_upstream(const Matrix& g, double lambda) {
  PenaltyWeights out;
  const double n = static_cast<double>(g.cols());
  out.norms = g.colwise().norm().transpose();
  out.value = (out.norms.array() - 1.0).square().mean();
  out.upstream = Matrix::Zero(g.rows(), g.cols());
  for (Eigen::Index m = 0; m < g.cols(); ++m)
    if (out.norms[m] > 0.0)
      out.upstream.col(m) = lambda * (2.0 / n) * (out.norms[m] - 1.0) / out.norms[m] * g.col(m);
  return out;
}

// Penalty terms for a witness whose input gradient is J(z)^T c with a shared c.
// Adds the parameter contribution to grad and returns d penalty / d c.
Vector shared_direction_penalty(const FeatureNet& net, double t, const ParticleSet& z,
                                const Vector& c, double lambda, Vector& grad, LossTerms& terms) {
  FeatureNet::Tape tape;
  net.forward(z.transpose(), t, &tape);
  const Matrix cot = c.replicate(1, z.rows());
  const Matrix g = net.backward(tape, cot, nullptr);
  const PenaltyWeights pw = penalty_upstream(g, lambda);
  terms.grad_penalty = pw.value;
  terms.mean_witness_grad_norm = pw.norms.mean();
  if (lambda == 0.0) return Vector::Zero(c.size());
  FeatureNet::TangentTape tangents;
  const Matrix jg = net.jvp(tape, pw.upstream, &tangents);
  net.backward_tangent(tape, tangents, cot, Matrix::Zero(cot.rows(), cot.cols()), &grad);
  return jg.rowwise().sum();
}

LossTerms feature_linear(const FeatureModel& model, double t, const ParticleSet& noisy,
                         const ParticleSet& clean, const ParticleSet& z, const TrainConfig& cfg) {
  const FeatureNet& net = model.net();
  LossTerms terms;
  terms.grad = Vector::Zero(net.parameter_count());
  FeatureNet::Tape tn, tc;
  const Matrix u = net.forward(noisy.transpose(), t, &tn);
  const Matrix w = net.forward(clean.transpose(), t, &tc);
  const double n = static_cast<double>(u.cols());
  const double m = static_cast<double>(w.cols());

  const auto su = summarize_features(u.transpose(), t);
  const auto sw = summarize_features(w.transpose(), t);
  terms.divergence = mmd2_unbiased_linear_fast(su, sw);
  terms.l2 = su.mean_sq_norm + sw.mean_sq_norm;

  const Vector sum_u = u.rowwise().sum();
  const Vector sum_w = w.rowwise().sum();
  // d(-MMD^2)/du_i and d(-MMD^2)/dw_j.
  Matrix ubar = -(2.0 / (n * (n - 1))) * (sum_u.replicate(1, u.cols()) - u);
  ubar.colwise() += (2.0 / (n * m)) * sum_w;
  Matrix wbar = -(2.0 / (m * (m - 1))) * (sum_w.replicate(1, w.cols()) - w);
  wbar.colwise() += (2.0 / (n * m)) * sum_u;

  const Vector gap = su.mean - sw.mean;
  const Vector gap_bar = shared_direction_penalty(net, t, z, gap, cfg.lambda_grad, terms.grad, terms);
  ubar.colwise() += gap_bar / n;
  wbar.colwise() -= gap_bar / m;

  if (cfg.lambda_l2 != 0.0) {
    ubar += (2.0 * cfg.lambda_l2 / n) * u;
    wbar += (2.0 * cfg.lambda_l2 / m) * w;
  }
  net.backward(tn, ubar, &terms.grad);
  net.backward(tc, wbar, &terms.grad);
  terms.loss = -terms.divergence + cfg.lambda_l2 * terms.l2 + cfg.lambda_grad * terms.grad_penalty;
  return terms;
}

LossTerms feature_stationary(const FeatureModel& model, double t, const ParticleSet& noisy,
                             const ParticleSet& clean, const ParticleSet& z,
                             const TrainConfig& cfg) {
  const FeatureNet& net = model.net();
  const BaseKernel& base = model.base();
  LossTerms terms;
  terms.grad = Vector::Zero(net.parameter_count());
  FeatureNet::Tape tn, tc, tz;
  const Matrix u = net.forward(noisy.transpose(), t, &tn).transpose(); // rows
  const Matrix w = net.forward(clean.transpose(), t, &tc).transpose();
  const Matrix v = net.forward(z.transpose(), t, &tz).transpose();
  const double n = static_cast<double>(u.rows());
  const double m = static_cast<double>(w.rows());

  const Matrix r_uu = squared_distances(u, u);
  const Matrix r_ww = squared_distances(w, w);
  const Matrix r_uw = squared_distances(u, w);
  terms.divergence = mmd2_unbiased_from_grams(radial_value(base, r_uu), radial_value(base, r_ww),
                                              radial_value(base, r_uw));
  terms.l2 = u.rowwise().squaredNorm().mean() + w.rowwise().squaredNorm().mean();

  const Matrix p_uu = radial_psi(base, r_uu);
  const Matrix p_ww = radial_psi(base, r_ww);
  const Matrix p_uw = radial_psi(base, r_uw);
  const double c_uu = 2.0 / (n * (n - 1));
  const double c_ww = 2.0 / (m * (m - 1));
  const double c_uw = 2.0 / (n * m);
  Matrix ubar = -(c_uu * pull(p_uu, u, u) - c_uw * pull(p_uw, u, w));
  Matrix wbar = -(c_ww * pull(p_ww, w, w) - c_uw * pull(p_uw.transpose(), w, u));

  // Witness gradient in feature space at the interpolates, c_k = sum_i a_i psi (u_i - v_k).
  const Matrix r_vu = squared_distances(v, u);
  const Matrix r_vw = squared_distances(v, w);
  const Matrix p_vu = radial_psi(base, r_vu);
  const Matrix p_vw = radial_psi(base, r_vw);
  const Matrix c = pull(p_vu, v, u) / n - pull(p_vw, v, w) / m;
  const Matrix g = net.backward(tz, c.transpose(), nullptr);
  const PenaltyWeights pw = penalty_upstream(g, cfg.lambda_grad);
  terms.grad_penalty = pw.value;
  terms.mean_witness_grad_norm = pw.norms.mean();

  Matrix vbar = Matrix::Zero(v.rows(), v.cols());
  if (cfg.lambda_grad != 0.0) {
    FeatureNet::TangentTape tangents;
    const Matrix cbar = net.jvp(tz, pw.upstream, &tangents).transpose(); // rows
    net.backward_tangent(tz, tangents, c.transpose(), Matrix::Zero(c.cols(), c.rows()),
                         &terms.grad);
    const Vector v_dot_cbar = v.cwiseProduct(cbar).rowwise().sum();
    auto through_refs = [&](const Matrix& refs, const Matrix& psi, const Matrix& r2, double a,
                            Matrix& refs_bar) {
      Matrix q = cbar * refs.transpose();
      q.colwise() -= v_dot_cbar;
      q = 2.0 * radial_dpsi(base, r2).cwiseProduct(q);
      const Vector q_cols = q.colwise().sum().transpose();
      const Vector q_rows = q.rowwise().sum();
      refs_bar += a * (psi.transpose() * cbar + refs.cwiseProduct(q_cols.replicate(1, refs.cols())) -
                       q.transpose() * v);
      vbar -= a * (cbar.cwiseProduct(psi.rowwise().sum().replicate(1, cbar.cols())) + q * refs -
                   v.cwiseProduct(q_rows.replicate(1, v.cols())));
    };
    through_refs(u, p_vu, r_vu, 1.0 / n, ubar);
    through_refs(w, p_vw, r_vw, -1.0 / m, wbar);
  }
  if (cfg.lambda_l2 != 0.0) {
    ubar += (2.0 * cfg.lambda_l2 / n) * u;
    wbar += (2.0 * cfg.lambda_l2 / m) * w;
  }
  net.backward(tn, ubar.transpose(), &terms.grad);
  net.backward(tc, wbar.transpose(), &terms.grad);
  if (cfg.lambda_grad != 0.0) net.backward(tz, vbar.transpose(), &terms.grad);
  terms.loss = -terms.divergence + cfg.lambda_l2 * terms.l2 + cfg.lambda_grad * terms.grad_penalty;
  return terms;
}

LossTerms bandwidth_terms(const BandwidthModel& model, double t, const ParticleSet& noisy,
                          const ParticleSet& clean, const ParticleSet& z, const TrainConfig& cfg) {
  LossTerms terms;
  Vector dsigma;
  const double sigma = model.sigma(t, &dsigma);
  const double s2 = sigma * sigma;
  const double s3 = s2 * sigma;
  const double n = static_cast<double>(noisy.rows());
  const double m = static_cast<double>(clean.rows());

  const Matrix r_uu = squared_distances(noisy, noisy);
  const Matrix r_ww = squared_distances(clean, clean);
  const Matrix r_uw = squared_distances(noisy, clean);
  auto gauss = [s2](const Matrix& r2) { return (r2.array() * (-0.5 / s2)).exp().matrix(); };
  const Matrix k_uu = gauss(r_uu);
  const Matrix k_ww = gauss(r_ww);
  const Matrix k_uw = gauss(r_uw);
  terms.divergence = mmd2_unbiased_from_grams(k_uu, k_ww, k_uw);
  // dk/dsigma = k r^2 / sigma^3; diagonal terms vanish because r^2 = 0 there.
  const double dmmd = (k_uu.cwiseProduct(r_uu).sum() / (n * (n - 1)) +
                       k_ww.cwiseProduct(r_ww).sum() / (m * (m - 1)) -
                       2.0 * k_uw.cwiseProduct(r_uw).sum() / (n * m)) /
                      s3;

  const Matrix r_zu = squared_distances(z, noisy);
  const Matrix r_zw = squared_distances(z, clean);
  const Matrix k_zu = gauss(r_zu);
  const Matrix k_zw = gauss(r_zw);
  const Matrix g = (pull(k_zu, z, noisy) / n - pull(k_zw, z, clean) / m) / s2;
  const PenaltyWeights pw = penalty_upstream(g.transpose(), 1.0);
  terms.grad_penalty = pw.value;
  terms.mean_witness_grad_norm = pw.norms.mean();
  // d psi / d sigma with psi = k / sigma^2.
  auto dpsi = [&](const Matrix& k, const Matrix& r2) {
    return ((k.array() / s3) * (r2.array() / s2 - 2.0)).matrix();
  };
  const Matrix dg = pull(dpsi(k_zu, r_zu), z, noisy) / n - pull(dpsi(k_zw, r_zw), z, clean) / m;
  const double dgp = pw.upstream.transpose().cwiseProduct(dg).sum();

  const double dloss = -dmmd + cfg.lambda_grad * dgp;
  terms.loss = -terms.divergence + cfg.lambda_grad * terms.grad_penalty;
  terms.grad = dloss * dsigma;
  return terms;
}

LossTerms kale_terms(const KaleModel& model, double t, const ParticleSet& noisy,
                     const ParticleSet& clean, const ParticleSet& z, const TrainConfig& cfg) {
  const FeatureNet& phi = model.phi();
  const FeatureNet& head = model.head();
  const double lambda = cfg.kale_lambda;
  LossTerms terms;
  Vector grad_phi = Vector::Zero(phi.parameter_count());
  Vector grad_head = Vector::Zero(head.parameter_count());

  FeatureNet::Tape tn, tc, th;
  const Matrix u = phi.forward(noisy.transpose(), t, &tn);
  const Matrix w = phi.forward(clean.transpose(), t, &tc);
  const Vector alpha = head.forward(Matrix(0, 1), t, &th).col(0);
  const double n = static_cast<double>(u.cols());
  const double m = static_cast<double>(w.cols());

  const Vector h_noisy = u.transpose() * alpha;
  const Vector h_clean = w.transpose() * alpha;
  Vector e(h_clean.size());
  Vector e_active(h_clean.size());
  for (Eigen::Index j = 0; j < h_clean.size(); ++j) {
    const bool over = h_clean[j] > kKaleClamp;
    terms.clamped = terms.clamped || over;
    e[j] = std::exp(over ? kKaleClamp : h_clean[j]);
    e_active[j] = over ? 0.0 : e[j];
  }
  if (!e.allFinite() || !h_noisy.allFinite()) throw NumericError("KALE witness is not finite");
  terms.divergence =
      (1.0 + lambda) * (h_noisy.mean() - e.mean() - 0.5 * lambda * alpha.squaredNorm());
  terms.l2 = 0.5 * (u.colwise().squaredNorm().mean() + w.colwise().squaredNorm().mean());

  Matrix ubar = Matrix::Zero(u.rows(), u.cols());
  ubar.colwise() = -(1.0 + lambda) / n * alpha;
  Matrix wbar = ((1.0 + lambda) / m) * alpha * e_active.transpose();
  Vector alpha_bar =
      -(1.0 + lambda) * (u.rowwise().mean() - w * e_active / m - lambda * alpha);

  alpha_bar += shared_direction_penalty(phi, t, z, alpha, cfg.lambda_grad, grad_phi, terms);
  if (cfg.lambda_l2 != 0.0) {
    ubar += (cfg.lambda_l2 / n) * u;
    wbar += (cfg.lambda_l2 / m) * w;
  }
  phi.backward(tn, ubar, &grad_phi);
  phi.backward(tc, wbar, &grad_phi);
  head.backward(th, alpha_bar, &grad_head);
  terms.grad.resize(grad_phi.size() + grad_head.size());
  terms.grad << grad_phi, grad_head;
  terms.loss = -terms.divergence + cfg.lambda_grad * terms.grad_penalty + cfg.lambda_l2 * terms.l2;
  return terms;
}

double snap(double t, const DiffusionSchedule& schedule) {
  return static_cast<double>(schedule.index(t)) / (schedule.levels() - 1);
}

void check_finite(const LossTerms& terms, double t) {
  if (std::isfinite(terms.loss) && terms.grad.allFinite()) return;
  std::ostringstream os;
  os << "non-finite loss at t=" << t << " (divergence=" << terms.divergence
     << ", grad_penalty=" << terms.grad_penalty << ", l2=" << terms.l2 << ")";
  throw NumericError(os.str());
}

} // namespace

std::string to_string(Objective objective) {
  return objective == Objective::Mmd ? "mmd" : "kale";
}

Objective objective_from_string(const std::string& name) {
  if (name == "mmd") return Objective::Mmd;
  if (name == "kale") return Objective::Kale;
  throw ConfigError("unknown training objective '" + name + "'");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (noise_levels < 1) throw ConfigError("train.noise_levels must be >= 1");
  if (lambda_grad < 0.0 || lambda_l2 < 0.0) throw ConfigError("penalties must be >= 0");
  if (objective == Objective::Kale && kale_lambda < 0.0)
    throw ConfigError("train.kale_lambda must be >= 0");
  if (adam.learning_rate < 0.0) throw ConfigError("learning rate must be >= 0");
}

LossTerms loss_terms(const Model& model, double t, const ParticleSet& noisy,
                     const ParticleSet& clean, const Vector& interp_weights,
                     const TrainConfig& cfg) {
  if (noisy.rows() < 2 || clean.rows() < 2)
    throw EstimatorError("training batches need at least two samples");
  const ParticleSet z = interpolate(noisy, clean, interp_weights);
  LossTerms terms;
  if (const auto* f = std::get_if<FeatureModel>(&model)) {
    terms = f->kernel_at(t).is_linear() ? feature_linear(*f, t, noisy, clean, z, cfg)
                                        : feature_stationary(*f, t, noisy, clean, z, cfg);
  } else if (const auto* b = std::get_if<BandwidthModel>(&model)) {
    terms = bandwidth_terms(*b, t, noisy, clean, z, cfg);
  } else {
    terms = kale_terms(std::get<KaleModel>(model), t, noisy, clean, z, cfg);
  }
  check_finite(terms, t);
  return terms;
}

LossTerms noise_conditional_loss(const Model& model, double t, const ParticleSet& clean,
                                 const DiffusionSchedule& schedule, Rng& rng,
                                 const TrainConfig& cfg) {
  if (clean.rows() < 2) throw EstimatorError("training batches need at least two samples");
  const ParticleSet eps = standard_normal(clean.rows(), clean.cols(), rng);
  const ParticleSet noisy = noise(clean, t, eps, schedule);
  const Vector a = interpolation_weights(clean.rows(), rng);
  return loss_terms(model, t, noisy, clean, a, cfg);
}

LossTerms kale_objective(const KaleModel& model, double t, const ParticleSet& clean,
                         const DiffusionSchedule& schedule, Rng& rng, const TrainConfig& cfg) {
  return noise_conditional_loss(Model(model), t, clean, schedule, rng, cfg);
}

TrainResult train_discriminator(const ParticleSet& data, Model model,
                                const DiffusionSchedule& schedule, const TrainConfig& cfg,
                                Rng& rng, const TrainCallback& on_iter) {
  cfg.validate();
  if (data.rows() < cfg.batch_size) throw ConfigError("dataset is smaller than the batch size");
  if ((cfg.objective == Objective::Kale) != std::holds_alternative<KaleModel>(model))
    throw ConfigError("the KALE objective needs a KALE model and vice versa");

  TrainResult result{std::move(model), {}, false};
  Vector params = parameters(result.model);
  AdamState adam(params.size(), cfg.adam);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.rows()));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  ParticleSet batch(cfg.batch_size, data.cols());
  result.log.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (int i = 0; i < cfg.batch_size; ++i) {
      std::uniform_int_distribution<Eigen::Index> pick(i, data.rows() - 1);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
      batch.row(i) = data.row(order[static_cast<std::size_t>(i)]);
    }

    TrainLogRow row;
    row.iter = iter;
    Vector grad = Vector::Zero(params.size());
    for (int level = 0; level < cfg.noise_levels; ++level) {
      double t = uniform(rng);
      if (cfg.discrete_t) t = snap(t, schedule);
      const LossTerms terms = noise_conditional_loss(result.model, t, batch, schedule, rng, cfg);
      grad += terms.grad;
      row.mean_loss += terms.loss;
      row.mean_divergence += terms.divergence;
      row.mean_grad_penalty += terms.grad_penalty;
      row.mean_l2 += terms.l2;
      row.mean_witness_grad_norm += terms.mean_witness_grad_norm;
      result.clamped = result.clamped || terms.clamped;
    }
    const double levels = static_cast<double>(cfg.noise_levels);
    grad /= levels;
    row.mean_loss /= levels;
    row.mean_divergence /= levels;
    row.mean_grad_penalty /= levels;
    row.mean_l2 /= levels;
    row.mean_witness_grad_norm /= levels;

    adam_step(params, grad, adam);
    set_parameters(result.model, params);
    result.log.push_back(row);
    if (on_iter) on_iter(row);
  }
  return result;
}

TrainResult train_kale(const ParticleSet& data, KaleModel model, const DiffusionSchedule& schedule,
                       const TrainConfig& cfg, Rng& rng, const TrainCallback& on_iter) {
  TrainConfig kale_cfg = cfg;
  kale_cfg.objective = Objective::Kale;
  return train_discriminator(data, Model(std::move(model)), schedule, kale_cfg, rng, on_iter);
}

} // namespace dmmd
