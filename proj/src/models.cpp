#include "dmmd/models.hpp"

#include "dmmd/error.hpp"

#include <memory>

namespace dmmd {

namespace {

template <class... Ts> struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts> Overloaded(Ts...) -> Overloaded<Ts...>;

nlohmann::json describe_kernel(const BaseKernel& base) {
  return std::visit(
      Overloaded{
          [](const LinearKernel&) { return nlohmann::json{{"family", "linear"}}; },
          [](const RbfKernel& k) { return nlohmann::json{{"family", "rbf"}, {"param", k.sigma}}; },
          [](const RationalQuadraticKernel& k) {
            return nlohmann::json{{"family", "rational_quadratic"}, {"param", k.alpha}};
          },
          [](const NormalizedGaussianKernel& k) {
            return nlohmann::json{
                {"family", "normalized_gaussian"}, {"param", k.alpha}, {"dim", k.dim}};
          }},
      base);
}

} // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
  case ModelKind::Features:
    return "features";
  case ModelKind::Bandwidth:
    return "bandwidth";
  case ModelKind::Kale:
    return "kale";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "features") return ModelKind::Features;
  if (name == "bandwidth") return ModelKind::Bandwidth;
  if (name == "kale") return ModelKind::Kale;
  throw ConfigError("unknown model kind '" + name + "'");
}

BaseKernel make_base_kernel(const std::string& family, double param, int dim) {
  if (family == "linear") return KernelSpec::linear().base();
  if (family == "rbf") return KernelSpec::rbf(param).base();
  if (family == "rational_quadratic") return KernelSpec::rational_quadratic(param).base();
  if (family == "normalized_gaussian") return KernelSpec::normalized_gaussian(param, dim).base();
  throw ConfigError("unknown kernel family '" + family + "'");
}

FeatureModel::FeatureModel(FeatureNet net, BaseKernel base)
    : net_(std::move(net)), base_(base) {
  if (const auto* ng = std::get_if<NormalizedGaussianKernel>(&base_);
      ng && ng->dim != net_.output_dim())
    throw ConfigError("normalized gaussian dimension must equal the feature dimension");
}

KernelSpec FeatureModel::kernel_at(double t) const {
  const KernelSpec base = std::visit(
      Overloaded{[](const LinearKernel&) { return KernelSpec::linear(); },
                 [](const RbfKernel& k) { return KernelSpec::rbf(k.sigma); },
                 [](const RationalQuadraticKernel& k) {
                   return KernelSpec::rational_quadratic(k.alpha);
                 },
                 [](const NormalizedGaussianKernel& k) {
                   return KernelSpec::normalized_gaussian(k.alpha, k.dim);
                 }},
      base_);
  return base.composed_with(std::make_shared<const FeatureNet>(net_), t);
}

BandwidthModel::BandwidthModel(FeatureNet g, double sigma_min)
    : g_(std::move(g)), sigma_min_(sigma_min) {
  if (g_.input_dim() != 0 || g_.output_dim() != 1)
    throw ConfigError("bandwidth net must map the noise level to a scalar");
  if (!(sigma_min > 0.0)) throw ConfigError("sigma_min must be positive");
}

double BandwidthModel::sigma(double t) const { return sigma(t, nullptr); }

double BandwidthModel::sigma(double t, Vector* dsigma) const {
  FeatureNet::Tape tape;
  const double g = g_.forward(Matrix(0, 1), t, dsigma ? &tape : nullptr)(0, 0);
  if (dsigma) {
    *dsigma = Vector::Zero(g_.parameter_count());
    if (g > 0.0) g_.backward(tape, Matrix::Ones(1, 1), dsigma);
  }
  return sigma_min_ + std::max(0.0, g);
}

KaleModel::KaleModel(FeatureNet phi, FeatureNet head)
    : phi_(std::move(phi)), head_(std::move(head)) {
  if (head_.input_dim() != 0) throw ConfigError("KALE head must depend on t only");
  if (head_.output_dim() != phi_.output_dim())
    throw ConfigError("KALE head width must equal the feature dimension");
}

Vector KaleModel::alpha(double t) const { return head_.forward(Matrix(0, 1), t).col(0); }

Vector KaleModel::witness(const ParticleSet& X, double t) const {
  if (X.cols() != phi_.input_dim()) throw ShapeError("particle dimension does not match network");
  return phi_.forward(X.transpose(), t).transpose() * alpha(t);
}

ParticleSet KaleModel::witness_grad(const ParticleSet& X, double t) const {
  if (X.cols() != phi_.input_dim()) throw ShapeError("particle dimension does not match network");
  FeatureNet::Tape tape;
  phi_.forward(X.transpose(), t, &tape);
  const Vector a = alpha(t);
  ParticleSet g = phi_.backward(tape, a.replicate(1, X.rows()), nullptr).transpose();
  if (!g.allFinite()) throw NumericError("KALE witness gradient is not finite");
  return g;
}

Eigen::Index KaleModel::parameter_count() const {
  return phi_.parameter_count() + head_.parameter_count();
}

Vector KaleModel::parameters() const {
  Vector p(parameter_count());
  p << phi_.parameters(), head_.parameters();
  return p;
}

void KaleModel::set_parameters(const Eigen::Ref<const Vector>& p) {
  if (p.size() != parameter_count()) throw ShapeError("KALE parameter vector has wrong size");
  phi_.set_parameters(p.head(phi_.parameter_count()));
  head_.set_parameters(p.tail(head_.parameter_count()));
}

KernelSpec kernel_at(const Discriminator& model, double t) {
  return std::visit([t](const auto& m) { return m.kernel_at(t); }, model);
}

Eigen::Index parameter_count(const Model& model) {
  return std::visit([](const auto& m) { return m.parameter_count(); }, model);
}

Vector parameters(const Model& model) {
  return std::visit([](const auto& m) { return m.parameters(); }, model);
}

void set_parameters(Model& model, const Eigen::Ref<const Vector>& p) {
  std::visit([&p](auto& m) { m.set_parameters(p); }, model);
}

ModelKind kind_of(const Model& model) {
  return std::visit(Overloaded{[](const FeatureModel&) { return ModelKind::Features; },
                               [](const BandwidthModel&) { return ModelKind::Bandwidth; },
                               [](const KaleModel&) { return ModelKind::Kale; }},
                    model);
}

Discriminator as_discriminator(const Model& model) {
  if (const auto* f = std::get_if<FeatureModel>(&model)) return *f;
  if (const auto* b = std::get_if<BandwidthModel>(&model)) return *b;
  throw ConfigError("a KALE model has no MMD kernel");
}

Model make_model(const ModelConfig& cfg, int data_dim, Rng& rng) {
  if (data_dim < 1) throw ConfigError("data dimension must be >= 1");
  auto feature_net = [&] {
    std::vector<int> widths = cfg.hidden;
    widths.push_back(cfg.feature_dim);
    return FeatureNet::make(data_dim, cfg.embed_dim, widths, cfg.activation,
                            Activation::Identity, rng);
  };
  switch (cfg.kind) {
  case ModelKind::Features:
    return FeatureModel(feature_net(),
                        make_base_kernel(cfg.kernel, cfg.kernel_param, cfg.feature_dim));
  case ModelKind::Bandwidth: {
    if (cfg.bandwidth_widths.empty() || cfg.bandwidth_widths.back() != 1)
      throw ConfigError("bandwidth net must end in a single output");
    FeatureNet g = FeatureNet::make(0, cfg.bandwidth_embed_dim, cfg.bandwidth_widths,
                                    Activation::Relu, Activation::Identity, rng);
    if (cfg.bandwidth_bias_init != 0.0 || cfg.bandwidth_output_scale != 1.0) {
      const auto& w = cfg.bandwidth_widths;
      const Eigen::Index fan_in = w.size() > 1 ? w[w.size() - 2] : cfg.bandwidth_embed_dim;
      Vector p = g.parameters();
      p.segment(p.size() - 1 - fan_in, fan_in) *= cfg.bandwidth_output_scale;
      p[p.size() - 1] = cfg.bandwidth_bias_init;
      g.set_parameters(p);
    }
    return BandwidthModel(std::move(g), cfg.sigma_min);
  }
  case ModelKind::Kale: {
    FeatureNet phi = feature_net();
    std::vector<int> head_widths{cfg.head_hidden, cfg.feature_dim};
    FeatureNet head = FeatureNet::make(0, cfg.embed_dim, head_widths, Activation::Gelu,
                                       Activation::Identity, rng);
    return KaleModel(std::move(phi), std::move(head));
  }
  }
  throw ConfigError("unknown model kind");
}

Checkpoint to_checkpoint(const Model& model) {
  Checkpoint ckpt;
  ckpt.meta["model"] = to_string(kind_of(model));
  std::visit(Overloaded{[&](const FeatureModel& m) {
                          ckpt.meta["kernel"] = describe_kernel(m.base());
                          ckpt.nets.emplace_back("phi", m.net());
                        },
                        [&](const BandwidthModel& m) {
                          ckpt.meta["sigma_min"] = m.sigma_min();
                          ckpt.nets.emplace_back("bandwidth", m.net());
                        },
                        [&](const KaleModel& m) {
                          ckpt.nets.emplace_back("phi", m.phi());
                          ckpt.nets.emplace_back("head", m.head());
                        }},
             model);
  return ckpt;
}

Model from_checkpoint(const Checkpoint& ckpt) {
  try {
    switch (model_kind_from_string(ckpt.meta.at("model").get<std::string>())) {
    case ModelKind::Features: {
      const auto& k = ckpt.meta.at("kernel");
      const FeatureNet& phi = ckpt.net("phi");
      return FeatureModel(phi, make_base_kernel(k.at("family").get<std::string>(),
                                                k.value("param", 1.0), phi.output_dim()));
    }
    case ModelKind::Bandwidth:
      return BandwidthModel(ckpt.net("bandwidth"), ckpt.meta.at("sigma_min").get<double>());
    case ModelKind::Kale:
      return KaleModel(ckpt.net("phi"), ckpt.net("head"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  throw FormatError("unknown model kind in checkpoint");
}

} // namespace dmmd
