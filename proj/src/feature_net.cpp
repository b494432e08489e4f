#include "dmmd/feature_net.hpp"

#include "dmmd/error.hpp"
#include "dmmd/time_embedding.hpp"

#include <cmath>

namespace dmmd {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Matrix activate(Activation act, const Matrix& h) {
  switch (act) {
  case Activation::Identity:
    return h;
  case Activation::Relu:
    return h.cwiseMax(0.0);
  case Activation::Elu:
    return h.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  case Activation::Gelu:
    return h.unaryExpr(
        [](double v) { return v * 0.5 * (1.0 + std::erf(v * kInvSqrt2)); });
  }
  return h;
}

Matrix activate_d1(Activation act, const Matrix& h) {
  switch (act) {
  case Activation::Identity:
    return Matrix::Ones(h.rows(), h.cols());
  case Activation::Relu:
    return h.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  case Activation::Elu:
    return h.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
  case Activation::Gelu:
    return h.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      return cdf + v * pdf;
    });
  }
  return h;
}

Matrix activate_d2(Activation act, const Matrix& h) {
  switch (act) {
  case Activation::Identity:
  case Activation::Relu:
    return Matrix::Zero(h.rows(), h.cols());
  case Activation::Elu:
    return h.unaryExpr([](double v) { return v > 0.0 ? 0.0 : std::exp(v); });
  case Activation::Gelu:
    return h.unaryExpr([](double v) {
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      return pdf * (2.0 - v * v);
    });
  }
  return h;
}

// Views into a flat parameter vector.
struct LayerSlices {
  Eigen::Index weight_offset;
  Eigen::Index bias_offset;
};

std::vector<LayerSlices> slices(const std::vector<DenseLayer>& layers) {
  std::vector<LayerSlices> out;
  Eigen::Index offset = 0;
  for (const auto& layer : layers) {
    LayerSlices s{offset, offset + layer.weight.size()};
    offset = s.bias_offset + layer.bias.size();
    out.push_back(s);
  }
  return out;
}

Eigen::Map<Matrix> weight_view(Vector& flat, const LayerSlices& s, const DenseLayer& l) {
  return Eigen::Map<Matrix>(flat.data() + s.weight_offset, l.weight.rows(), l.weight.cols());
}

Eigen::Map<Vector> bias_view(Vector& flat, const LayerSlices& s, const DenseLayer& l) {
  return Eigen::Map<Vector>(flat.data() + s.bias_offset, l.bias.size());
}

} // namespace

std::string to_string(Activation a) {
  switch (a) {
  case Activation::Identity:
    return "identity";
  case Activation::Relu:
    return "relu";
  case Activation::Elu:
    return "elu";
  case Activation::Gelu:
    return "gelu";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "elu") return Activation::Elu;
  if (name == "gelu") return Activation::Gelu;
  throw ConfigError("unknown activation '" + name + "'");
}

FeatureNet::FeatureNet(int input_dim, int embed_dim, std::vector<DenseLayer> layers)
    : input_dim_(input_dim), embed_dim_(embed_dim), layers_(std::move(layers)) {
  if (input_dim_ < 0 || embed_dim_ < 0 || input_dim_ + embed_dim_ == 0)
    throw ConfigError("feature net needs a positive total input dimension");
  if (embed_dim_ % 2 != 0) throw ConfigError("time embedding dimension must be even");
  if (layers_.empty()) throw ConfigError("feature net needs at least one layer");
  Eigen::Index fan_in = input_dim_ + embed_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.cols() != fan_in || l.bias.size() != l.weight.rows())
      throw ShapeError("feature net layer " + std::to_string(i) + " has inconsistent shape");
    fan_in = l.weight.rows();
  }
}

FeatureNet FeatureNet::make(int input_dim, int embed_dim, std::span<const int> widths,
                            Activation hidden, Activation output, Rng& rng) {
  if (widths.empty()) throw ConfigError("feature net needs at least one layer");
  std::vector<DenseLayer> layers;
  int fan_in = input_dim + embed_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] <= 0 || fan_in <= 0) throw ConfigError("layer widths must be positive");
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> uniform(-limit, limit);
    DenseLayer layer;
    layer.weight.resize(widths[i], fan_in);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = uniform(rng);
    layer.bias = Vector::Zero(widths[i]);
    layer.activation = (i + 1 == widths.size()) ? output : hidden;
    layers.push_back(std::move(layer));
    fan_in = widths[i];
  }
  return FeatureNet(input_dim, embed_dim, std::move(layers));
}

int FeatureNet::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

Eigen::Index FeatureNet::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Vector FeatureNet::parameters() const {
  Vector flat(parameter_count());
  const auto s = slices(layers_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    weight_view(flat, s[i], layers_[i]) = layers_[i].weight;
    bias_view(flat, s[i], layers_[i]) = layers_[i].bias;
  }
  return flat;
}

void FeatureNet::set_parameters(const Eigen::Ref<const Vector>& flat) {
  if (flat.size() != parameter_count())
    throw ShapeError("parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                     std::to_string(parameter_count()));
  Vector copy = flat;
  const auto s = slices(layers_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight = weight_view(copy, s[i], layers_[i]);
    layers_[i].bias = bias_view(copy, s[i], layers_[i]);
  }
}

void FeatureNet::check_input(const Eigen::Ref<const Matrix>& x) const {
  if (x.rows() != input_dim_)
    throw ShapeError("feature net expects inputs of dimension " + std::to_string(input_dim_) +
                     ", got " + std::to_string(x.rows()));
}

Matrix FeatureNet::forward(const Eigen::Ref<const Matrix>& x, double t, Tape* tape) const {
  check_input(x);
  const Eigen::Index batch = x.cols();
  const Vector embedding = time_embedding(t, embed_dim_);

  const auto& first = layers_.front();
  Vector shift = first.bias;
  if (embed_dim_ > 0) shift += first.weight.rightCols(embed_dim_) * embedding;
  Matrix h = shift.replicate(1, batch);
  if (input_dim_ > 0) h.noalias() += first.weight.leftCols(input_dim_) * x;

  if (tape) {
    tape->t = t;
    tape->embedding = embedding;
    tape->input = x;
    tape->pre.clear();
    tape->post.clear();
  }

  Matrix a = activate(first.activation, h);
  if (tape) {
    tape->pre.push_back(std::move(h));
    tape->post.push_back(a);
  }
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Matrix hl = layer.bias.replicate(1, batch);
    hl.noalias() += layer.weight * a;
    a = activate(layer.activation, hl);
    if (tape) {
      tape->pre.push_back(std::move(hl));
      tape->post.push_back(a);
    }
  }
  return a;
}

Vector FeatureNet::forward_point(const Eigen::Ref<const Vector>& x, double t) const {
  Matrix col = x;
  return forward(col, t);
}

Matrix FeatureNet::backward(const Tape& tape, const Eigen::Ref<const Matrix>& cot,
                            Vector* param_grad) const {
  if (tape.pre.size() != layers_.size()) throw ShapeError("tape does not match network");
  if (cot.rows() != output_dim() || cot.cols() != tape.input.cols())
    throw ShapeError("cotangent shape does not match network output");
  if (param_grad && param_grad->size() != parameter_count())
    throw ShapeError("parameter gradient has the wrong size");

  const auto s = slices(layers_);
  Matrix delta_a = cot;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    Matrix delta_h = activate_d1(layer.activation, tape.pre[l]).cwiseProduct(delta_a);
    if (param_grad) {
      auto gw = weight_view(*param_grad, s[l], layer);
      if (l > 0) {
        gw.noalias() += delta_h * tape.post[l - 1].transpose();
      } else {
        if (input_dim_ > 0) gw.leftCols(input_dim_).noalias() += delta_h * tape.input.transpose();
        if (embed_dim_ > 0)
          gw.rightCols(embed_dim_).noalias() += delta_h.rowwise().sum() * tape.embedding.transpose();
      }
      bias_view(*param_grad, s[l], layer) += delta_h.rowwise().sum();
    }
    if (l > 0) {
      delta_a.noalias() = layer.weight.transpose() * delta_h;
    } else {
      if (input_dim_ == 0) return Matrix::Zero(0, cot.cols());
      return layer.weight.leftCols(input_dim_).transpose() * delta_h;
    }
  }
  return {};
}

Matrix FeatureNet::jvp(const Tape& tape, const Eigen::Ref<const Matrix>& x_dot,
                       TangentTape* tangents) const {
  if (tape.pre.size() != layers_.size()) throw ShapeError("tape does not match network");
  if (x_dot.rows() != input_dim_ || x_dot.cols() != tape.input.cols())
    throw ShapeError("input tangent shape does not match tape");
  if (tangents) {
    tangents->input_dot = x_dot;
    tangents->pre_dot.clear();
    tangents->post_dot.clear();
  }
  Matrix a_dot;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Matrix h_dot = (l == 0) ? Matrix(layer.weight.leftCols(input_dim_) * x_dot)
                            : Matrix(layer.weight * a_dot);
    a_dot = activate_d1(layer.activation, tape.pre[l]).cwiseProduct(h_dot);
    if (tangents) {
      tangents->pre_dot.push_back(std::move(h_dot));
      tangents->post_dot.push_back(a_dot);
    }
  }
  return a_dot;
}

Matrix FeatureNet::backward_tangent(const Tape& tape, const TangentTape& tangents,
                                    const Eigen::Ref<const Matrix>& cot,
                                    const Eigen::Ref<const Matrix>& cot_dot,
                                    Vector* param_grad_dot, Matrix* input_cot) const {
  if (tangents.pre_dot.size() != layers_.size()) throw ShapeError("tangent tape is incomplete");
  if (cot.rows() != output_dim() || cot.cols() != tape.input.cols() ||
      cot_dot.rows() != cot.rows() || cot_dot.cols() != cot.cols())
    throw ShapeError("cotangent shape does not match network output");
  if (param_grad_dot && param_grad_dot->size() != parameter_count())
    throw ShapeError("parameter gradient has the wrong size");

  const auto s = slices(layers_);
  Matrix delta_a = cot;
  Matrix delta_a_dot = cot_dot;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Matrix d1 = activate_d1(layer.activation, tape.pre[l]);
    Matrix delta_h = d1.cwiseProduct(delta_a);
    Matrix delta_h_dot = d1.cwiseProduct(delta_a_dot);
    if (layer.activation != Activation::Identity && layer.activation != Activation::Relu)
      delta_h_dot += activate_d2(layer.activation, tape.pre[l])
                         .cwiseProduct(tangents.pre_dot[l])
                         .cwiseProduct(delta_a);
    if (param_grad_dot) {
      auto gw = weight_view(*param_grad_dot, s[l], layer);
      if (l > 0) {
        gw.noalias() += delta_h_dot * tape.post[l - 1].transpose();
        gw.noalias() += delta_h * tangents.post_dot[l - 1].transpose();
      } else {
        if (input_dim_ > 0) {
          gw.leftCols(input_dim_).noalias() += delta_h_dot * tape.input.transpose();
          gw.leftCols(input_dim_).noalias() += delta_h * tangents.input_dot.transpose();
        }
        if (embed_dim_ > 0)
          gw.rightCols(embed_dim_).noalias() +=
              delta_h_dot.rowwise().sum() * tape.embedding.transpose();
      }
      bias_view(*param_grad_dot, s[l], layer) += delta_h_dot.rowwise().sum();
    }
    if (l > 0) {
      delta_a.noalias() = layer.weight.transpose() * delta_h;
      delta_a_dot.noalias() = layer.weight.transpose() * delta_h_dot;
    } else {
      const auto w_in = layer.weight.leftCols(input_dim_);
      if (input_cot) *input_cot = w_in.transpose() * delta_h;
      return w_in.transpose() * delta_h_dot;
    }
  }
  return {};
}

} // namespace dmmd
