#include "dmmd/program.hpp"

#include "dmmd/error.hpp"

#include <cmath>

namespace dmmd {

Program::Node Program::make_node(Kind kind, std::vector<NodeId> inputs, Vector value) {
  Node node;
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  return node;
}

Program::NodeId Program::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

const Program::Node& Program::at(NodeId n) const {
  if (n >= nodes_.size()) throw ConfigError("program: unknown node id");
  return nodes_[n];
}

Program::NodeId Program::constant(Vector v) {
  Node node = make_node(Kind::Constant, {}, std::move(v));
  return push(std::move(node));
}

Program::NodeId Program::scalar(double v) { return constant(Vector::Constant(1, v)); }

Program::NodeId Program::features(NodeId x, double t) {
  Node node = make_node(Kind::Features, {x}, Vector());
  node.t = t;
  const Matrix col = at(x).value;
  node.value = net_->forward(col, t, &node.tape);
  return push(std::move(node));
}

Program::NodeId Program::input_grad(NodeId x, double t, NodeId cotangent) {
  const Vector& c = at(cotangent).value;
  if (c.size() != net_->output_dim())
    throw ShapeError("program: input_grad cotangent must have the feature dimension");
  Node node = make_node(Kind::InputGrad, {x, cotangent}, Vector());
  node.t = t;
  const Matrix col = at(x).value;
  net_->forward(col, t, &node.tape);
  const Matrix cot = c;
  node.value = net_->backward(node.tape, cot, nullptr);
  if (!node.value.allFinite()) throw NumericError("program: non-finite input gradient");
  return push(std::move(node));
}

Program::NodeId Program::dot(NodeId a, NodeId b) {
  const Vector& va = at(a).value;
  const Vector& vb = at(b).value;
  if (va.size() != vb.size()) throw ShapeError("program: dot of vectors with different sizes");
  Node node = make_node(Kind::Dot, {a, b}, Vector::Constant(1, va.dot(vb)));
  return push(std::move(node));
}

Program::NodeId Program::norm(NodeId a) {
  Node node = make_node(Kind::Norm, {a}, Vector::Constant(1, at(a).value.norm()));
  return push(std::move(node));
}

Program::NodeId Program::exp(NodeId a) {
  Node node = make_node(Kind::Exp, {a}, at(a).value.array().exp().matrix());
  if (!node.value.allFinite()) throw NumericError("program: exp overflow");
  return push(std::move(node));
}

Program::NodeId Program::mean(std::span<const NodeId> inputs) {
  if (inputs.empty()) throw ConfigError("program: mean of no nodes");
  Vector acc = Vector::Zero(at(inputs.front()).value.size());
  for (NodeId n : inputs) {
    if (at(n).value.size() != acc.size()) throw ShapeError("program: mean of mixed sizes");
    acc += at(n).value;
  }
  acc /= static_cast<double>(inputs.size());
  Node node = make_node(Kind::Mean, std::vector<NodeId>(inputs.begin(), inputs.end()), std::move(acc));
  return push(std::move(node));
}

Program::NodeId Program::add(NodeId a, NodeId b) {
  if (at(a).value.size() != at(b).value.size()) throw ShapeError("program: add size mismatch");
  Node node = make_node(Kind::Add, {a, b}, at(a).value + at(b).value);
  return push(std::move(node));
}

Program::NodeId Program::sub(NodeId a, NodeId b) {
  if (at(a).value.size() != at(b).value.size()) throw ShapeError("program: sub size mismatch");
  Node node = make_node(Kind::Sub, {a, b}, at(a).value - at(b).value);
  return push(std::move(node));
}

Program::NodeId Program::scale(NodeId a, double factor) {
  Node node = make_node(Kind::Scale, {a}, factor * at(a).value);
  node.factor = factor;
  return push(std::move(node));
}

Program::NodeId Program::opaque(NodeId a, std::function<Vector(const Vector&)> fn,
                                std::string name) {
  Node node = make_node(Kind::Opaque, {a}, fn(at(a).value));
  node.name = std::move(name);
  return push(std::move(node));
}

const Vector& Program::value(NodeId n) const { return at(n).value; }

double Program::scalar_value(NodeId n) const {
  const Vector& v = at(n).value;
  if (v.size() != 1) throw ShapeError("program: node is not a scalar");
  return v[0];
}

Vector Program::gradient(NodeId loss) const {
  if (at(loss).value.size() != 1) throw ShapeError("program: loss must be a scalar node");

  Vector grad = Vector::Zero(net_->parameter_count());
  std::vector<Vector> adjoint(loss + 1);
  std::vector<bool> reached(loss + 1, false);
  adjoint[loss] = Vector::Ones(1);
  reached[loss] = true;

  auto accumulate = [&](NodeId n, const Vector& contribution) {
    if (!reached[n]) {
      adjoint[n] = contribution;
      reached[n] = true;
    } else {
      adjoint[n] += contribution;
    }
  };

  for (NodeId id = loss + 1; id-- > 0;) {
    if (!reached[id]) continue;
    const Node& node = nodes_[id];
    const Vector& bar = adjoint[id];
    switch (node.kind) {
    case Kind::Constant:
      break;
    case Kind::Features: {
      const Matrix cot = bar;
      Matrix x_bar = net_->backward(node.tape, cot, &grad);
      accumulate(node.inputs[0], x_bar.col(0));
      break;
    }
    case Kind::InputGrad: {
      // value = J(x)^T c; pull back along bar with one JVP of the reverse pass.
      const Matrix direction = bar;
      FeatureNet::TangentTape tangents;
      const Matrix jc = net_->jvp(node.tape, direction, &tangents);
      const Matrix cot = nodes_[node.inputs[1]].value;
      const Matrix zero = Matrix::Zero(cot.rows(), cot.cols());
      Matrix x_bar = net_->backward_tangent(node.tape, tangents, cot, zero, &grad);
      accumulate(node.inputs[0], x_bar.col(0));
      accumulate(node.inputs[1], jc.col(0));
      break;
    }
    case Kind::Dot:
      accumulate(node.inputs[0], bar[0] * nodes_[node.inputs[1]].value);
      accumulate(node.inputs[1], bar[0] * nodes_[node.inputs[0]].value);
      break;
    case Kind::Norm: {
      const Vector& a = nodes_[node.inputs[0]].value;
      const double n = node.value[0];
      accumulate(node.inputs[0], n > 0.0 ? Vector(bar[0] / n * a) : Vector::Zero(a.size()));
      break;
    }
    case Kind::Exp:
      accumulate(node.inputs[0], bar.cwiseProduct(node.value));
      break;
    case Kind::Mean: {
      const Vector share = bar / static_cast<double>(node.inputs.size());
      for (NodeId in : node.inputs) accumulate(in, share);
      break;
    }
    case Kind::Add:
      accumulate(node.inputs[0], bar);
      accumulate(node.inputs[1], bar);
      break;
    case Kind::Sub:
      accumulate(node.inputs[0], bar);
      accumulate(node.inputs[1], -bar);
      break;
    case Kind::Scale:
      accumulate(node.inputs[0], node.factor * bar);
      break;
    case Kind::Opaque:
      throw UnsupportedOperation("program: cannot differentiate through opaque node '" +
                                 node.name + "'");
    }
  }
  return grad;
}

Vector loss_grad_params(const Program& program, Program::NodeId loss) {
  return program.gradient(loss);
}

} // namespace dmmd
