#pragma once

#include "dmmd/feature_net.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dmmd {

/// A small differentiable scalar program over one FeatureNet.
///
/// Nodes are evaluated eagerly as they are added, so `value()` is available at once.
/// `gradient()` runs a single reverse sweep and returns the exact gradient of a scalar
/// node with respect to every network parameter. `input_grad` nodes embed a first-order
/// input gradient of the network; their reverse rule is a forward-over-reverse pass, so
/// losses such as (||grad_z f(z)|| - 1)^2 differentiate exactly.
class Program {
public:
  using NodeId = std::size_t;

  explicit Program(const FeatureNet& net) : net_(&net) {}

  NodeId constant(Vector v);
  NodeId scalar(double v);

  /// phi(x, t).
  NodeId features(NodeId x, double t);
  /// J_x(x, t)^T cotangent, the input pullback of phi.
  NodeId input_grad(NodeId x, double t, NodeId cotangent);

  NodeId dot(NodeId a, NodeId b);
  NodeId norm(NodeId a);
  NodeId exp(NodeId a);
  NodeId mean(std::span<const NodeId> nodes);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);

  /// Evaluate-only node; differentiating through it raises UnsupportedOperation.
  NodeId opaque(NodeId a, std::function<Vector(const Vector&)> fn, std::string name);

  const Vector& value(NodeId n) const;
  double scalar_value(NodeId n) const;

  /// Gradient of the scalar node `loss` with respect to the network parameters.
  Vector gradient(NodeId loss) const;

  std::size_t size() const { return nodes_.size(); }

private:
  enum class Kind { Constant, Features, InputGrad, Dot, Norm, Exp, Mean, Add, Sub, Scale, Opaque };

  struct Node {
    Kind kind = Kind::Constant;
    std::vector<NodeId> inputs;
    Vector value;
    double t = 0.0;
    double factor = 1.0;
    std::string name;
    FeatureNet::Tape tape;
  };

  static Node make_node(Kind kind, std::vector<NodeId> inputs, Vector value);
  NodeId push(Node node);
  const Node& at(NodeId n) const;

  const FeatureNet* net_;
  std::vector<Node> nodes_;
};

/// Free-function spelling of Program::gradient.
Vector loss_grad_params(const Program& program, Program::NodeId loss);

} // namespace dmmd
