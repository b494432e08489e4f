#pragma once

#include "dmmd/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace dmmd {

enum class Activation { Identity, Relu, Elu, Gelu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Matrix weight; // out x in
  Vector bias;   // out
  Activation activation = Activation::Identity;
};

/// Noise-conditional multilayer perceptron phi(x, t).
///
/// The first layer sees the concatenation [x ; time_embedding(t, embed_dim)]; with
/// embed_dim == 0 the noise level is ignored and the net is a plain MLP of x. With
/// input_dim == 0 the net is a function of t alone (bandwidth and KALE heads).
///
/// Batched entry points take points as columns (input_dim x B). Parameters are
/// flattened layer by layer as [vec(W_0), b_0, vec(W_1), b_1, ...] with column-major
/// weights; gradients use the same layout.
class FeatureNet {
public:
  /// Activations recorded by a forward pass, needed by the reverse passes.
  struct Tape {
    double t = 0.0;
    Vector embedding;
    Matrix input;             // input_dim x B
    std::vector<Matrix> pre;  // pre-activation of each layer
    std::vector<Matrix> post; // output of each layer
  };

  /// Input-direction tangents of a forward pass (forward mode).
  struct TangentTape {
    Matrix input_dot;
    std::vector<Matrix> pre_dot;
    std::vector<Matrix> post_dot;
  };

  FeatureNet() = default;
  FeatureNet(int input_dim, int embed_dim, std::vector<DenseLayer> layers);

  /// He-style uniform fan-in initialization with zero biases. `widths` lists every
  /// layer's output width; hidden layers use `hidden`, the last layer `output`.
  static FeatureNet make(int input_dim, int embed_dim, std::span<const int> widths,
                         Activation hidden, Activation output, Rng& rng);

  int input_dim() const { return input_dim_; }
  int embed_dim() const { return embed_dim_; }
  int output_dim() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Eigen::Index parameter_count() const;
  Vector parameters() const;
  void set_parameters(const Eigen::Ref<const Vector>& flat);

  /// phi(x, t) for every column of x.
  Matrix forward(const Eigen::Ref<const Matrix>& x, double t, Tape* tape = nullptr) const;
  Vector forward_point(const Eigen::Ref<const Vector>& x, double t) const;

  /// Reverse pass. Returns J_x^T cot for every column; when `param_grad` is non-null the
  /// parameter gradient of <phi, cot> (summed over columns) is added to it.
  Matrix backward(const Tape& tape, const Eigen::Ref<const Matrix>& cot,
                  Vector* param_grad) const;

  /// Forward-mode derivative along the input tangent x_dot: returns J_x x_dot.
  Matrix jvp(const Tape& tape, const Eigen::Ref<const Matrix>& x_dot,
             TangentTape* tangents = nullptr) const;

  /// Forward-over-reverse pass: the derivative of `backward(tape, cot)` along the
  /// input tangent recorded in `tangents` while the cotangent moves along `cot_dot`.
  /// Adds the tangent of the parameter gradient to `param_grad_dot` and returns the
  /// tangent of the input cotangent. `input_cot`, when given, receives J_x^T cot.
  Matrix backward_tangent(const Tape& tape, const TangentTape& tangents,
                          const Eigen::Ref<const Matrix>& cot,
                          const Eigen::Ref<const Matrix>& cot_dot, Vector* param_grad_dot,
                          Matrix* input_cot = nullptr) const;

private:
  void check_input(const Eigen::Ref<const Matrix>& x) const;

  int input_dim_ = 0;
  int embed_dim_ = 0;
  std::vector<DenseLayer> layers_;
};

} // namespace dmmd
