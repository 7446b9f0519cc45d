#pragma once

// Small fully connected network with explicit backpropagation. Used as the
// gradient-trained baseline of the approximator and by the fuzzy concept
// learner, which needs per-entry clamp masks.

#include <cstdint>
#include <vector>

#include "actpc/types.hpp"

namespace actpc {

enum class DenseActivation { identity, tanh, sigmoid };

struct DenseLayer {
  Mat W;  // out x in
  Vec b;
  DenseActivation act = DenseActivation::tanh;
};

struct MlpGradients {
  std::vector<Mat> W;
  std::vector<Vec> b;
};

class Mlp {
 public:
  Mlp() = default;
  /// dims = {in, hidden..., out}; acts has dims.size() - 1 entries.
  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  Mlp(const std::vector<int>& dims, const std::vector<DenseActivation>& acts, std::uint64_t seed);

  struct Tape {
    std::vector<Vec> out;  // out[0] = input, out[l+1] = activation of layer l
  };

  Vec forward(const Vec& x) const;
  Vec forward(const Vec& x, Tape& tape) const;

  /// Accumulates dL/dW and dL/db into `grads` given dL/d(output); returns dL/dx.
  Vec backward(const Tape& tape, const Vec& dout, MlpGradients& grads) const;

  MlpGradients zero_gradients() const;
  void apply(const MlpGradients& grads, double eta);

  int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().W.cols()); }
  int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().W.rows()); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  bool operator==(const Mlp& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

double dense_activate(DenseActivation a, double x);
/// Derivative expressed through the activation output y.
double dense_derivative_from_output(DenseActivation a, double y);

}  // namespace actpc
