#include "actpc/mlp.hpp"

#include <cmath>

#include "actpc/error.hpp"

namespace actpc {

double dense_activate(DenseActivation a, double x) {
  switch (a) {
    case DenseActivation::identity: return x;
    case DenseActivation::tanh: return std::tanh(x);
    case DenseActivation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

double dense_derivative_from_output(DenseActivation a, double y) {
  switch (a) {
    case DenseActivation::identity: return 1.0;
    case DenseActivation::tanh: return 1.0 - y * y;
    case DenseActivation::sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

Mlp::Mlp(const std::vector<int>& dims, const std::vector<DenseActivation>& acts, std::uint64_t seed) {
  if (dims.size() < 2 || acts.size() != dims.size() - 1)
    throw ConfigError("mlp needs at least two dims and one activation per layer");
  for (int d : dims)
    if (d < 1) throw ConfigError("mlp layer dimensions must be positive");
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    std::uniform_real_distribution<double> u(-s, s);
    DenseLayer layer;
    layer.W.resize(dims[l + 1], dims[l]);
    for (Eigen::Index j = 0; j < layer.W.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.W.rows(); ++i) layer.W(i, j) = u(rng);
    layer.b = Vec::Zero(dims[l + 1]);
    layer.act = acts[l];
    layers_.push_back(std::move(layer));
  }
}

Vec Mlp::forward(const Vec& x) const {
  Tape tape;
  return forward(x, tape);
}

Vec Mlp::forward(const Vec& x, Tape& tape) const {
  if (x.size() != input_dim()) throw DomainError("mlp input has the wrong dimension");
  tape.out.assign(1, x);
  for (const auto& layer : layers_) {
    Vec a = layer.W * tape.out.back() + layer.b;
    tape.out.push_back(a.unaryExpr([act = layer.act](double v) { return dense_activate(act, v); }));
  }
  return tape.out.back();
}

Vec Mlp::backward(const Tape& tape, const Vec& dout, MlpGradients& grads) const {
  Vec delta = dout;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const auto& layer = layers_[l];
    const Vec& y = tape.out[l + 1];
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta[i] *= dense_derivative_from_output(layer.act, y[i]);
    grads.W[l].noalias() += delta * tape.out[l].transpose();
    grads.b[l] += delta;
    delta = layer.W.transpose() * delta;
  }
  return delta;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const auto& layer : layers_) {
    g.W.push_back(Mat::Zero(layer.W.rows(), layer.W.cols()));
    g.b.push_back(Vec::Zero(layer.b.size()));
  }
  return g;
}

void Mlp::apply(const MlpGradients& grads, double eta) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].W -= eta * grads.W[l];
    layers_[l].b -= eta * grads.b[l];
  }
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.act != b.act || a.W.rows() != b.W.rows() || a.W.cols() != b.W.cols()) return false;
    if (a.W != b.W || a.b != b.b) return false;
  }
  return true;
}

}  // namespace actpc
