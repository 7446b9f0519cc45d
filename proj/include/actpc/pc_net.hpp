#pragma once

// Layered predictive-coding network.
//
// Layer 0 is the bottom (sensory) layer and is clamped to the input during
// micro-iterations. Weight matrix W[l] maps the state of layer l+1 to a
// prediction of layer l:
//
//   zhat[l] = act_l(W[l] * z[l+1]),   l = 0 .. L-2
//   zhat[L-1] = top prior (zero unless configured)
//
// The objective is L_pred = sum_l |z[l] - zhat[l]|^2, optionally minus
// alpha * R for a user-supplied differentiable reward R.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "actpc/types.hpp"

namespace actpc {

enum class Activation { identity, tanh };

struct LayerSpec {
  int dim = 0;
  // Nonlinearity applied when this layer is predicted from the layer above.
  Activation activation = Activation::tanh;
};

enum class UpdateOrder {
  simultaneous,         // states and weights move together every iteration
  settle_states_first,  // k state-only iterations, weights updated after the last
};

struct PCConfig {
  std::vector<LayerSpec> layers;  // bottom first
  double eta_z = 0.05;
  double eta_w = 0.01;
  std::uint64_t seed = 0;
  std::optional<Vec> top_prior;  // zero vector if absent
  UpdateOrder order = UpdateOrder::simultaneous;

  void validate() const;
};

class PCNetwork {
 public:
  explicit PCNetwork(PCConfig config);

  int num_layers() const { return static_cast<int>(states_.size()); }
  int dim(int layer) const { return config_.layers.at(layer).dim; }
  Activation activation(int layer) const { return config_.layers.at(layer).activation; }
  const PCConfig& config() const { return config_; }
  void set_step_sizes(double eta_z, double eta_w);

  // W[l]: dim(l) x dim(l+1).
  const Mat& weight(int l) const { return weights_.at(l); }
  Mat& weight(int l) { return weights_.at(l); }
  const std::vector<Mat>& weights() const { return weights_; }

  const Vec& state(int l) const { return states_.at(l); }
  Vec& state(int l) { return states_.at(l); }
  const std::vector<Vec>& states() const { return states_; }

  Vec top_prior() const;

  // Clamps the bottom layer and, optionally, the top layer.
  void clamp_bottom(const Vec& input);
  void clamp_top(const Vec& value);
  void release_top() { top_clamped_ = false; }
  bool top_clamped() const { return top_clamped_; }

  // Feed-forward (top-down) sweep: z[l] = act(W[l] z[l+1]) for all free
  // layers below the top. Returns the bottom prediction.
  Vec sweep_down();
  // Same sweep from an explicit top value without touching the network.
  Vec predict_from_top(const Vec& top) const;

  std::size_t parameter_count() const;
  void check_consistent() const;

  bool operator==(const PCNetwork& other) const;

 private:
  PCConfig config_;
  std::vector<Mat> weights_;
  std::vector<Vec> states_;
  bool top_clamped_ = false;
};

struct ErrorField {
  std::vector<Vec> errors;  // e[l] = z[l] - zhat[l]
  double loss = 0.0;        // sum_l |e[l]|^2
};

struct Gradients {
  std::vector<Vec> states;
  std::vector<Mat> weights;
};

/// Differentiable scalar reward added to the objective as -alpha * R.
struct RewardTerm {
  double alpha = 0.0;
  std::function<double(const PCNetwork&)> value;
  std::function<Gradients(const PCNetwork&)> gradient;
};

double apply_activation(Activation a, double x);
double activation_derivative(Activation a, double x);

std::vector<Vec> forward_predict(const PCNetwork& net);
ErrorField compute_errors(const PCNetwork& net, const std::vector<Vec>& predictions);
ErrorField compute_errors(const PCNetwork& net);

/// Full gradient of L_total (= L_pred - alpha R) with respect to every state
/// and weight, including the feedback term each state receives through the
/// prediction it makes of the layer below.
Gradients loss_gradients(const PCNetwork& net, const RewardTerm* reward = nullptr);
double total_loss(const PCNetwork& net, const RewardTerm* reward = nullptr);

/// Per-layer preconditioners for the weight update. Entry l acts on the
/// column-major vectorization of W[l]; an empty matrix means identity.
using Preconditioner = std::vector<Mat>;

struct MicroOptions {
  int iterations = 1;
  const Preconditioner* preconditioner = nullptr;
  const RewardTerm* reward = nullptr;
  std::optional<UpdateOrder> order;  // overrides the network's configured order
  bool update_weights = true;
};

struct MicroResult {
  std::vector<double> trace;  // L_pred before the first and after every iteration
  ErrorField final_errors;
};

/// Runs k micro-iterations with layer 0 clamped to `input`.
/// Throws DivergenceError naming the iteration and layer on non-finite values.
MicroResult micro_iterate(PCNetwork& net, const Vec& input, const MicroOptions& options);

// Config and checkpoint I/O.
PCConfig pc_config_from_json(const nlohmann::json& j);
nlohmann::json pc_config_to_json(const PCConfig& config);

/// Checkpoint layout: one line of JSON header, then the weights of every
/// layer (column-major) followed by every state, as little-endian float64.
void save_checkpoint(const PCNetwork& net, const std::filesystem::path& path);
PCNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace actpc
