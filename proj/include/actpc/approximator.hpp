#pragma once

// Trainable map from distribution features to embedding vectors, its
// training and recalibration loops, operator reconstruction at inference
// time and a convex ensemble of approximators.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "actpc/embedding.hpp"
#include "actpc/geometry.hpp"
#include "actpc/mlp.hpp"
#include "actpc/pc_net.hpp"

namespace actpc {

/// Feature recipe, version 1 (21 values):
///   [0, 8)   raw moments E[x^k], k = 1..4, of both spectral coordinates
///   8        Shannon entropy (nats)
///   [9, 13)  top-4 weights, descending
///   [13, 21) counts of the top-4 nodes hashed into 8 slots by weighted degree
inline constexpr int kFeatureVersion = 1;
inline constexpr int kFeatureDim = 21;

/// N x 2 spectral coordinates: eigenvectors of the two smallest nonzero
/// eigenvalues of the omega-weighted Laplacian, scaled by sqrt(N) and
/// oriented so each column has positive third moment.
Mat spectral_coordinates(const GroundMetricGraph& g);

Vec extract_features(const Distribution& p, const GroundMetricGraph& g);
/// Same, with precomputed spectral coordinates.
Vec extract_features(const Distribution& p, const GroundMetricGraph& g, const Mat& coords);

enum class TrainerKind { predictive_coding, backprop };

struct ApproximatorConfig {
  int hidden = 16;
  int epochs = 200;
  TrainerKind trainer = TrainerKind::predictive_coding;
  double eta_w = 0.01;      // weight step (PC) or learning rate (backprop)
  double eta_z = 0.1;       // PC state step
  int micro_iterations = 8; // PC relaxation steps per sample
  std::uint64_t seed = 0;
};

struct ApproxSample {
  Vec features;
  Vec target;
};

/// Feature standardization followed by either a predictive-coding network
/// (top clamped to the features, bottom read out) or a tanh perceptron.
class Approximator {
 public:
  Approximator(int feature_dim, int output_dim, const ApproximatorConfig& config);

  Vec predict(const Vec& features) const;
  /// One training update on a single pair; returns the squared error before the update.
  double train_step(const Vec& features, const Vec& target);
  void fit_scaler(const std::vector<ApproxSample>& data);

  int feature_dim() const { return feature_dim_; }
  int output_dim() const { return output_dim_; }
  const ApproximatorConfig& config() const { return config_; }
  const Vec& scaler_mean() const { return mean_; }
  const Vec& scaler_scale() const { return scale_; }
  const PCNetwork* pc_network() const { return pc_ ? &*pc_ : nullptr; }
  const Mlp* perceptron() const { return mlp_ ? &*mlp_ : nullptr; }

  bool operator==(const Approximator& other) const;

  void save(const std::filesystem::path& path) const;
  static Approximator load(const std::filesystem::path& path);

 private:
  Vec top_input(const Vec& features) const;

  int feature_dim_;
  int output_dim_;
  ApproximatorConfig config_;
  Vec mean_, scale_;
  std::optional<PCNetwork> pc_;
  std::optional<Mlp> mlp_;
};

struct TrainResult {
  Approximator net;
  std::vector<double> loss_trace;  // mean squared error per epoch, measured before each update
};

/// Minimizes |z - f(features)|^2 by per-sample updates in a seeded order.
/// Throws DivergenceError (iteration = epoch) on a non-finite loss.
TrainResult train_approximator(const std::vector<ApproxSample>& data, const ApproximatorConfig& config);

double mean_squared_error(const Approximator& net, const std::vector<ApproxSample>& data);
/// MSE of always predicting the mean target of `fit` on `eval`.
double mean_predictor_mse(const std::vector<ApproxSample>& fit, const std::vector<ApproxSample>& eval);

/// Decodes the predicted embedding of p's features back to an operator.
FactorTriple predict_and_reconstruct(const Approximator& net, const Distribution& p,
                                     const GroundMetricGraph& g, const EmbeddingBasis& basis,
                                     const std::vector<FactorTriple>& codebook,
                                     const DecodeOptions& options = {});

struct RecalibrationResult {
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool reverted = false;  // the update raised the fresh-pair loss by more than 5% and was undone
};

/// Runs `steps` updates cycling over the fresh pairs only.
RecalibrationResult recalibrate(Approximator& net, const std::vector<ApproxSample>& fresh, int steps);

struct FreshPair {
  Distribution p;
  FactorTriple truth;
};

/// Projects ground-truth operators into the basis, then recalibrates.
RecalibrationResult recalibrate(Approximator& net, const std::vector<FreshPair>& fresh,
                                const GroundMetricGraph& g, const EmbeddingBasis& basis, int steps);

/// One ensemble member: a predictor fed its own input representation.
using EnsembleMember = std::function<Vec(const Vec&)>;

/// Convex combination of member outputs; weights must be >= 0 and sum to 1.
Vec ensemble_predict(const std::vector<EnsembleMember>& members, const std::vector<Vec>& inputs,
                     const Vec& weights);

/// Softmax decode temperature: median squared nearest-neighbour distance
/// among the landmark embeddings.
double suggest_temperature(const EmbeddingBasis& basis);

// Dataset persistence as JSON lines {"features": [...], "embedding": [...]}.
void save_dataset(const std::vector<ApproxSample>& data, const std::filesystem::path& path);
std::vector<ApproxSample> load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Versioned synthetic family used by the tests and the harness.

/// "approx-family-v1": 8 nodes at seeded positions in the unit square with
/// Euclidean cost; distributions softmax(kappa (a x_i + b y_i)) with
/// (a, b) uniform on [-1, 1]^2 and kappa = 2.5.
struct SyntheticFamily {
  GroundMetricGraph graph;
  Mat positions;  // N x 2
  double kappa = 2.5;

  static SyntheticFamily make(std::uint64_t seed, int nodes = 8);
  Distribution at(double a, double b) const;
  Distribution sample(Rng& rng) const;
};

/// Operator item with the full-rank pseudoinverse of L(p).
OperatorItem operator_item(const Distribution& p, const GroundMetricGraph& g);

}  // namespace actpc
