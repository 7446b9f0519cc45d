#pragma once

// Transport geometry on a finite support: measure-dependent graph Laplacians,
// their pseudoinverses, exact and entropic W2 distances, the Wasserstein
// metric tensor G = J^T L(p)^+ J and the natural-gradient step it induces.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "actpc/factor_triple.hpp"
#include "actpc/types.hpp"

namespace actpc {

/// Probability vector over N support points.
class Distribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit Distribution(Vec weights, std::vector<std::string> labels = {});

  /// Clips negatives to zero and rescales to unit mass.
  static Distribution normalized(const Vec& raw);
  static Distribution uniform(int n);
  static Distribution point_mass(int n, int index);

  const Vec& weights() const { return weights_; }
  int size() const { return static_cast<int>(weights_.size()); }
  double operator[](int i) const { return weights_[i]; }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  Vec weights_;
  std::vector<std::string> labels_;
};

/// Symmetric nonnegative adjacency (omega) and transport cost over N nodes.
struct GroundMetricGraph {
  Mat omega;
  Mat cost;

  int size() const { return static_cast<int>(cost.rows()); }
  void validate() const;

  /// omega_ij = exp(-cost_ij^2 / sigma^2); sigma defaults to the median
  /// nonzero off-diagonal cost.
  static GroundMetricGraph from_cost(const Mat& cost, double sigma = 0.0);
  static GroundMetricGraph from_matrices(Mat omega, Mat cost);
  /// Path 0-1-...-(n-1) with cost |i - j| and the default omega.
  static GroundMetricGraph path(int n);
};

struct MeasureLaplacian {
  Mat matrix;
  Distribution source;
};

struct PinvResult {
  FactorTriple factors;
  int effective_rank = 0;
  bool reduced_rank = false;  // graph disconnected: fewer than N-1 nonzero modes
};

struct TransportPlan {
  Mat pi;
  double cost_value = 0.0;  // sum pi_ij c_ij with the squared ground cost
};

struct W2Result {
  double distance = 0.0;
  TransportPlan plan;
};

struct SinkhornOptions {
  double epsilon = 1e-2;
  int max_iter = 10000;
  double tol = 1e-9;
};

struct SinkhornResult {
  double distance = 0.0;
  bool converged = false;
  int iterations = 0;
  double marginal_violation = 0.0;
  Mat plan;
};

struct MetricTensor {
  Mat matrix;
  double damping = 0.0;  // lambda actually applied
  int escalations = 0;
};

/// Off-diagonal weights w_ij = omega_ij (p_i + p_j); returns D - W.
MeasureLaplacian build_laplacian(const Distribution& p, const GroundMetricGraph& g);

/// Top-r eigenpairs of L^+ (i.e. the r smallest nonzero modes of L).
PinvResult pinv_lowrank(const MeasureLaplacian& lap, int rank);

/// Exact W2 by the transportation simplex with cost c_ij = g.cost_ij^2.
W2Result w2_exact(const Distribution& p, const Distribution& q, const GroundMetricGraph& g);

/// Optimal plan for sources `a`, sinks `b` and a rectangular cost matrix.
TransportPlan solve_transport(const Vec& a, const Vec& b, const Mat& cost);

/// Entropic W2; log-domain iterations are used whenever epsilon < 1e-2.
SinkhornResult w2_sinkhorn(const Distribution& p, const Distribution& q,
                           const GroundMetricGraph& g, const SinkhornOptions& options = {});

/// G = J^T L^+ J + lambda I, escalating lambda x10 (up to 3 times) until PD.
MetricTensor metric_tensor(const FactorTriple& pinv, const Mat& jacobian, double lambda_damp = 1e-8);
MetricTensor metric_tensor(const Mat& pinv_dense, const Mat& jacobian, double lambda_damp = 1e-8);

/// theta - eta * G^{-1} grad via a Cholesky solve.
Vec natural_gradient_step(const Vec& theta, const Vec& grad, const MetricTensor& metric, double eta);

using DistributionMap = std::function<Distribution(const Vec&)>;

/// Central-difference Jacobian of a parameter -> distribution map (N x m).
Mat jacobian_fd(const DistributionMap& model, const Vec& theta, double h = 1e-6);

// Serialization.
nlohmann::json to_json(const Distribution& p);
Distribution distribution_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GroundMetricGraph& g);
GroundMetricGraph graph_from_json(const nlohmann::json& j);

struct DistanceRow {
  std::string id_a;
  std::string id_b;
  double distance = 0.0;
};
void write_distances_csv(const std::filesystem::path& path, const std::vector<DistanceRow>& rows);
void write_plan_csv(const std::filesystem::path& path, const TransportPlan& plan);

}  // namespace actpc
