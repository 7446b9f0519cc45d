#include "actpc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "actpc/error.hpp"
#include "actpc/io.hpp"
#include "actpc/linalg.hpp"

namespace actpc {

// ---------------------------------------------------------------------------
// Distribution

Distribution::Distribution(Vec weights, std::vector<std::string> labels)
    : weights_(std::move(weights)), labels_(std::move(labels)) {
  if (weights_.size() == 0) throw DomainError("distribution over an empty support");
  if (!weights_.allFinite()) throw DomainError("distribution weights must be finite");
  if (weights_.minCoeff() < 0.0) throw DomainError("distribution weights must be nonnegative");
  if (std::abs(weights_.sum() - 1.0) > kSumTolerance)
    throw DomainError("distribution weights must sum to 1 (got " +
                      io::format_double(weights_.sum()) + ")");
  if (!labels_.empty() && static_cast<Eigen::Index>(labels_.size()) != weights_.size())
    throw DomainError("support labels must match the number of weights");
}

Distribution Distribution::normalized(const Vec& raw) {
  Vec w = raw.cwiseMax(0.0);
  const double s = w.sum();
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("cannot normalize a zero-mass vector");
  return Distribution(w / s);
}

Distribution Distribution::uniform(int n) {
  if (n < 1) throw DomainError("uniform distribution needs n >= 1");
  return Distribution(Vec::Constant(n, 1.0 / n));
}

Distribution Distribution::point_mass(int n, int index) {
  if (index < 0 || index >= n) throw DomainError("point mass index out of range");
  Vec w = Vec::Zero(n);
  w[index] = 1.0;
  return Distribution(w);
}

// ---------------------------------------------------------------------------
// FactorTriple

void FactorTriple::validate(double tol) const {
  const int r = rank();
  if (U.cols() != r || V.cols() != r || U.rows() != V.rows())
    throw DomainError("factor triple shapes are inconsistent");
  if (r == 0) return;
  if ((U.transpose() * U - Mat::Identity(r, r)).norm() >= tol)
    throw DomainError("factor triple U does not have orthonormal columns");
  for (int k = 0; k < r; ++k) {
    if (!(sigma[k] >= 0.0)) throw DomainError("factor triple sigma must be nonnegative");
    if (k > 0 && sigma[k] > sigma[k - 1]) throw DomainError("factor triple sigma must be sorted");
  }
}

FactorTriple FactorTriple::from_symmetric(const Mat& op, int rank) {
  auto e = linalg::eig_sym_desc(op);
  const int r = std::clamp(rank, 0, static_cast<int>(op.rows()));
  FactorTriple t;
  t.U = e.vectors.leftCols(r);
  t.sigma = e.values.head(r).cwiseMax(0.0);
  t.V = t.U;
  return t;
}

// ---------------------------------------------------------------------------
// GroundMetricGraph

void GroundMetricGraph::validate() const {
  const auto n = cost.rows();
  if (cost.cols() != n || omega.rows() != n || omega.cols() != n)
    throw DomainError("graph matrices must be square and the same size");
  for (const Mat* m : {&omega, &cost}) {
    if (!m->allFinite()) throw DomainError("graph entries must be finite");
    if (m->minCoeff() < 0.0) throw DomainError("graph entries must be nonnegative");
    if ((*m - m->transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw DomainError("graph matrices must be symmetric");
    for (Eigen::Index i = 0; i < n; ++i)
      if ((*m)(i, i) != 0.0) throw DomainError("graph diagonals must be zero");
  }
}

GroundMetricGraph GroundMetricGraph::from_cost(const Mat& cost, double sigma) {
  const auto n = cost.rows();
  if (sigma <= 0.0) {
    std::vector<double> nz;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j)
        if (cost(i, j) > 0.0) nz.push_back(cost(i, j));
    if (nz.empty()) {
      sigma = 1.0;
    } else {
      std::sort(nz.begin(), nz.end());
      const std::size_t h = nz.size() / 2;
      sigma = nz.size() % 2 ? nz[h] : 0.5 * (nz[h - 1] + nz[h]);
    }
  }
  GroundMetricGraph g;
  g.cost = cost;
  g.omega = (-(cost.array().square()) / (sigma * sigma)).exp().matrix();
  g.omega.diagonal().setZero();
  g.validate();
  return g;
}

GroundMetricGraph GroundMetricGraph::from_matrices(Mat omega, Mat cost) {
  GroundMetricGraph g{std::move(omega), std::move(cost)};
  g.validate();
  return g;
}

GroundMetricGraph GroundMetricGraph::path(int n) {
  Mat c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = std::abs(i - j);
  return from_cost(c);
}

// ---------------------------------------------------------------------------
// Laplacian and pseudoinverse

MeasureLaplacian build_laplacian(const Distribution& p, const GroundMetricGraph& g) {
  const int n = g.size();
  if (n < 2) throw DomainError("a measure-dependent Laplacian needs N >= 2");
  if (p.size() != n) throw DomainError("distribution size does not match the graph");
  Mat w(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) w(i, j) = i == j ? 0.0 : g.omega(i, j) * (p[i] + p[j]);
  Mat lap = -w;
  for (int i = 0; i < n; ++i) lap(i, i) = w.row(i).sum();
  return {std::move(lap), p};
}

PinvResult pinv_lowrank(const MeasureLaplacian& lap, int rank) {
  const int n = static_cast<int>(lap.matrix.rows());
  if (rank < 1 || rank > n - 1) throw DomainError("pinv rank must lie in [1, N-1]");
  auto e = linalg::eig_sym_desc(lap.matrix);
  const double top = e.values[0];
  if (!(top > 0.0)) throw DomainError("zero Laplacian: graph is fully disconnected");
  const double tol = 1e-10 * top;
  int nonzero = 0;
  while (nonzero < n && e.values[nonzero] > tol) ++nonzero;

  PinvResult out;
  out.reduced_rank = nonzero < n - 1;
  out.effective_rank = std::min(rank, nonzero);
  const int r = out.effective_rank;
  // Smallest nonzero modes of L are the largest of L^+.
  out.factors.U.resize(n, r);
  out.factors.sigma.resize(r);
  for (int k = 0; k < r; ++k) {
    const int src = nonzero - 1 - k;
    out.factors.U.col(k) = e.vectors.col(src);
    out.factors.sigma[k] = 1.0 / e.values[src];
  }
  linalg::fix_column_signs(out.factors.U);
  out.factors.V = out.factors.U;
  return out;
}

// ---------------------------------------------------------------------------
// Metric tensor and natural gradient

namespace {

MetricTensor damp_until_pd(Mat base, double lambda) {
  base = linalg::symmetrize(base);
  const auto m = base.rows();
  MetricTensor g;
  g.damping = lambda;
  for (;;) {
    g.matrix = base + g.damping * Mat::Identity(m, m);
    Eigen::SelfAdjointEigenSolver<Mat> es(g.matrix, Eigen::EigenvaluesOnly);
    if (m == 0 || es.eigenvalues()[0] > 0.0 || g.escalations == 3) break;
    g.damping = g.damping > 0.0 ? 10.0 * g.damping : 1e-8;
    ++g.escalations;
  }
  return g;
}

}  // namespace

MetricTensor metric_tensor(const FactorTriple& pinv, const Mat& jacobian, double lambda_damp) {
  if (lambda_damp < 0.0) throw DomainError("damping must be nonnegative");
  if (jacobian.rows() != pinv.dim()) throw DomainError("Jacobian rows must match the support size");
  // J^T U S U^T J written as B^T B with B = S^{1/2} U^T J.
  Mat b = pinv.sigma.cwiseMax(0.0).cwiseSqrt().asDiagonal() * (pinv.U.transpose() * jacobian);
  return damp_until_pd(b.transpose() * b, lambda_damp);
}

MetricTensor metric_tensor(const Mat& pinv_dense, const Mat& jacobian, double lambda_damp) {
  if (lambda_damp < 0.0) throw DomainError("damping must be nonnegative");
  if (jacobian.rows() != pinv_dense.rows() || pinv_dense.rows() != pinv_dense.cols())
    throw DomainError("Jacobian rows must match the operator size");
  return damp_until_pd(jacobian.transpose() * pinv_dense * jacobian, lambda_damp);
}

Vec natural_gradient_step(const Vec& theta, const Vec& grad, const MetricTensor& metric, double eta) {
  if (theta.size() != grad.size() || metric.matrix.rows() != grad.size() ||
      metric.matrix.cols() != grad.size())
    throw DomainError("natural gradient dimensions disagree");
  Eigen::LLT<Mat> llt(metric.matrix);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Mat> es(metric.matrix, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double cond = ev[0] > 0.0 ? ev[ev.size() - 1] / ev[0] : std::numeric_limits<double>::infinity();
    throw SolveError("metric tensor is not positive definite", cond);
  }
  Vec direction = llt.solve(grad);
  if (!direction.allFinite()) {
    throw SolveError("metric solve produced non-finite values",
                     std::numeric_limits<double>::infinity());
  }
  return theta - eta * direction;
}

Mat jacobian_fd(const DistributionMap& model, const Vec& theta, double h) {
  if (!(h > 0.0)) throw DomainError("finite-difference step must be positive");
  const Distribution base = model(theta);
  Mat jac(base.size(), theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vec tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    const Distribution pp = model(tp), pm = model(tm);
    if (pp.size() != base.size() || pm.size() != base.size())
      throw DomainError("model changed its support size");
    jac.col(j) = (pp.weights() - pm.weights()) / (2.0 * h);
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const Distribution& p) {
  nlohmann::json j;
  j["weights"] = io::to_json(p.weights());
  if (!p.labels().empty()) j["labels"] = p.labels();
  return j;
}

Distribution distribution_from_json(const nlohmann::json& j) {
  if (j.is_array()) return Distribution(io::vec_from_json(j));
  io::require_known_keys(j, {"weights", "labels"}, "distribution");
  std::vector<std::string> labels;
  if (j.contains("labels")) labels = j.at("labels").get<std::vector<std::string>>();
  return Distribution(io::vec_from_json(j.at("weights")), std::move(labels));
}

nlohmann::json to_json(const GroundMetricGraph& g) {
  return {{"omega", io::to_json(g.omega)}, {"cost", io::to_json(g.cost)}};
}

GroundMetricGraph graph_from_json(const nlohmann::json& j) {
  io::require_known_keys(j, {"omega", "cost", "sigma"}, "graph");
  if (!j.contains("cost")) throw ConfigError("graph: 'cost' is required");
  Mat cost = io::mat_from_json(j.at("cost"));
  if (j.contains("omega")) return GroundMetricGraph::from_matrices(io::mat_from_json(j.at("omega")), cost);
  return GroundMetricGraph::from_cost(cost, j.value("sigma", 0.0));
}

void write_distances_csv(const std::filesystem::path& path, const std::vector<DistanceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "id_a,id_b,distance\n";
  for (const auto& r : rows) out << r.id_a << ',' << r.id_b << ',' << io::format_double(r.distance) << '\n';
}

void write_plan_csv(const std::filesystem::path& path, const TransportPlan& plan) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "i,j,mass\n";
  for (Eigen::Index i = 0; i < plan.pi.rows(); ++i)
    for (Eigen::Index j = 0; j < plan.pi.cols(); ++j)
      if (plan.pi(i, j) != 0.0) out << i << ',' << j << ',' << io::format_double(plan.pi(i, j)) << '\n';
}

}  // namespace actpc
