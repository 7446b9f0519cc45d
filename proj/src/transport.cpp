// Discrete optimal transport: transportation simplex (exact) and Sinkhorn
// (entropic, plain and log-domain).

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "actpc/error.hpp"
#include "actpc/geometry.hpp"

namespace actpc {

namespace {

struct Cell {
  int i;
  int j;
};

// Basis of a transportation problem: a spanning tree over m row nodes and
// n column nodes (column j is node m + j), possibly carrying zero flows.
class TransportSimplex {
 public:
  TransportSimplex(const Vec& a, const Vec& b, const Mat& cost)
      : m_(static_cast<int>(a.size())), n_(static_cast<int>(b.size())), cost_(cost),
        flow_(Mat::Zero(a.size(), b.size())), basic_(a.size() * b.size(), 0) {
    northwest_corner(a, b);
  }

  void solve() {
    const double scale = std::max(1.0, cost_.cwiseAbs().maxCoeff());
    const double tol = 1e-12 * scale;
    const long max_pivots = 200L * m_ * n_ + 1000;
    int degenerate_run = 0;
    bool bland = false;
    for (long pivot = 0; pivot < max_pivots; ++pivot) {
      compute_potentials();
      Cell enter{-1, -1};
      double best = -tol;
      for (int i = 0; i < m_ && !(bland && enter.i >= 0); ++i) {
        for (int j = 0; j < n_; ++j) {
          if (basic_[index(i, j)]) continue;
          const double r = cost_(i, j) - u_[i] - v_[j];
          if (r < best) {
            best = r;
            enter = {i, j};
            if (bland) break;
          }
        }
      }
      if (enter.i < 0) return;
      const double theta = pivot_on(enter, bland);
      degenerate_run = theta == 0.0 ? degenerate_run + 1 : 0;
      // Dantzig pricing can cycle on degenerate bases; Bland's rule cannot.
      if (degenerate_run > 2 * (m_ + n_)) bland = true;
    }
    throw Error("transportation simplex exceeded its pivot budget");
  }

  const Mat& flow() const { return flow_; }

 private:
  int index(int i, int j) const { return i * n_ + j; }

  void northwest_corner(Vec a, Vec b) {
    int i = 0, j = 0;
    // Once on the last row or column the walk stays there, so rounding in the
    // marginal totals cannot end it early with rows or columns unvisited.
    while (i < m_ && j < n_) {
      double x = std::min(a[i], b[j]);
      if (j == n_ - 1) x = a[i];
      else if (i == m_ - 1) x = b[j];
      x = std::max(x, 0.0);
      flow_(i, j) = x;
      add_basic({i, j});
      a[i] -= x;
      b[j] -= x;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (j == n_ - 1) {
        ++i;
      } else if (i == m_ - 1) {
        ++j;
      } else if (a[i] < b[j]) {
        ++i;
      } else if (a[i] > b[j]) {
        ++j;
      } else if (i < m_ - 1) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  void add_basic(Cell c) {
    basis_.push_back(c);
    basic_[index(c.i, c.j)] = 1;
  }

  void build_adjacency() {
    adj_.assign(m_ + n_, {});
    for (int k = 0; k < static_cast<int>(basis_.size()); ++k) {
      adj_[basis_[k].i].push_back(k);
      adj_[m_ + basis_[k].j].push_back(k);
    }
  }

  int other_end(int node, const Cell& c) const { return node < m_ ? m_ + c.j : c.i; }

  void compute_potentials() {
    build_adjacency();
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const int node = stack.back();
      stack.pop_back();
      for (int k : adj_[node]) {
        const Cell& c = basis_[k];
        const int nb = other_end(node, c);
        if (seen[nb]) continue;
        seen[nb] = 1;
        if (node < m_)
          v_[c.j] = cost_(c.i, c.j) - u_[c.i];
        else
          u_[c.i] = cost_(c.i, c.j) - v_[c.j];
        stack.push_back(nb);
      }
    }
  }

  // Returns theta, the amount of flow moved around the cycle.
  double pivot_on(Cell enter, bool bland) {
    // Tree path from row node enter.i to column node m + enter.j.
    const int src = enter.i, dst = m_ + enter.j;
    std::vector<int> parent_edge(m_ + n_, -1), parent(m_ + n_, -1);
    std::vector<int> queue{src};
    parent[src] = src;
    for (std::size_t h = 0; h < queue.size() && parent[dst] < 0; ++h) {
      const int node = queue[h];
      for (int k : adj_[node]) {
        const int nb = other_end(node, basis_[k]);
        if (parent[nb] >= 0) continue;
        parent[nb] = node;
        parent_edge[nb] = k;
        queue.push_back(nb);
      }
    }
    if (parent[dst] < 0) throw Error("transport basis is not a spanning tree");
    std::vector<int> path;  // basis indices, ordered from src to dst
    for (int node = dst; node != src; node = parent[node]) path.push_back(parent_edge[node]);
    std::reverse(path.begin(), path.end());

    // Edges at even positions from the source lose flow.
    int leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < path.size(); t += 2) {
      const Cell& c = basis_[path[t]];
      const double x = flow_(c.i, c.j);
      const bool better = x < theta ||
                          (bland && x == theta && leave >= 0 &&
                           index(c.i, c.j) < index(basis_[leave].i, basis_[leave].j));
      if (better) {
        theta = x;
        leave = path[t];
      }
    }
    flow_(enter.i, enter.j) += theta;
    for (std::size_t t = 0; t < path.size(); ++t) {
      const Cell& c = basis_[path[t]];
      if (t % 2 == 0)
        flow_(c.i, c.j) -= theta;
      else
        flow_(c.i, c.j) += theta;
    }
    const Cell out = basis_[leave];
    flow_(out.i, out.j) = 0.0;
    basic_[index(out.i, out.j)] = 0;
    basis_[leave] = enter;
    basic_[index(enter.i, enter.j)] = 1;
    return theta;
  }

  int m_, n_;
  const Mat& cost_;
  Mat flow_;
  std::vector<char> basic_;
  std::vector<Cell> basis_;
  std::vector<std::vector<int>> adj_;
  std::vector<double> u_, v_;
};

double log_sum_exp(const double* x, int n, int stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) mx = std::max(mx, x[k * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += std::exp(x[k * stride] - mx);
  return mx + std::log(s);
}

}  // namespace

TransportPlan solve_transport(const Vec& a, const Vec& b, const Mat& cost) {
  if (cost.rows() != a.size() || cost.cols() != b.size())
    throw DomainError("transport cost shape does not match the marginals");
  if (std::abs(a.sum() - b.sum()) > 1e-9) throw DomainError("marginals carry unequal mass");
  TransportSimplex simplex(a, b, cost);
  simplex.solve();
  TransportPlan plan;
  plan.pi = simplex.flow();
  plan.cost_value = plan.pi.cwiseProduct(cost).sum();
  return plan;
}

W2Result w2_exact(const Distribution& p, const Distribution& q, const GroundMetricGraph& g) {
  constexpr int kMaxExact = 64;
  if (p.size() != g.size() || q.size() != g.size())
    throw DomainError("distributions must live on the graph's support");
  if (g.size() > kMaxExact)
    throw DomainError("w2_exact is limited to N <= 64 support points; use w2_sinkhorn for N = " +
                      std::to_string(g.size()));
  const Mat c2 = g.cost.cwiseProduct(g.cost);
  W2Result r;
  r.plan = solve_transport(p.weights(), q.weights(), c2);
  r.distance = std::sqrt(std::max(0.0, r.plan.cost_value));
  return r;
}

SinkhornResult w2_sinkhorn(const Distribution& p, const Distribution& q,
                           const GroundMetricGraph& g, const SinkhornOptions& options) {
  if (!(options.epsilon > 0.0)) throw DomainError("sinkhorn epsilon must be positive");
  if (p.size() != g.size() || q.size() != g.size())
    throw DomainError("distributions must live on the graph's support");

  std::vector<int> rows, cols;
  for (int i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) rows.push_back(i);
  for (int j = 0; j < q.size(); ++j)
    if (q[j] > 0.0) cols.push_back(j);
  const int m = static_cast<int>(rows.size()), n = static_cast<int>(cols.size());
  const double eps = options.epsilon;

  Mat c(m, n);
  Vec a(m), b(n);
  for (int i = 0; i < m; ++i) a[i] = p[rows[i]];
  for (int j = 0; j < n; ++j) b[j] = q[cols[j]];
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double d = g.cost(rows[i], cols[j]);
      c(i, j) = d * d;
    }

  SinkhornResult result;
  Mat plan(m, n);
  Mat kernel = (-c / eps).array().exp().matrix();
  // Plain scaling loses entries once exp(-c/eps) underflows, even when the
  // row sums look healthy.
  const bool log_domain = eps < 1e-2 || (c.size() && c.maxCoeff() / eps > 200.0) ||
                          kernel.rowwise().sum().minCoeff() < 1e-280 ||
                          kernel.colwise().sum().minCoeff() < 1e-280;

  if (!log_domain) {
    Vec u = Vec::Ones(m), v = Vec::Ones(n);
    for (int it = 1; it <= options.max_iter; ++it) {
      v = b.cwiseQuotient(kernel.transpose() * u);
      u = a.cwiseQuotient(kernel * v);
      result.iterations = it;
      result.marginal_violation = (v.cwiseProduct(kernel.transpose() * u) - b).lpNorm<1>();
      if (result.marginal_violation < options.tol) {
        result.converged = true;
        break;
      }
    }
    plan = u.asDiagonal() * kernel * v.asDiagonal();
  } else {
    Vec f = Vec::Zero(m), h = Vec::Zero(n);
    Vec log_a = a.array().log(), log_b = b.array().log();
    Mat tmp(m, n);  // (f_i + h_j - c_ij) / e
    double e = eps;
    auto fill = [&] {
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) tmp(i, j) = (f[i] + h[j] - c(i, j)) / e;
    };
    // Run one stage at regularization e; returns the final row violation.
    auto stage = [&](double tol, int max_iter) {
      double viol = std::numeric_limits<double>::infinity();
      for (int it = 1; it <= max_iter; ++it) {
        fill();
        for (int i = 0; i < m; ++i)
          f[i] += e * (log_a[i] - log_sum_exp(&tmp(i, 0), n, static_cast<int>(tmp.outerStride())));
        fill();
        for (int j = 0; j < n; ++j) h[j] += e * (log_b[j] - log_sum_exp(&tmp(0, j), m, 1));
        fill();
        viol = 0.0;
        for (int i = 0; i < m; ++i)
          viol += std::abs(std::exp(log_sum_exp(&tmp(i, 0), n, static_cast<int>(tmp.outerStride()))) - a[i]);
        ++result.iterations;
        if (viol < tol) break;
      }
      return viol;
    };
    // Epsilon scaling: anneal from the cost scale down to the target with
    // warm-started potentials. Small epsilon alone converges very slowly.
    const double start = std::max(eps, c.size() ? c.maxCoeff() : eps);
    for (e = start; e > eps * 2.0; e *= 0.5) stage(1e-6, options.max_iter);
    e = eps;
    result.marginal_violation = stage(options.tol, options.max_iter);
    result.converged = result.marginal_violation < options.tol;
    plan = tmp.array().exp().matrix();
  }

  result.plan = Mat::Zero(p.size(), q.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) result.plan(rows[i], cols[j]) = plan(i, j);
  result.distance = std::sqrt(std::max(0.0, plan.cwiseProduct(c).sum()));
  return result;
}

}  // namespace actpc
