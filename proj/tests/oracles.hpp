#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call the solver they are checking.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "actpc/geometry.hpp"
#include "actpc/types.hpp"

namespace oracle {

using actpc::Mat;
using actpc::Vec;

/// Minimum of <pi, C> over the transport polytope by enumerating every
/// (m+n-1)-cell support, solving the marginal equations on it and keeping
/// the feasible ones. Exponential; only for tiny problems.
inline double transport_by_vertices(const Vec& a, const Vec& b, const Mat& cost) {
  const int m = static_cast<int>(a.size()), n = static_cast<int>(b.size());
  const int cells = m * n, k = m + n - 1;
  Vec rhs(m + n);
  rhs << a, b;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(k);
  for (int i = 0; i < k; ++i) pick[i] = i;
  while (true) {
    Mat A = Mat::Zero(m + n, k);
    for (int c = 0; c < k; ++c) {
      A(pick[c] / n, c) = 1.0;
      A(m + pick[c] % n, c) = 1.0;
    }
    Eigen::FullPivLU<Mat> lu(A);
    if (lu.rank() == k) {
      const Vec x = A.colPivHouseholderQr().solve(rhs);
      if ((A * x - rhs).cwiseAbs().maxCoeff() < 1e-12 && x.minCoeff() > -1e-13) {
        double v = 0.0;
        for (int c = 0; c < k; ++c) v += std::max(x[c], 0.0) * cost(pick[c] / n, pick[c] % n);
        best = std::min(best, v);
      }
    }
    int i = k - 1;
    while (i >= 0 && pick[i] == cells - k + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

/// Uncentered kernel PCA of a full Gram matrix: row i is sqrt(lambda) v_i
/// for the top d eigenpairs.
inline Mat kernel_pca(const Mat& K, int d) {
  Eigen::SelfAdjointEigenSolver<Mat> es(K);
  const int n = static_cast<int>(K.rows());
  Mat out(n, d);
  for (int c = 0; c < d; ++c) {
    const int src = n - 1 - c;  // ascending order from Eigen
    out.col(c) = es.eigenvectors().col(src) * std::sqrt(std::max(es.eigenvalues()[src], 0.0));
  }
  return out;
}

/// Largest entry of |A - B| after flipping each column of B to best match A.
inline double max_diff_up_to_sign(const Mat& A, const Mat& B) {
  double worst = 0.0;
  for (Eigen::Index c = 0; c < A.cols(); ++c) {
    const double plus = (A.col(c) - B.col(c)).cwiseAbs().maxCoeff();
    const double minus = (A.col(c) + B.col(c)).cwiseAbs().maxCoeff();
    worst = std::max(worst, std::min(plus, minus));
  }
  return worst;
}

inline Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec p = x, q = x;
    p[i] += h;
    q[i] -= h;
    g[i] = (f(p) - f(q)) / (2.0 * h);
  }
  return g;
}

inline Mat random_spd(std::mt19937_64& rng, int n) {
  const Mat A = actpc::gaussian_mat(rng, n, n);
  return A * A.transpose() + 0.1 * Mat::Identity(n, n);
}

inline actpc::Distribution random_distribution(std::mt19937_64& rng, int n, double spread = 1.0) {
  return actpc::Distribution(actpc::softmax(spread * actpc::gaussian_vec(rng, n)));
}

/// Random connected weighted graph: a random spanning tree plus extra edges
/// with probability `density`; costs are shortest-path lengths.
inline actpc::GroundMetricGraph random_connected_graph(std::mt19937_64& rng, int n, double density = 0.3) {
  std::uniform_real_distribution<double> w(0.2, 2.0), u(0.0, 1.0);
  Mat omega = Mat::Zero(n, n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 1; i < n; ++i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    const int a = order[i], b = order[pick(rng)];
    omega(a, b) = omega(b, a) = w(rng);
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (omega(i, j) == 0.0 && u(rng) < density) omega(i, j) = omega(j, i) = w(rng);
  // Floyd-Warshall over edge lengths 1/omega.
  const double inf = std::numeric_limits<double>::infinity();
  Mat cost = Mat::Constant(n, n, inf);
  for (int i = 0; i < n; ++i) {
    cost(i, i) = 0.0;
    for (int j = 0; j < n; ++j)
      if (omega(i, j) > 0.0) cost(i, j) = 1.0 / omega(i, j);
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = std::min(cost(i, j), cost(i, k) + cost(k, j));
  return actpc::GroundMetricGraph::from_matrices(omega, cost);
}

/// Angle in degrees between two vectors.
inline double angle_deg(const Vec& a, const Vec& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / 3.14159265358979323846;
}

}  // namespace oracle
