#include "actpc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace actpc::linalg {

void fix_column_signs(Mat& m, double tol) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (std::abs(m(i, j)) > tol) {
        if (m(i, j) < 0) m.col(j) *= -1.0;
        break;
      }
    }
  }
}

SymmetricEigen eig_sym_desc(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  const Eigen::Index n = a.rows();
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = es.eigenvalues()[n - 1 - k];
    out.vectors.col(k) = es.eigenvectors().col(n - 1 - k);
  }
  fix_column_signs(out.vectors);
  return out;
}

Mat pinv_sym(const Mat& a, double rel_tol) {
  auto e = eig_sym_desc(a);
  const double scale = e.values.cwiseAbs().maxCoeff();
  Mat out = Mat::Zero(a.rows(), a.cols());
  if (scale == 0.0) return out;
  for (Eigen::Index k = 0; k < e.values.size(); ++k) {
    if (std::abs(e.values[k]) > rel_tol * scale)
      out += (1.0 / e.values[k]) * e.vectors.col(k) * e.vectors.col(k).transpose();
  }
  return out;
}

Vec principal_angles(const Mat& a, const Mat& b) {
  Eigen::HouseholderQR<Mat> qa(a), qb(b);
  Mat ua = qa.householderQ() * Mat::Identity(a.rows(), a.cols());
  Mat ub = qb.householderQ() * Mat::Identity(b.rows(), b.cols());
  // Sine form keeps small angles accurate.
  Mat residual = ub - ua * (ua.transpose() * ub);
  Eigen::JacobiSVD<Mat> svd(residual);
  Vec s = svd.singularValues();
  Vec angles(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) angles[i] = std::asin(std::clamp(s[i], 0.0, 1.0));
  std::sort(angles.data(), angles.data() + angles.size());
  return angles;
}

}  // namespace actpc::linalg
