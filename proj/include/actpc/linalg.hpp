#pragma once

#include "actpc/types.hpp"

namespace actpc::linalg {

/// Flips each column so its first entry with |x| > tol is positive.
void fix_column_signs(Mat& m, double tol = 1e-12);

struct SymmetricEigen {
  Vec values;   // descending
  Mat vectors;  // matching columns, sign-normalized
};

/// Dense symmetric eigendecomposition sorted by descending eigenvalue.
SymmetricEigen eig_sym_desc(const Mat& a);

/// Moore-Penrose pseudoinverse of a symmetric matrix.
Mat pinv_sym(const Mat& a, double rel_tol = 1e-10);

/// Principal angles (radians, ascending) between the column spans of a and b.
Vec principal_angles(const Mat& a, const Mat& b);

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

}  // namespace actpc::linalg
