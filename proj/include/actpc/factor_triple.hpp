#pragma once

#include "actpc/types.hpp"

namespace actpc {

/// Rank-r factorization U diag(sigma) V^T of a (pseudo)inverse operator.
/// For symmetric operators V == U.
struct FactorTriple {
  Mat U;
  Vec sigma;  // non-increasing, >= 0
  Mat V;

  int rank() const { return static_cast<int>(sigma.size()); }
  int dim() const { return static_cast<int>(U.rows()); }
  Mat dense() const { return U * sigma.asDiagonal() * V.transpose(); }

  /// Throws DomainError if U is not orthonormal or sigma is unsorted/negative.
  void validate(double tol = 1e-8) const;

  /// Symmetric PSD factorization keeping the top `rank` eigenpairs of `op`.
  static FactorTriple from_symmetric(const Mat& op, int rank);
};

}  // namespace actpc
