#pragma once

// Data-parallel kernels. Each OpenMP kernel has a serial reference with the
// same signature; tests require them to agree bit-for-bit and the benchmark
// target times one against the other.

#include <vector>

#include "actpc/embedding.hpp"
#include "actpc/geometry.hpp"

namespace actpc::kernels {

Mat gram_matrix_serial(const std::vector<KernelItem>& items, const KernelSpec& spec);
Mat gram_matrix_omp(const std::vector<KernelItem>& items, const KernelSpec& spec, int workers);

/// K(i, j) = k(rows[i], cols[j]).
Mat cross_kernel_serial(const std::vector<KernelItem>& rows, const std::vector<KernelItem>& cols,
                        const KernelSpec& spec);
Mat cross_kernel_omp(const std::vector<KernelItem>& rows, const std::vector<KernelItem>& cols,
                     const KernelSpec& spec, int workers);

/// Symmetric matrix of exact W2 distances.
Mat pairwise_w2_serial(const std::vector<Distribution>& dists, const GroundMetricGraph& g);
Mat pairwise_w2_omp(const std::vector<Distribution>& dists, const GroundMetricGraph& g, int workers);

/// Row-wise W2 to a common target.
Vec w2_to_target_serial(const std::vector<Distribution>& dists, const Distribution& target,
                        const GroundMetricGraph& g);
Vec w2_to_target_omp(const std::vector<Distribution>& dists, const Distribution& target,
                     const GroundMetricGraph& g, int workers);

inline Mat gram_matrix(const std::vector<KernelItem>& items, const KernelSpec& spec, int workers) {
  return workers > 1 ? gram_matrix_omp(items, spec, workers) : gram_matrix_serial(items, spec);
}
inline Mat cross_kernel(const std::vector<KernelItem>& rows, const std::vector<KernelItem>& cols,
                        const KernelSpec& spec, int workers) {
  return workers > 1 ? cross_kernel_omp(rows, cols, spec, workers)
                     : cross_kernel_serial(rows, cols, spec);
}

}  // namespace actpc::kernels
