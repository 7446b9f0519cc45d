#include "actpc/kernels.hpp"

#include "actpc/parallel.hpp"

namespace actpc::kernels {

Mat gram_matrix_serial(const std::vector<KernelItem>& items, const KernelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(items.size());
  Mat k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      k(i, j) = kernel_eval(items[i], items[j], spec);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

Mat gram_matrix_omp(const std::vector<KernelItem>& items, const KernelSpec& spec, int workers) {
  const auto n = static_cast<Eigen::Index>(items.size());
  Mat k(n, n);
  parallel_for(n, workers, [&](long i) {
    for (Eigen::Index j = i; j < n; ++j) {
      k(i, j) = kernel_eval(items[i], items[j], spec);
      k(j, i) = k(i, j);
    }
  });
  return k;
}

Mat cross_kernel_serial(const std::vector<KernelItem>& rows, const std::vector<KernelItem>& cols,
                        const KernelSpec& spec) {
  Mat k(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) k(i, j) = kernel_eval(rows[i], cols[j], spec);
  return k;
}

Mat cross_kernel_omp(const std::vector<KernelItem>& rows, const std::vector<KernelItem>& cols,
                     const KernelSpec& spec, int workers) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Mat k(rows.size(), cols.size());
  parallel_for(n, workers, [&](long i) {
    for (std::size_t j = 0; j < cols.size(); ++j) k(i, j) = kernel_eval(rows[i], cols[j], spec);
  });
  return k;
}

Mat pairwise_w2_serial(const std::vector<Distribution>& dists, const GroundMetricGraph& g) {
  const auto n = static_cast<Eigen::Index>(dists.size());
  Mat d = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = w2_exact(dists[i], dists[j], g).distance;
  return d;
}

Mat pairwise_w2_omp(const std::vector<Distribution>& dists, const GroundMetricGraph& g, int workers) {
  const auto n = static_cast<Eigen::Index>(dists.size());
  Mat d = Mat::Zero(n, n);
  parallel_for(n, workers, [&](long i) {
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = w2_exact(dists[i], dists[j], g).distance;
  });
  return d;
}

Vec w2_to_target_serial(const std::vector<Distribution>& dists, const Distribution& target,
                        const GroundMetricGraph& g) {
  Vec out(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i) out[i] = w2_exact(dists[i], target, g).distance;
  return out;
}

Vec w2_to_target_omp(const std::vector<Distribution>& dists, const Distribution& target,
                     const GroundMetricGraph& g, int workers) {
  const auto n = static_cast<Eigen::Index>(dists.size());
  Vec out(n);
  parallel_for(n, workers, [&](long i) { out[i] = w2_exact(dists[i], target, g).distance; });
  return out;
}

}  // namespace actpc::kernels
