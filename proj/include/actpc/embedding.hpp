#pragma once

// Compressed representations of inverse-Laplacian factor triples: kernels
// between operators, Nystrom kernel PCA with out-of-sample projection,
// random Fourier features, incremental landmark updates and decoding an
// embedding back to an operator.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <variant>
#include <vector>

#include "actpc/factor_triple.hpp"
#include "actpc/geometry.hpp"

namespace actpc {

/// An operator together with the distribution that produced it.
struct OperatorItem {
  FactorTriple factors;
  Distribution source;
};

/// Kernel items are either operator items or already-flattened vectors.
using KernelItem = std::variant<OperatorItem, Vec>;

enum class KernelKind { wasserstein_gaussian, flattened_rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::flattened_rbf;
  double bandwidth = 1.0;  // alpha for wasserstein_gaussian, sigma for flattened_rbf
  std::shared_ptr<const GroundMetricGraph> graph;  // required by wasserstein_gaussian

  void validate() const;
};

/// Upper triangle (row-major, diagonal included) of U diag(sigma) V^T.
/// Invariant to the sign ambiguity of the factor columns.
Vec flatten(const FactorTriple& t);

/// exp(-alpha W2(p_a, p_b)^2) or exp(-|a - b|^2 / (2 sigma^2)).
double kernel_eval(const KernelItem& a, const KernelItem& b, const KernelSpec& spec);

struct EmbeddingBasis {
  KernelSpec spec;
  std::vector<KernelItem> landmarks;
  std::vector<int> landmark_indices;  // positions in the item stream that became landmarks
  Mat eigvecs;  // of K_SS, columns sorted by descending eigenvalue
  Vec eigvals;
  int d = 0;
  int cap = 0;  // landmark budget for incremental updates
  bool singular = false;    // some of the top-d eigenvalues were treated as zero
  double gram_error = -1.0; // |K - K_approx|_F over the fitting items; -1 if not computed
  Mat landmark_embeddings;  // m x d
  Mat training_embeddings;  // n x d for the fitting items (empty after updates)

  int num_landmarks() const { return static_cast<int>(landmarks.size()); }
};

struct NystromOptions {
  int landmarks = 0;   // m
  int dim = 0;         // d
  std::uint64_t seed = 0;
  int cap = 0;         // defaults to m
  bool compute_gram_error = true;
  int workers = 1;     // threads for kernel matrices
};

EmbeddingBasis nystrom_fit(const std::vector<KernelItem>& items, const KernelSpec& spec,
                           const NystromOptions& options);

/// z = Lambda^{-1/2} V^T k(item, landmarks), restricted to the top d modes.
Vec project(const KernelItem& item, const EmbeddingBasis& basis);

/// Feature map sqrt(2/D) cos(W x + b), W ~ N(0, sigma^-2 I), b ~ U[0, 2 pi).
class RandomFeatureMap {
 public:
  RandomFeatureMap(int input_dim, int features, double sigma, std::uint64_t seed);
  Vec operator()(const Vec& x) const;
  int features() const { return static_cast<int>(phase_.size()); }

 private:
  Mat freq_;
  Vec phase_;
};

Vec random_feature_map(const Vec& x, int features, double sigma, std::uint64_t seed);

/// Adds new landmarks, drops numerically redundant ones and trims to the cap
/// by removing the landmarks that contribute least to the kernel span.
EmbeddingBasis incremental_update(const EmbeddingBasis& basis, const std::vector<KernelItem>& new_items);

struct DecodeOptions {
  double temperature = 1.0;
  int rank = -1;  // defaults to the largest codebook rank
};

/// Softmax(-|z - z_k|^2 / T) weighted average of the landmark operators,
/// refactorized to the requested rank.
FactorTriple decode_to_operator(const Vec& z, const EmbeddingBasis& basis,
                                const std::vector<FactorTriple>& codebook,
                                const DecodeOptions& options = {});

/// Codebook aligned with the landmarks of an operator-item basis.
std::vector<FactorTriple> landmark_codebook(const EmbeddingBasis& basis);

void save_basis(const EmbeddingBasis& basis, const std::filesystem::path& path);
EmbeddingBasis load_basis(const std::filesystem::path& path);
void save_codebook(const std::vector<FactorTriple>& codebook, const std::filesystem::path& path);
std::vector<FactorTriple> load_codebook(const std::filesystem::path& path);

}  // namespace actpc
