#include "actpc/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "actpc/error.hpp"
#include "actpc/io.hpp"
#include "actpc/kernels.hpp"
#include "actpc/linalg.hpp"

namespace actpc {

void KernelSpec::validate() const {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw ConfigError("kernel bandwidth must be positive");
  if (kind == KernelKind::wasserstein_gaussian && !graph)
    throw ConfigError("wasserstein_gaussian kernel needs a ground metric graph");
}

Vec flatten(const FactorTriple& t) {
  const Mat op = t.dense();
  const auto n = op.rows();
  Vec out(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) out[k++] = op(i, j);
  return out;
}

namespace {

Vec as_vector(const KernelItem& item) {
  if (const auto* v = std::get_if<Vec>(&item)) return *v;
  return flatten(std::get<OperatorItem>(item).factors);
}

// Lexicographic order on weights, so the pair is always solved the same way round.
bool weights_less(const Vec& a, const Vec& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return a[i] < b[i];
  return false;
}

}  // namespace

double kernel_eval(const KernelItem& a, const KernelItem& b, const KernelSpec& spec) {
  spec.validate();
  if (spec.kind == KernelKind::flattened_rbf) {
    const Vec va = as_vector(a), vb = as_vector(b);
    if (va.size() != vb.size()) throw DomainError("kernel items have mismatched supports");
    const double sq = (va - vb).squaredNorm();
    return std::exp(-sq / (2.0 * spec.bandwidth * spec.bandwidth));
  }
  const auto* oa = std::get_if<OperatorItem>(&a);
  const auto* ob = std::get_if<OperatorItem>(&b);
  if (!oa || !ob) throw DomainError("wasserstein_gaussian kernel needs operator items");
  if (oa->source.size() != ob->source.size() || oa->source.size() != spec.graph->size())
    throw DomainError("kernel items have mismatched supports");
  const bool swap = weights_less(ob->source.weights(), oa->source.weights());
  const Distribution& p = swap ? ob->source : oa->source;
  const Distribution& q = swap ? oa->source : ob->source;
  const double w = w2_exact(p, q, *spec.graph).distance;
  return std::exp(-spec.bandwidth * w * w);
}

namespace {

constexpr double kEigTol = 1e-10;

// Fills eigvecs/eigvals/singular/landmark_embeddings from K_SS.
void factor_landmarks(EmbeddingBasis& basis, const Mat& kss) {
  auto e = linalg::eig_sym_desc(kss);
  basis.eigvals = e.values;
  basis.eigvecs = e.vectors;
  const int m = static_cast<int>(kss.rows());
  basis.d = std::min(basis.d, m);
  const double top = m > 0 ? std::max(e.values[0], 0.0) : 0.0;
  basis.singular = false;
  for (int k = 0; k < basis.d; ++k)
    if (!(e.values[k] > kEigTol * std::max(top, 1e-300))) basis.singular = true;
  basis.landmark_embeddings.resize(m, basis.d);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < basis.d; ++k) {
      const double lam = e.values[k];
      basis.landmark_embeddings(i, k) =
          lam > kEigTol * std::max(top, 1e-300) ? e.vectors.col(k).dot(kss.col(i)) / std::sqrt(lam) : 0.0;
    }
  }
}

Vec project_from_kernel_row(const Vec& krow, const EmbeddingBasis& basis) {
  Vec z(basis.d);
  const double top = basis.eigvals.size() ? std::max(basis.eigvals[0], 0.0) : 0.0;
  for (int k = 0; k < basis.d; ++k) {
    const double lam = basis.eigvals[k];
    z[k] = lam > kEigTol * std::max(top, 1e-300) ? basis.eigvecs.col(k).dot(krow) / std::sqrt(lam) : 0.0;
  }
  return z;
}

}  // namespace

EmbeddingBasis nystrom_fit(const std::vector<KernelItem>& items, const KernelSpec& spec,
                           const NystromOptions& options) {
  spec.validate();
  const int n = static_cast<int>(items.size());
  const int m = options.landmarks, d = options.dim;
  if (d < 1 || d > m || m > n) throw ConfigError("nystrom_fit needs 1 <= d <= m <= |items|");

  // Prefixes of one seeded permutation, so larger m always adds landmarks.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed);
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<int> chosen(order.begin(), order.begin() + m);
  std::sort(chosen.begin(), chosen.end());

  EmbeddingBasis basis;
  basis.spec = spec;
  basis.d = d;
  basis.cap = options.cap > 0 ? options.cap : m;
  basis.landmark_indices = chosen;
  for (int idx : chosen) basis.landmarks.push_back(items[idx]);

  const Mat kns = kernels::cross_kernel(items, basis.landmarks, spec, options.workers);
  Mat kss(m, m);
  for (int a = 0; a < m; ++a) kss.row(a) = kns.row(chosen[a]);
  kss = linalg::symmetrize(kss);
  factor_landmarks(basis, kss);

  basis.training_embeddings.resize(n, basis.d);
  for (int i = 0; i < n; ++i)
    basis.training_embeddings.row(i) = project_from_kernel_row(kns.row(i).transpose(), basis).transpose();

  if (options.compute_gram_error) {
    const Mat full = kernels::gram_matrix(items, spec, options.workers);
    const Mat approx = kns * linalg::pinv_sym(kss, 1e-12) * kns.transpose();
    basis.gram_error = (full - approx).norm();
  }
  return basis;
}

Vec project(const KernelItem& item, const EmbeddingBasis& basis) {
  Vec krow(basis.num_landmarks());
  for (int s = 0; s < basis.num_landmarks(); ++s) krow[s] = kernel_eval(item, basis.landmarks[s], basis.spec);
  return project_from_kernel_row(krow, basis);
}

RandomFeatureMap::RandomFeatureMap(int input_dim, int features, double sigma, std::uint64_t seed) {
  if (features < 1) throw ConfigError("random feature count must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("random feature bandwidth must be positive");
  Rng rng(seed);
  freq_ = gaussian_mat(rng, features, input_dim, 1.0 / sigma);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  phase_.resize(features);
  for (int i = 0; i < features; ++i) phase_[i] = u(rng);
}

Vec RandomFeatureMap::operator()(const Vec& x) const {
  if (x.size() != freq_.cols()) throw DomainError("random feature input has the wrong dimension");
  const double scale = std::sqrt(2.0 / static_cast<double>(phase_.size()));
  Vec arg = freq_ * x + phase_;
  return scale * arg.array().cos().matrix();
}

Vec random_feature_map(const Vec& x, int features, double sigma, std::uint64_t seed) {
  return RandomFeatureMap(static_cast<int>(x.size()), features, sigma, seed)(x);
}

EmbeddingBasis incremental_update(const EmbeddingBasis& basis, const std::vector<KernelItem>& new_items) {
  if (new_items.empty()) return basis;
  const KernelSpec& spec = basis.spec;

  std::vector<KernelItem> pool = basis.landmarks;
  std::vector<int> pool_index = basis.landmark_indices;
  const int next_index = pool_index.empty() ? 0 : *std::max_element(pool_index.begin(), pool_index.end()) + 1;
  for (std::size_t i = 0; i < new_items.size(); ++i) {
    pool.push_back(new_items[i]);
    pool_index.push_back(next_index + static_cast<int>(i));
  }
  const Mat kpool = kernels::gram_matrix_serial(pool, spec);

  // Greedy pivoted Cholesky in stream order: a candidate whose residual
  // variance vanishes lies in the span of the accepted landmarks.
  std::vector<int> accepted;
  Mat chol_rows;  // row a: Cholesky coefficients of accepted[a]
  const double scale = std::max(1.0, kpool.diagonal().maxCoeff());
  for (int c = 0; c < static_cast<int>(pool.size()); ++c) {
    const int r = static_cast<int>(accepted.size());
    Vec coeff(r);
    for (int a = 0; a < r; ++a) {
      double s = kpool(c, accepted[a]);
      for (int b = 0; b < a; ++b) s -= coeff[b] * chol_rows(a, b);
      coeff[a] = s / chol_rows(a, a);
    }
    const double residual = kpool(c, c) - coeff.squaredNorm();
    if (residual <= 1e-10 * scale) continue;
    chol_rows.conservativeResize(r + 1, r + 1);
    chol_rows.row(r).setZero();
    chol_rows.col(r).setZero();
    chol_rows.row(r).head(r) = coeff.transpose();
    chol_rows(r, r) = std::sqrt(residual);
    accepted.push_back(c);
  }

  // Over the cap: repeatedly drop the landmark with the smallest
  // leave-one-out residual 1 / (K_SS^{-1})_ii.
  const int cap = basis.cap > 0 ? basis.cap : static_cast<int>(accepted.size());
  while (static_cast<int>(accepted.size()) > cap) {
    const int r = static_cast<int>(accepted.size());
    Mat kss(r, r);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) kss(a, b) = kpool(accepted[a], accepted[b]);
    const Mat inv = linalg::pinv_sym(kss, 1e-14);
    int drop = 0;
    for (int a = 1; a < r; ++a)
      if (inv(a, a) > inv(drop, drop)) drop = a;
    accepted.erase(accepted.begin() + drop);
  }

  EmbeddingBasis out;
  out.spec = spec;
  out.d = basis.d;
  out.cap = basis.cap;
  const int m = static_cast<int>(accepted.size());
  Mat kss(m, m);
  for (int a = 0; a < m; ++a) {
    out.landmarks.push_back(pool[accepted[a]]);
    out.landmark_indices.push_back(pool_index[accepted[a]]);
    for (int b = 0; b < m; ++b) kss(a, b) = kpool(accepted[a], accepted[b]);
  }
  factor_landmarks(out, kss);
  return out;
}

FactorTriple decode_to_operator(const Vec& z, const EmbeddingBasis& basis,
                                const std::vector<FactorTriple>& codebook, const DecodeOptions& options) {
  if (codebook.empty()) throw DomainError("decode needs a nonempty codebook");
  if (static_cast<int>(codebook.size()) != basis.num_landmarks())
    throw DomainError("codebook is not aligned with the basis landmarks");
  if (z.size() != basis.d) throw DomainError("embedding dimension does not match the basis");
  if (!(options.temperature > 0.0)) throw DomainError("decode temperature must be positive");

  const int m = basis.num_landmarks();
  Vec logits(m);
  for (int k = 0; k < m; ++k)
    logits[k] = -(z - basis.landmark_embeddings.row(k).transpose()).squaredNorm() / options.temperature;
  const Vec w = softmax(logits);

  const int n = codebook.front().dim();
  int rank = options.rank;
  Mat op = Mat::Zero(n, n);
  for (int k = 0; k < m; ++k) {
    if (codebook[k].dim() != n) throw DomainError("codebook operators differ in size");
    if (options.rank < 0) rank = std::max(rank, codebook[k].rank());
    if (w[k] != 0.0) op += w[k] * codebook[k].dense();
  }
  return FactorTriple::from_symmetric(linalg::symmetrize(op), rank);
}

std::vector<FactorTriple> landmark_codebook(const EmbeddingBasis& basis) {
  std::vector<FactorTriple> book;
  for (const auto& item : basis.landmarks) {
    const auto* op = std::get_if<OperatorItem>(&item);
    if (!op) throw DomainError("landmark codebook needs operator items");
    book.push_back(op->factors);
  }
  return book;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json triple_to_json(const FactorTriple& t) {
  return {{"U", io::to_json(t.U)}, {"sigma", io::to_json(t.sigma)}};
}

FactorTriple triple_from_json(const nlohmann::json& j) {
  FactorTriple t;
  t.U = io::mat_from_json(j.at("U"));
  t.sigma = io::vec_from_json(j.at("sigma"));
  if (t.U.size() == 0) t.U.resize(0, 0);
  t.V = t.U;
  return t;
}

nlohmann::json item_to_json(const KernelItem& item) {
  if (const auto* v = std::get_if<Vec>(&item)) return {{"vector", io::to_json(*v)}};
  const auto& op = std::get<OperatorItem>(item);
  return {{"factors", triple_to_json(op.factors)}, {"source", to_json(op.source)}};
}

KernelItem item_from_json(const nlohmann::json& j) {
  if (j.contains("vector")) return io::vec_from_json(j.at("vector"));
  return OperatorItem{triple_from_json(j.at("factors")), distribution_from_json(j.at("source"))};
}

}  // namespace

void save_basis(const EmbeddingBasis& basis, const std::filesystem::path& path) {
  nlohmann::json h;
  h["format"] = "actpc-basis-v1";
  h["kind"] = basis.spec.kind == KernelKind::wasserstein_gaussian ? "wasserstein_gaussian" : "flattened_rbf";
  h["bandwidth"] = basis.spec.bandwidth;
  if (basis.spec.graph) h["graph"] = to_json(*basis.spec.graph);
  h["d"] = basis.d;
  h["cap"] = basis.cap;
  h["m"] = basis.num_landmarks();
  h["singular"] = basis.singular;
  h["gram_error"] = basis.gram_error;
  h["landmark_indices"] = basis.landmark_indices;
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : basis.landmarks) items.push_back(item_to_json(it));
  h["landmarks"] = std::move(items);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  io::write_header(out, h);
  io::write_f64_le(out, {basis.eigvecs.data(), static_cast<std::size_t>(basis.eigvecs.size())});
  io::write_f64_le(out, {basis.eigvals.data(), static_cast<std::size_t>(basis.eigvals.size())});
  io::write_f64_le(out, {basis.landmark_embeddings.data(),
                         static_cast<std::size_t>(basis.landmark_embeddings.size())});
}

EmbeddingBasis load_basis(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  const auto h = io::read_header(in);
  if (h.value("format", "") != "actpc-basis-v1") throw ConfigError("not an embedding basis file");
  EmbeddingBasis b;
  b.spec.kind = h.at("kind") == "wasserstein_gaussian" ? KernelKind::wasserstein_gaussian
                                                        : KernelKind::flattened_rbf;
  b.spec.bandwidth = h.at("bandwidth").get<double>();
  if (h.contains("graph")) b.spec.graph = std::make_shared<GroundMetricGraph>(graph_from_json(h.at("graph")));
  b.d = h.at("d").get<int>();
  b.cap = h.at("cap").get<int>();
  b.singular = h.at("singular").get<bool>();
  b.gram_error = h.at("gram_error").get<double>();
  b.landmark_indices = h.at("landmark_indices").get<std::vector<int>>();
  for (const auto& it : h.at("landmarks")) b.landmarks.push_back(item_from_json(it));
  const int m = h.at("m").get<int>();
  auto ev = io::read_f64_le(in, static_cast<std::size_t>(m) * m);
  b.eigvecs = Eigen::Map<Mat>(ev.data(), m, m);
  auto vals = io::read_f64_le(in, m);
  b.eigvals = Eigen::Map<Vec>(vals.data(), m);
  auto emb = io::read_f64_le(in, static_cast<std::size_t>(m) * b.d);
  b.landmark_embeddings = Eigen::Map<Mat>(emb.data(), m, b.d);
  return b;
}

void save_codebook(const std::vector<FactorTriple>& codebook, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : codebook) j.push_back(triple_to_json(t));
  io::write_json_file(path, {{"format", "actpc-codebook-v1"}, {"operators", j}});
}

std::vector<FactorTriple> load_codebook(const std::filesystem::path& path) {
  const auto j = io::read_json_file(path);
  if (j.value("format", "") != "actpc-codebook-v1") throw ConfigError("not a codebook file");
  std::vector<FactorTriple> book;
  for (const auto& t : j.at("operators")) book.push_back(triple_from_json(t));
  return book;
}

}  // namespace actpc
