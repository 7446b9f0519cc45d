#include <doctest.h>

#include <filesystem>

#include "actpc/approximator.hpp"
#include "actpc/embedding.hpp"
#include "actpc/error.hpp"
#include "actpc/kernels.hpp"
#include "oracles.hpp"

using namespace actpc;

namespace {
std::vector<KernelItem> vector_items(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<KernelItem> items;
  for (int i = 0; i < n; ++i) items.push_back(gaussian_vec(rng, dim));
  return items;
}
KernelSpec rbf(double sigma) {
  KernelSpec s;
  s.bandwidth = sigma;
  return s;
}
}  // namespace

TEST_SUITE("embedding") {
  TEST_CASE("kernel spec validation") {
    KernelSpec s = rbf(0.0);
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = rbf(1.0);
    s.kind = KernelKind::wasserstein_gaussian;
    CHECK_THROWS_AS(s.validate(), ConfigError);  // needs a graph
  }

  TEST_CASE("flattened RBF on vectors by hand") {
    Vec a(2), b(2);
    a << 0.0, 0.0;
    b << 1.0, 1.0;
    CHECK(kernel_eval(a, b, rbf(2.0)) == doctest::Approx(std::exp(-2.0 / 8.0)));
    CHECK(kernel_eval(a, a, rbf(2.0)) == 1.0);
  }

  TEST_CASE("Wasserstein Gaussian kernel is symmetric and one on the diagonal") {
    const auto g = GroundMetricGraph::path(5);
    std::mt19937_64 rng(2);
    const auto x = operator_item(oracle::random_distribution(rng, 5), g);
    const auto y = operator_item(oracle::random_distribution(rng, 5), g);
    KernelSpec s;
    s.kind = KernelKind::wasserstein_gaussian;
    s.bandwidth = 0.7;
    s.graph = std::make_shared<GroundMetricGraph>(g);
    CHECK(kernel_eval(x, x, s) == doctest::Approx(1.0));
    CHECK(kernel_eval(x, y, s) == kernel_eval(y, x, s));
    const double w2 = w2_exact(x.source, y.source, g).distance;
    CHECK(kernel_eval(x, y, s) == doctest::Approx(std::exp(-0.7 * w2 * w2)));
  }

  TEST_CASE("full-landmark Nystrom equals kernel PCA") {
    const auto items = vector_items(12, 4, 3);
    NystromOptions o;
    o.landmarks = 12;
    o.dim = 5;
    const auto basis = nystrom_fit(items, rbf(1.5), o);
    const Mat K = kernels::gram_matrix_serial(items, rbf(1.5));
    CHECK(oracle::max_diff_up_to_sign(oracle::kernel_pca(K, 5), basis.training_embeddings) < 1e-8);
    CHECK(basis.gram_error < 1e-8);
  }

  TEST_CASE("projection of a fitting item matches its training embedding") {
    const auto items = vector_items(20, 3, 4);
    NystromOptions o;
    o.landmarks = 8;
    o.dim = 3;
    o.seed = 9;
    const auto basis = nystrom_fit(items, rbf(1.0), o);
    for (int i = 0; i < 20; ++i)
      CHECK((project(items[i], basis) - basis.training_embeddings.row(i).transpose()).norm() < 1e-10);
  }

  TEST_CASE("landmark prefixes are nested across m") {
    const auto items = vector_items(32, 3, 5);
    std::vector<int> prev;
    double prev_err = std::numeric_limits<double>::infinity();
    for (int m : {4, 8, 16, 32}) {
      NystromOptions o;
      o.landmarks = m;
      o.dim = 4;
      o.seed = 17;
      const auto b = nystrom_fit(items, rbf(1.0), o);
      for (int idx : prev) CHECK(std::find(b.landmark_indices.begin(), b.landmark_indices.end(), idx) != b.landmark_indices.end());
      prev = b.landmark_indices;
      CHECK(b.gram_error <= prev_err + 1e-12);
      prev_err = b.gram_error;
    }
  }

  TEST_CASE("Nystrom argument checks") {
    const auto items = vector_items(5, 2, 6);
    NystromOptions o;
    o.landmarks = 6;
    o.dim = 2;
    CHECK_THROWS_AS(nystrom_fit(items, rbf(1.0), o), ConfigError);
    o.landmarks = 3;
    o.dim = 4;
    CHECK_THROWS_AS(nystrom_fit(items, rbf(1.0), o), ConfigError);
  }

  TEST_CASE("duplicate items flag a singular basis") {
    std::vector<KernelItem> items(6, KernelItem(Vec::Ones(3)));
    NystromOptions o;
    o.landmarks = 4;
    o.dim = 2;
    CHECK(nystrom_fit(items, rbf(1.0), o).singular);
  }

  TEST_CASE("random features approximate the RBF kernel") {
    std::mt19937_64 rng(7);
    RandomFeatureMap phi(3, 20000, 1.2, 11);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Vec x = 0.7 * gaussian_vec(rng, 3), y = 0.7 * gaussian_vec(rng, 3);
      worst = std::max(worst, std::abs(phi(x).dot(phi(y)) - kernel_eval(x, y, rbf(1.2))));
    }
    CHECK(worst < 0.05);
    CHECK(random_feature_map(Vec::Ones(3), 64, 1.0, 3) == random_feature_map(Vec::Ones(3), 64, 1.0, 3));
  }

  TEST_CASE("incremental update respects the cap and keeps embeddings usable") {
    const auto items = vector_items(40, 3, 8);
    std::vector<KernelItem> first(items.begin(), items.begin() + 20), more(items.begin() + 20, items.end());
    NystromOptions o;
    o.landmarks = 10;
    o.dim = 3;
    o.cap = 14;
    const auto basis = nystrom_fit(first, rbf(1.0), o);
    const auto up = incremental_update(basis, more);
    CHECK(up.num_landmarks() <= 14);
    CHECK(up.num_landmarks() >= 10);
    CHECK(up.d == 3);
    // Adding landmarks cannot worsen the Nystrom reconstruction of a new item much.
    const Vec z = project(more.front(), up);
    CHECK(z.allFinite());
    // Redundant items are not added.
    const auto same = incremental_update(basis, {basis.landmarks.front()});
    CHECK(same.num_landmarks() == basis.num_landmarks());
  }

  TEST_CASE("decoding a landmark embedding at low temperature recovers its operator") {
    const auto g = GroundMetricGraph::path(5);
    std::mt19937_64 rng(9);
    std::vector<KernelItem> items;
    for (int i = 0; i < 12; ++i) items.push_back(operator_item(oracle::random_distribution(rng, 5), g));
    NystromOptions o;
    o.landmarks = 6;
    o.dim = 4;
    const auto basis = nystrom_fit(items, rbf(3.0), o);
    const auto book = landmark_codebook(basis);
    DecodeOptions d;
    d.temperature = 1e-6;
    const auto op = decode_to_operator(basis.landmark_embeddings.row(2).transpose(), basis, book, d);
    CHECK((op.dense() - book[2].dense()).norm() < 1e-8 * book[2].dense().norm());
    // Output is always a symmetric PSD-style factorization.
    const Mat dense = decode_to_operator(Vec::Zero(4), basis, book).dense();
    CHECK((dense - dense.transpose()).norm() < 1e-10);
  }

  TEST_CASE("basis and codebook persistence") {
    const auto items = vector_items(10, 3, 10);
    NystromOptions o;
    o.landmarks = 5;
    o.dim = 2;
    const auto basis = nystrom_fit(items, rbf(1.0), o);
    const auto dir = std::filesystem::temp_directory_path();
    save_basis(basis, dir / "actpc_basis.bin");
    const auto back = load_basis(dir / "actpc_basis.bin");
    CHECK(back.eigvecs == basis.eigvecs);
    CHECK(back.landmark_indices == basis.landmark_indices);
    CHECK(project(items[3], back) == project(items[3], basis));

    const auto g = GroundMetricGraph::path(4);
    std::vector<FactorTriple> book{operator_item(Distribution::uniform(4), g).factors};
    save_codebook(book, dir / "actpc_book.json");
    CHECK((load_codebook(dir / "actpc_book.json")[0].dense() - book[0].dense()).norm() == 0.0);
  }
}

TEST_SUITE("kernels") {
  TEST_CASE("OpenMP kernels match the serial references bit-for-bit") {
    const auto items = vector_items(24, 4, 12);
    const auto rows = vector_items(7, 4, 13);
    const auto g = GroundMetricGraph::path(6);
    std::mt19937_64 rng(14);
    std::vector<Distribution> dists;
    for (int i = 0; i < 12; ++i) dists.push_back(oracle::random_distribution(rng, 6));
    const Mat K = kernels::gram_matrix_serial(items, rbf(1.0));
    const Mat C = kernels::cross_kernel_serial(rows, items, rbf(1.0));
    const Mat D = kernels::pairwise_w2_serial(dists, g);
    const Vec T = kernels::w2_to_target_serial(dists, dists[0], g);
    for (int w : {1, 4, 8}) {
      CHECK(kernels::gram_matrix_omp(items, rbf(1.0), w) == K);
      CHECK(kernels::cross_kernel_omp(rows, items, rbf(1.0), w) == C);
      CHECK(kernels::pairwise_w2_omp(dists, g, w) == D);
      CHECK(kernels::w2_to_target_omp(dists, dists[0], g, w) == T);
    }
    CHECK((D - D.transpose()).norm() == 0.0);
  }
}
