#include <doctest.h>

#include <filesystem>

#include "actpc/error.hpp"
#include "actpc/geometry.hpp"
#include "actpc/linalg.hpp"
#include "oracles.hpp"

using namespace actpc;

TEST_SUITE("geometry") {
  TEST_CASE("distribution validation") {
    CHECK_THROWS_AS(Distribution{Vec::Zero(0)}, DomainError);
    Vec bad(2);
    bad << 0.7, 0.7;
    CHECK_THROWS_AS(Distribution{bad}, DomainError);
    bad << 1.2, -0.2;
    CHECK_THROWS_AS(Distribution{bad}, DomainError);
    CHECK(Distribution::uniform(4)[2] == doctest::Approx(0.25));
    CHECK(Distribution::point_mass(3, 1)[1] == 1.0);
    Vec raw(3);
    raw << 2.0, 1.0, 1.0;
    CHECK(Distribution::normalized(raw)[0] == doctest::Approx(0.5));
  }

  TEST_CASE("graph validation rejects asymmetric or negative input") {
    Mat w = Mat::Zero(2, 2), c = Mat::Zero(2, 2);
    w(0, 1) = 1.0;
    c(0, 1) = c(1, 0) = 1.0;
    CHECK_THROWS_AS(GroundMetricGraph::from_matrices(w, c), DomainError);
    w(1, 0) = -1.0;
    CHECK_THROWS_AS(GroundMetricGraph::from_matrices(w, c), DomainError);
  }

  TEST_CASE("laplacian is symmetric PSD with zero row sums") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
      const int n = 2 + static_cast<int>(rng() % 15);
      const auto g = oracle::random_connected_graph(rng, n);
      const Mat L = build_laplacian(oracle::random_distribution(rng, n), g).matrix;
      CHECK(L.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
      CHECK((L - L.transpose()).cwiseAbs().maxCoeff() == 0.0);
      CHECK(Eigen::SelfAdjointEigenSolver<Mat>(L).eigenvalues().minCoeff() > -1e-9);
    }
  }

  TEST_CASE("laplacian of a two-point graph by hand") {
    const auto g = GroundMetricGraph::path(2);
    Vec w(2);
    w << 0.25, 0.75;
    const Mat L = build_laplacian(Distribution(w), g).matrix;
    const double e = g.omega(0, 1) * 1.0;
    CHECK(L(0, 0) == doctest::Approx(e));
    CHECK(L(0, 1) == doctest::Approx(-e));
  }

  TEST_CASE("low-rank pseudoinverse") {
    std::mt19937_64 rng(2);
    const auto g = oracle::random_connected_graph(rng, 8);
    const auto lap = build_laplacian(oracle::random_distribution(rng, 8), g);
    const auto full = pinv_lowrank(lap, 7);
    CHECK(full.effective_rank == 7);
    CHECK_FALSE(full.reduced_rank);
    const Mat ref = linalg::pinv_sym(lap.matrix);
    CHECK((full.factors.dense() - ref).norm() < 1e-8 * ref.norm());
    // Truncation keeps the largest modes of the pseudoinverse.
    const auto low = pinv_lowrank(lap, 3);
    CHECK(low.factors.rank() == 3);
    CHECK(low.factors.sigma[0] == doctest::Approx(full.factors.sigma[0]));
    CHECK_THROWS_AS(pinv_lowrank(lap, 8), DomainError);
  }

  TEST_CASE("disconnected graph reports reduced rank") {
    Mat w = Mat::Zero(4, 4), c = Mat::Constant(4, 4, 1.0);
    c.diagonal().setZero();
    w(0, 1) = w(1, 0) = 1.0;
    w(2, 3) = w(3, 2) = 1.0;
    const auto g = GroundMetricGraph::from_matrices(w, c);
    const auto r = pinv_lowrank(build_laplacian(Distribution::uniform(4), g), 3);
    CHECK(r.reduced_rank);
    CHECK(r.effective_rank == 2);
  }

  TEST_CASE("exact W2 basics") {
    const auto g = GroundMetricGraph::path(5);
    const auto p = Distribution::point_mass(5, 0), q = Distribution::point_mass(5, 3);
    CHECK(w2_exact(p, q, g).distance == doctest::Approx(3.0));
    std::mt19937_64 rng(3);
    const auto a = oracle::random_distribution(rng, 5), b = oracle::random_distribution(rng, 5);
    CHECK(w2_exact(a, a, g).distance < 1e-9);
    CHECK(w2_exact(a, b, g).distance == doctest::Approx(w2_exact(b, a, g).distance).epsilon(1e-12));
    const auto plan = w2_exact(a, b, g).plan.pi;
    CHECK((plan.rowwise().sum() - a.weights()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((plan.colwise().sum().transpose() - b.weights()).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("exact W2 agrees with vertex enumeration on 3-point instances") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 30; ++t) {
      const auto g = oracle::random_connected_graph(rng, 3, 0.5);
      const auto p = oracle::random_distribution(rng, 3), q = oracle::random_distribution(rng, 3);
      const double ref = oracle::transport_by_vertices(p.weights(), q.weights(), g.cost.cwiseProduct(g.cost));
      CHECK(std::abs(w2_exact(p, q, g).plan.cost_value - ref) < 1e-12);
    }
  }

  TEST_CASE("exact solver survives marginals whose totals differ in the last ulp") {
    const auto g = GroundMetricGraph::path(16);
    Vec a(16), b(16);
    for (int i = 0; i < 16; ++i) {
      a[i] = std::exp(-(i - 3.3) * (i - 3.3) / 4.5);
      b[i] = std::exp(-(i - 9.1) * (i - 9.1) / 4.5);
    }
    a /= a.sum();
    b /= b.sum();
    CHECK_NOTHROW(w2_exact(Distribution(a), Distribution(b), g));
  }

  TEST_CASE("exact W2 refuses large supports") {
    const auto g = GroundMetricGraph::path(65);
    CHECK_THROWS_AS(w2_exact(Distribution::uniform(65), Distribution::uniform(65), g), DomainError);
  }

  TEST_CASE("sinkhorn approaches the exact value as epsilon shrinks") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 10; ++t) {
      const auto g = oracle::random_connected_graph(rng, 4);
      const auto p = oracle::random_distribution(rng, 4, 1.5), q = oracle::random_distribution(rng, 4, 1.5);
      const double exact = w2_exact(p, q, g).distance;
      double prev = std::numeric_limits<double>::infinity();
      for (double eps : {1e-1, 1e-2, 1e-3}) {
        SinkhornOptions so;
        so.epsilon = eps;
        const auto r = w2_sinkhorn(p, q, g, so);
        CHECK(r.converged);
        const double err = std::abs(r.distance - exact);
        CHECK(err <= prev + 1e-9);
        prev = err;
      }
      CHECK(prev / exact < 1e-2);
    }
  }

  TEST_CASE("sinkhorn self-distance shrinks with epsilon") {
    const auto g = GroundMetricGraph::path(4);
    const auto p = Distribution::uniform(4);
    SinkhornOptions loose, tight;
    loose.epsilon = 1e-1;
    tight.epsilon = 1e-3;
    const double a = w2_sinkhorn(p, p, g, loose).distance, b = w2_sinkhorn(p, p, g, tight).distance;
    CHECK(b < a);
    CHECK(b < 0.05);
    SinkhornOptions zero;
    zero.epsilon = 0.0;
    CHECK_THROWS_AS(w2_sinkhorn(p, p, g, zero), DomainError);
  }

  TEST_CASE("finite-difference Jacobian of softmax matches the closed form") {
    std::mt19937_64 rng(6);
    const Vec theta = gaussian_vec(rng, 5);
    DistributionMap map = [](const Vec& t) { return Distribution(softmax(t)); };
    const Mat J = jacobian_fd(map, theta, 1e-6);
    const Vec p = softmax(theta);
    const Mat ref = Mat(p.asDiagonal()) - p * p.transpose();
    CHECK((J - ref).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("metric tensor: factored and dense forms agree, damping escalates") {
    std::mt19937_64 rng(7);
    const auto g = oracle::random_connected_graph(rng, 6);
    const auto lap = build_laplacian(oracle::random_distribution(rng, 6), g);
    const auto pinv = pinv_lowrank(lap, 5).factors;
    const Mat J = gaussian_mat(rng, 6, 3);
    const auto a = metric_tensor(pinv, J), b = metric_tensor(pinv.dense(), J);
    CHECK((a.matrix - b.matrix).norm() < 1e-10 * b.matrix.norm());
    // Rank-deficient J: zero damping must escalate.
    Mat Jz = Mat::Zero(6, 2);
    const auto z = metric_tensor(pinv.dense(), Jz, 0.0);
    CHECK(z.escalations >= 1);
    CHECK(z.damping > 0.0);
    CHECK_THROWS_AS(metric_tensor(pinv.dense(), J, -1.0), DomainError);
  }

  TEST_CASE("natural gradient with a non-PD metric raises SolveError") {
    MetricTensor m{-Mat::Identity(2, 2), 0.0, 0};
    CHECK_THROWS_AS(natural_gradient_step(Vec::Zero(2), Vec::Ones(2), m, 0.1), SolveError);
  }

  TEST_CASE("json round trip of graphs and distributions") {
    std::mt19937_64 rng(8);
    const auto g = oracle::random_connected_graph(rng, 5);
    const auto p = oracle::random_distribution(rng, 5);
    const auto g2 = graph_from_json(to_json(g));
    CHECK(g2.cost == g.cost);
    CHECK(g2.omega == g.omega);
    CHECK(distribution_from_json(to_json(p)).weights() == p.weights());
  }

  TEST_CASE("plan and distance CSVs") {
    const auto dir = std::filesystem::temp_directory_path() / "actpc_geom_csv";
    std::filesystem::create_directories(dir);
    const auto g = GroundMetricGraph::path(3);
    write_plan_csv(dir / "plan.csv", w2_exact(Distribution::uniform(3), Distribution::point_mass(3, 0), g).plan);
    write_distances_csv(dir / "d.csv", {{"a", "b", 1.5}});
    CHECK(std::filesystem::file_size(dir / "plan.csv") > 0);
    CHECK(std::filesystem::file_size(dir / "d.csv") > 0);
  }
}
