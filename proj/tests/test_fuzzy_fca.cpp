#include <doctest.h>

#include <filesystem>

#include "actpc/error.hpp"
#include "actpc/fuzzy_fca.hpp"
#include "oracles.hpp"

using namespace actpc;

namespace {
FuzzyConfig config(std::uint64_t seed = 1) {
  FuzzyConfig c;
  c.input_dim = 3;
  c.core = 2;
  c.discovered = 3;
  c.hidden = 4;
  c.utility_hidden = 5;
  c.outcome_dim = 2;
  c.seed = seed;
  return c;
}

Batch random_batch(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Batch b;
  for (int i = 0; i < n; ++i) b.emplace_back(gaussian_vec(rng, 3), gaussian_vec(rng, 2));
  return b;
}

// Flattens every trainable parameter so central differences can walk it.
struct Params {
  FuzzyLattice& lat;
  Mlp& net;
  Vec get() const {
    std::vector<double> v(lat.W().data(), lat.W().data() + lat.W().size());
    v.insert(v.end(), lat.V().data(), lat.V().data() + lat.V().size());
    for (const auto& l : net.layers()) {
      v.insert(v.end(), l.W.data(), l.W.data() + l.W.size());
      v.insert(v.end(), l.b.data(), l.b.data() + l.b.size());
    }
    return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  void set(const Vec& v) const {
    Eigen::Index k = 0;
    auto take = [&](double* dst, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; ++i) dst[i] = v[k++];
    };
    take(lat.W().data(), lat.W().size());
    take(lat.V().data(), lat.V().size());
    for (auto& l : net.layers()) {
      take(l.W.data(), l.W.size());
      take(l.b.data(), l.b.size());
    }
  }
};
}  // namespace

TEST_SUITE("fuzzy_fca") {
  TEST_CASE("config validation") {
    FuzzyConfig c;
    CHECK_THROWS_AS(FuzzyLattice{c}, ConfigError);
    c = config();
    c.sparsity = -1.0;
    CHECK_THROWS_AS(FuzzyLattice{c}, ConfigError);
  }

  TEST_CASE("augmented input layout") {
    const FuzzyLattice lat(config());
    Vec x(3);
    x << 3.0, 0.0, 4.0;
    const Vec a = lat.augment(x);
    CHECK(a.size() == lat.augmented_dim());
    CHECK(a.head(3) == x);
    CHECK(a.segment(3, 3).norm() == doctest::Approx(1.0));
    CHECK(a[6] == 1.0);
    const Vec f = fcl_forward(lat, x);
    CHECK(f.size() == lat.concepts());
    CHECK((f.array() > 0.0).all());
    CHECK((f.array() < 1.0).all());
  }

  TEST_CASE("core concepts are clamped to scaled unit directions") {
    Vec c1(3), c2(3);
    c1 << 2.0, 0.0, 0.0;
    c2 << 0.0, 0.0, -1.0;
    const auto lat = clamp_core_concepts(FuzzyLattice(config()), {{"a", c1}, {"b", c2}});
    CHECK(lat.names()[0] == "a");
    CHECK(lat.W()(0, 3) == doctest::Approx(kCoreScale));
    CHECK(lat.W()(1, 5) == doctest::Approx(-kCoreScale));
    CHECK(lat.clamped().row(0).all());
    CHECK_FALSE(lat.clamped().row(2).any());
    CHECK_THROWS_AS(clamp_core_concepts(FuzzyLattice(config()), {{"a", c1}, {"a", c2}}), DomainError);
  }

  TEST_CASE("co-training gradients match central differences") {
    FuzzyLattice lat(config(2));
    Mlp net = make_utility_net(lat.config());
    const Batch batch = random_batch(6, 3);
    const CotrainGradients g = cotrain_gradients(lat, net, batch);
    Params p{lat, net};
    std::vector<double> an(g.W.data(), g.W.data() + g.W.size());
    an.insert(an.end(), g.V.data(), g.V.data() + g.V.size());
    for (std::size_t l = 0; l < g.utility.W.size(); ++l) {
      an.insert(an.end(), g.utility.W[l].data(), g.utility.W[l].data() + g.utility.W[l].size());
      an.insert(an.end(), g.utility.b[l].data(), g.utility.b[l].data() + g.utility.b[l].size());
    }
    const Vec at = p.get();
    const Vec fd = oracle::central_difference(
        [&](const Vec& v) {
          p.set(v);
          const double f = cotrain_loss(lat, net, batch);
          p.set(at);
          return f;
        },
        at);
    const Vec analytic = Eigen::Map<Vec>(an.data(), static_cast<Eigen::Index>(an.size()));
    CHECK((fd - analytic).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(g.loss == doctest::Approx(cotrain_loss(lat, net, batch)));
  }

  TEST_CASE("clamped entries survive training bit-exactly") {
    Vec c1(3), c2(3);
    c1 << 1.0, 1.0, 0.0;
    c2 << 0.0, 1.0, 1.0;
    auto lat = clamp_core_concepts(FuzzyLattice(config(4)), {{"a", c1}, {"b", c2}});
    const Mat before = lat.W();
    Mlp net = make_utility_net(lat.config());
    const Batch batch = random_batch(20, 5);
    for (int s = 0; s < 200; ++s) cotrain_step(lat, net, batch, 0.05);
    CHECK(lat.W().row(0) == before.row(0));
    CHECK_FALSE(lat.W().row(2) == before.row(2));
  }

  TEST_CASE("training lowers the loss and beats the baseline on the separable task") {
    const Batch data = separable_task(300, 2, 6);
    const Batch train(data.begin(), data.begin() + 200), hold(data.begin() + 200, data.end());
    FuzzyConfig c;
    c.input_dim = 2;
    c.core = 0;
    c.seed = 6;
    FuzzyLattice lat(c);
    Mlp net = make_utility_net(c);
    const double before = cotrain_loss(lat, net, train);
    for (int s = 0; s < 600; ++s) cotrain_step(lat, net, train, 0.05);
    CHECK(cotrain_loss(lat, net, train) < before);
    const auto score = evaluate_lattice(lat, net, hold);
    CHECK(score.mse < score.baseline);
  }

  TEST_CASE("direct pipeline is never worse than the bottleneck it starts from") {
    const Batch data = separable_task(120, 2, 7);
    FuzzyConfig c;
    c.input_dim = 2;
    c.seed = 7;
    FuzzyLattice lat(c);
    Mlp net = make_utility_net(c);
    for (int s = 0; s < 100; ++s) cotrain_step(lat, net, data, 0.05);
    const auto r = bottleneck_compare(lat, net, data, 50, 0.05);
    CHECK(r.direct_loss <= r.lattice_loss + 1e-12);
  }

  TEST_CASE("export and save") {
    const FuzzyLattice lat(config(8));
    const auto j = export_lattice(lat);
    CHECK(j.at("concepts").size() == static_cast<std::size_t>(lat.concepts()));
    const auto path = std::filesystem::temp_directory_path() / "actpc_lattice.json";
    save_lattice(lat, path);
    CHECK(std::filesystem::file_size(path) > 0);
  }

  TEST_CASE("separable task labels follow the stated rule") {
    for (const auto& [x, y] : separable_task(50, 3, 9)) {
      const double expect = (x[0] > 0.3 ? 1.0 : 0.0) + (x[1] < -0.2 ? 2.0 : 0.0);
      CHECK(y[0] == expect);
    }
  }
}
