#include <doctest.h>

#include <filesystem>

#include "actpc/error.hpp"
#include "actpc/galois.hpp"
#include "oracles.hpp"

using namespace actpc;

namespace {
// Point mass at node |d| - 1 on a path: distance to a point-mass target is
// the length difference.
StateMap length_point_mass(int nodes) {
  return [nodes](const CandidateState& s) {
    return Distribution::point_mass(nodes, std::clamp(static_cast<int>(s.discrete.size()) - 1, 0, nodes - 1));
  };
}
CandidateState st(const std::string& d, double c = 0.0) { return {d, Vec::Constant(1, c), {}}; }
}  // namespace

TEST_SUITE("galois") {
  TEST_CASE("levenshtein by hand") {
    CHECK(levenshtein("", "") == 0);
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("abc", "") == 3);
    CHECK(levenshtein("flaw", "lawn") == 2);
  }

  TEST_CASE("hybrid distance combines both parts and is a metric on samples") {
    HybridMetricSpec s{2.0, 0.5};
    CHECK(hybrid_distance(st("ab", 0.0), st("abc", 2.0), s) == doctest::Approx(2.0 * 1 + 0.5 * 2.0));
    std::mt19937_64 rng(1);
    std::vector<CandidateState> pts;
    for (int i = 0; i < 8; ++i) pts.push_back(st(std::string(1 + rng() % 4, 'a' + rng() % 2), gaussian_vec(rng, 1)[0]));
    for (auto& a : pts)
      for (auto& b : pts)
        for (auto& c : pts) CHECK(hybrid_distance(a, c, s) <= hybrid_distance(a, b, s) + hybrid_distance(b, c, s) + 1e-12);
    HybridMetricSpec bad{-1.0, 1.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("auto rescale keeps the total weight and balances contributions") {
    std::vector<CandidateState> sample{st("a", 0.0), st("abcd", 0.01), st("b", 0.02)};
    const auto r = auto_rescale({1.0, 1.0}, sample);
    CHECK(r.alpha + r.beta == doctest::Approx(2.0));
    CHECK(r.beta > r.alpha);
  }

  TEST_CASE("single edits are sorted, distinct and length-bounded") {
    ExpansionRules rules{"ab", 1, 3, {}};
    const auto e = single_edits("ab", rules);
    CHECK(std::is_sorted(e.begin(), e.end()));
    CHECK(std::adjacent_find(e.begin(), e.end()) == e.end());
    for (const auto& s : e) {
      CHECK(s.size() >= 1);
      CHECK(s.size() <= 3);
      CHECK(levenshtein(s, "ab") == 1);
    }
    CHECK(std::find(e.begin(), e.end(), "b") != e.end());
    CHECK(std::find(e.begin(), e.end(), "aab") != e.end());
  }

  TEST_CASE("candidate keys separate nearby continuous values") {
    CHECK(st("a", 0.1).key() != st("a", std::nextafter(0.1, 1.0)).key());
    CHECK(st("a", 0.1).key() == st("a", 0.1).key());
  }

  TEST_CASE("expand keeps the input and depends only on seed and state") {
    ExpansionRules rules{"ab", 1, 4, {0.1}};
    const auto f = make_set({st("a"), st("ab", 0.3)});
    const auto out = expand(f, rules, 8, 3);
    for (const auto& [k, s] : f) CHECK(out.count(k) == 1);
    // A state's moves do not change when other states join the frontier.
    const auto solo = expand(make_set({st("a")}), rules, 8, 3);
    for (const auto& [k, s] : solo) CHECK(out.count(k) == 1);
    CHECK(expand_omp(f, rules, 8, 3, 4).size() == out.size());
  }

  TEST_CASE("shrink keeps the best by score then key") {
    const auto g = GroundMetricGraph::path(4);
    const auto target = Distribution::point_mass(4, 2);
    const auto map = length_point_mass(4);
    const auto kept = shrink(make_set({st("a"), st("aa"), st("aaa"), st("aaaa")}), target, g, map, 2);
    REQUIRE(kept.size() == 2);
    CHECK(kept.count(st("aaa").key()) == 1);
    // aa and aaaa tie at distance 1; the smaller key wins.
    CHECK(kept.count(std::min(st("aa").key(), st("aaaa").key())) == 1);
  }

  TEST_CASE("partial order") {
    const auto g = GroundMetricGraph::path(4);
    const auto target = Distribution::point_mass(4, 2);
    const auto map = length_point_mass(4);
    CHECK(partial_order_cmp(st("aaa"), st("a"), target, g, map) == Ordering::better);
    CHECK(partial_order_cmp(st("aa"), st("aaaa"), target, g, map) == Ordering::equal);
    CHECK(partial_order_cmp(st("a"), st("aa"), target, g, map) == Ordering::worse);
  }

  TEST_CASE("DP oracle on a hand-built fixture") {
    const auto g = GroundMetricGraph::path(5);
    const auto map = length_point_mass(5);
    const auto target = Distribution::point_mass(5, 2);  // "aaa"
    OracleSpace space{"a", 1, 5, {}, 1000};
    const auto r = dp_oracle(space, target, g, map);
    CHECK(r.best.discrete == "aaa");
    CHECK(r.best_distance == 0.0);
    CHECK(r.states == 5);
    CHECK(state_distance(st("aa"), target, g, map) == doctest::Approx(1.0));
    CHECK(state_distance(st("aaaaa"), target, g, map) == doctest::Approx(2.0));
    space.limit = 3;
    CHECK_THROWS_AS(dp_oracle(space, target, g, map), DomainError);
    space.alphabet.clear();
    CHECK_THROWS_AS(dp_oracle(space, target, g, map), ConfigError);
  }

  TEST_CASE("fixpoint reaches the oracle on the chain family and traces never rise") {
    const auto g = GroundMetricGraph::path(5);
    const auto map = chain_state_map(5);
    ExpansionRules rules{"a", 1, 5, {0.3, 0.1, 0.03, 0.01, 0.003}};
    OracleSpace space{"a", 1, 5, grid_1d(-0.5, 0.5, 101), 100000};
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto target = map(st(std::string(1 + seed % 5, 'a'), 0.37 - 0.07 * static_cast<double>(seed)));
      FixpointOptions o;
      o.seed = seed;
      const auto r = iterate_to_fixpoint(st("a"), target, g, map, rules, o);
      for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].best <= r.trace[k - 1].best);
      CHECK(r.best_distance <= dp_oracle(space, target, g, map).best_distance + 0.05);
    }
  }

  TEST_CASE("fixpoint is bit-exact across worker counts") {
    const auto g = GroundMetricGraph::path(5);
    const auto map = trigram_state_map(5, 1, 3);
    ExpansionRules rules{"ab", 1, 4, {0.3, 0.03}};
    const auto target = map(st("abba", 0.2));
    FixpointOptions o;
    o.seed = 4;
    o.max_iter = 20;
    const auto base = iterate_to_fixpoint(st("a"), target, g, map, rules, o);
    for (int w : {4, 8}) {
      o.workers = w;
      const auto r = iterate_to_fixpoint(st("a"), target, g, map, rules, o);
      CHECK(r.best.key() == base.best.key());
      CHECK(r.best_distance == base.best_distance);
      CHECK(r.trace.size() == base.trace.size());
    }
  }

  TEST_CASE("anchor graph and trace csv") {
    std::vector<CandidateState> anchors{st("a", 0.0), st("ab", 0.5), st("abb", 1.0)};
    const auto g = anchor_graph(anchors, {1.0, 1.0});
    CHECK(g.size() == 3);
    CHECK(g.cost(0, 1) == doctest::Approx(1.5));
    const auto path = std::filesystem::temp_directory_path() / "actpc_trace.csv";
    write_trace_csv(path, {{0, 1, 1, 0.5}, {1, 4, 9, 0.25}});
    CHECK(std::filesystem::file_size(path) > 0);
  }
}
