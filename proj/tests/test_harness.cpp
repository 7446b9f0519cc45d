#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "actpc/error.hpp"
#include "actpc/harness.hpp"

using namespace actpc;
using namespace actpc::harness;

TEST_SUITE("harness") {
  TEST_CASE("seed ranges") {
    CHECK(parse_seed_range("3..5") == std::vector<std::uint64_t>{3, 4, 5});
    CHECK(parse_seed_range("7") == std::vector<std::uint64_t>{7});
    CHECK_THROWS_AS(parse_seed_range("5..3"), ConfigError);
    CHECK_THROWS_AS(parse_seed_range("a..b"), ConfigError);
  }

  TEST_CASE("config merge rejects unknown keys and merges nested objects") {
    const nlohmann::json d = {{"a", 1}, {"o", {{"x", 1}, {"y", 2}}}};
    const auto m = merge_config(d, {{"o", {{"y", 5}}}}, "t");
    CHECK(m["o"]["x"] == 1);
    CHECK(m["o"]["y"] == 5);
    CHECK_THROWS_AS(merge_config(d, {{"b", 1}}, "t"), ConfigError);
    CHECK_THROWS_AS(merge_config(d, {{"o", {{"z", 1}}}}, "t"), ConfigError);
    CHECK(config_hash(d) == config_hash(d));
    CHECK(config_hash(d) != config_hash(m));
  }

  TEST_CASE("Kaplan-Meier quantiles by hand") {
    // No censoring: the empirical quantile.
    CHECK(km_quantile({1, 2, 3, 4}, {false, false, false, false}, 0.5) == 2.0);
    // Times 1, 2+, 3, 4: S(1) = 3/4, S(3) = 3/4 * 1/2 = 3/8, so the median is 3.
    CHECK(km_quantile({1, 2, 3, 4}, {false, true, false, false}, 0.5) == 3.0);
    // Everything censored: never reached.
    CHECK(std::isinf(km_quantile({5, 5}, {true, true}, 0.5)));
    const auto s = quartiles({4, 1, 3, 2});
    CHECK(s.median == doctest::Approx(2.5));
    CHECK(s.q25 == doctest::Approx(1.75));
  }

  TEST_CASE("Lipschitz bound by hand for four nodes") {
    // a = 9, b = (4 + 1 + 0) / 3 = 5/3.
    CHECK(lipschitz_bound_one_vs_rest(4) == doctest::Approx((9.0 - 5.0 / 3.0) / (8.0 * std::sqrt(5.0 / 3.0))));
  }

  TEST_CASE("reports are reproducible bit-exact and written in both formats") {
    const nlohmann::json cfg = {{"pairs", 200}};
    const auto a = probe_scale(cfg, {1, 2});
    const auto b = probe_scale(cfg, {1, 2});
    CHECK(a.to_json().dump() == b.to_json().dump());
    const auto dir = std::filesystem::temp_directory_path() / "actpc_report";
    write_report(a, dir);
    std::ifstream csv(dir / "metrics.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "run_id,seed,variant,metric,value");
    CHECK(std::filesystem::exists(dir / "report.json"));
  }

  TEST_CASE("Chinaglia scenarios") {
    const auto def = demo_chinaglia(nullptr, {1, 2, 3});
    CHECK(def.ok());
    using nlohmann::json;
    json fact = {{"entity", "Chinaglia"}, {"pairs", json::array({json::array({"nationality", "Italy"})})}};
    json italy = {{"facts", json::array({fact})}, {"expect", nullptr}, {"expect_fact", 0}};
    CHECK(demo_chinaglia(italy, {1, 2, 3}).ok());
    const auto empty = demo_chinaglia({{"facts", nlohmann::json::array()}}, {1});
    CHECK_FALSE(empty.ok());
  }

  TEST_CASE("galois run summarises both containment readings") {
    auto s = galois_defaults();
    const auto r = galois_run(s, {1, 2, 3});
    CHECK(r.summary.contains("within_epsilon_rate"));
    CHECK(r.summary.contains("empirical_epsilon_at_95"));
    s["map"] = "bogus";
    CHECK_THROWS_AS(galois_run(s, {1}), ConfigError);
  }

  TEST_CASE("bench curves are deterministic and censoring is recorded") {
    const nlohmann::json c = {{"max_iters", 5}, {"threshold", 1e-9}};
    const auto a = bench_curve(c, 2, "euclidean"), b = bench_curve(c, 2, "euclidean");
    CHECK(a.w2 == b.w2);
    CHECK(a.iterations_to_threshold == -1);
    CHECK_THROWS_AS(bench_curve(c, 2, "nope"), ConfigError);
  }
}
