#pragma once

// Experiment driver behind the CLI: benchmark comparison of Euclidean and
// Wasserstein-preconditioned training, the Lipschitz / scale / convexity
// probes, the Chinaglia demo and Galois scenario runs.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "actpc/types.hpp"

namespace actpc::harness {

inline constexpr const char* kVersion = "0.1.0";

struct MetricRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string variant;
  std::string metric;
  double value = 0.0;
};

struct Report {
  std::string command;
  nlohmann::json config;        // effective config after defaults
  std::string config_hash;      // FNV-1a of the canonical config dump
  std::vector<std::uint64_t> seeds;
  std::vector<MetricRow> rows;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::string> violations;  // invariant violations seen during the run

  bool ok() const { return violations.empty(); }
  void add(const std::string& run_id, std::uint64_t seed, const std::string& variant, const std::string& metric,
           double value);
  nlohmann::json to_json() const;
};

/// Writes report.json and metrics.csv (run_id, seed, variant, metric, value).
void write_report(const Report& report, const std::filesystem::path& dir);

/// Parses "a..b" (inclusive) or a single integer.
std::vector<std::uint64_t> parse_seed_range(const std::string& text);

/// Overlays `user` on `defaults`, rejecting keys `defaults` does not have.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& user, const std::string& where);

std::string config_hash(const nlohmann::json& config);

// Censoring-aware summaries -------------------------------------------------

/// Kaplan-Meier estimate of the q-quantile of event times; +inf if the
/// survival curve never drops to 1 - q.
double km_quantile(const std::vector<double>& times, const std::vector<bool>& censored, double q);

struct Spread {
  double median = 0.0, q25 = 0.0, q75 = 0.0;
};
Spread quartiles(std::vector<double> values);

// Commands ------------------------------------------------------------------

nlohmann::json bench_defaults();
nlohmann::json lipschitz_defaults();
nlohmann::json scale_defaults();
nlohmann::json convexity_defaults();
nlohmann::json chinaglia_defaults();
nlohmann::json galois_defaults();

Report run_bench_compare(const nlohmann::json& config, const std::vector<std::uint64_t>& seeds);
Report probe_lipschitz(const nlohmann::json& config, const std::vector<std::uint64_t>& seeds);
Report probe_scale(const nlohmann::json& config, const std::vector<std::uint64_t>& seeds);
Report probe_convexity(const nlohmann::json& config, const std::vector<std::uint64_t>& seeds);
/// Scenario JSON lists the facts, the query and the expected answer.
Report demo_chinaglia(const nlohmann::json& scenario, const std::vector<std::uint64_t>& seeds);
Report galois_run(const nlohmann::json& scenario, const std::vector<std::uint64_t>& seeds);

/// Closed-form Lipschitz constant of theta -> W2(q, p(theta)) for the
/// one-node-versus-rest softmax family on a path of `nodes` points with q a
/// point mass at the last node: |a - b| / (8 sqrt(min(a, b))) where
/// a = c(0, N-1)^2 and b is the mean squared cost of the other nodes.
double lipschitz_bound_one_vs_rest(int nodes);

/// One bench curve: W2 to the target after each outer iteration.
struct BenchCurve {
  std::vector<double> w2;
  int iterations_to_threshold = -1;  // -1 if censored
  bool diverged = false;
  std::string error;
};

/// Runs a single (seed, variant) training curve; exposed for the
/// self-consistency check.
BenchCurve bench_curve(const nlohmann::json& config, std::uint64_t seed, const std::string& variant);

}  // namespace actpc::harness
