#pragma once

// Expand/shrink fixpoint search over hybrid symbolic + continuous states,
// ordered by the W2 distance of their induced distributions to a target.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "actpc/geometry.hpp"

namespace actpc {

struct CandidateState {
  std::string discrete;
  Vec continuous;
  std::optional<double> score;  // cached W2 to the target

  /// Canonical key: discrete part, then the continuous part in hex floats.
  std::string key() const;
};

struct HybridMetricSpec {
  double alpha = 1.0;
  double beta = 1.0;
  void validate() const;
};

std::size_t levenshtein(const std::string& a, const std::string& b);
double hybrid_distance(const CandidateState& a, const CandidateState& b, const HybridMetricSpec& spec);

/// Rescales alpha and beta (keeping alpha + beta) so both components have
/// the same mean contribution over all pairs of `sample`.
HybridMetricSpec auto_rescale(const HybridMetricSpec& spec, const std::vector<CandidateState>& sample);

/// Ground graph over anchor states with cost = hybrid distance.
GroundMetricGraph anchor_graph(const std::vector<CandidateState>& anchors, const HybridMetricSpec& spec);

using StateMap = std::function<Distribution(const CandidateState&)>;

/// softmax(B [hashed trigram counts of "^^" + d + "$$" ; continuous]) over
/// `nodes` support points with a seeded Gaussian readout B.
StateMap trigram_state_map(int nodes, int continuous_dim, std::uint64_t seed, int buckets = 16);

/// Chain map onto a path of `nodes` points: discretized Gaussian of width
/// `width` centred at (|d| - 1) + c[0].
StateMap chain_state_map(int nodes, double width = 0.7);

enum class Ordering { better, equal, worse };

double state_distance(const CandidateState& s, const Distribution& target, const GroundMetricGraph& g,
                      const StateMap& map);

Ordering partial_order_cmp(const CandidateState& a, const CandidateState& b, const Distribution& target,
                           const GroundMetricGraph& g, const StateMap& map);

struct ExpansionRules {
  std::string alphabet;
  int min_length = 0;
  int max_length = 8;
  std::vector<double> step_sigmas{0.1};  // one Gaussian perturbation per entry
};

/// Ordered by key, so iteration order is canonical.
using CandidateSet = std::map<std::string, CandidateState>;

CandidateSet make_set(const std::vector<CandidateState>& states);

/// Distinct single-symbol edits of s (insert, delete, substitute), sorted.
std::vector<std::string> single_edits(const std::string& s, const ExpansionRules& rules);

/// Applies up to `budget` moves per state; the moves of a state depend only
/// on (seed, state key). Output contains the input.
CandidateSet expand_serial(const CandidateSet& frontier, const ExpansionRules& rules, int budget,
                           std::uint64_t seed);
CandidateSet expand_omp(const CandidateSet& frontier, const ExpansionRules& rules, int budget,
                        std::uint64_t seed, int workers);
CandidateSet expand(const CandidateSet& frontier, const ExpansionRules& rules, int budget, std::uint64_t seed,
                    int workers = 1);

/// Scores every candidate and keeps the `keep` smallest by (score, key).
CandidateSet shrink(const CandidateSet& candidates, const Distribution& target, const GroundMetricGraph& g,
                    const StateMap& map, int keep, int workers = 1);

struct FixpointOptions {
  int keep = 4;
  int budget = 16;
  int max_iter = 50;
  std::uint64_t seed = 0;
  int workers = 1;
  double stop_distance = 1e-12;
};

struct FixpointTraceRow {
  int iteration = 0;
  std::size_t frontier = 0;
  std::size_t expanded = 0;
  double best = 0.0;
};

struct FixpointResult {
  CandidateState best;
  double best_distance = 0.0;
  std::vector<FixpointTraceRow> trace;
  bool stabilized = false;  // frontier key set repeated
  int iterations = 0;
};

FixpointResult iterate_to_fixpoint(const CandidateState& start, const Distribution& target,
                                   const GroundMetricGraph& g, const StateMap& map, const ExpansionRules& rules,
                                   const FixpointOptions& options);

struct OracleSpace {
  std::string alphabet;
  int min_length = 0;
  int max_length = 3;
  std::vector<Vec> grid;  // continuous values; empty means no continuous part
  std::size_t limit = 200000;
};

struct OracleResult {
  CandidateState best;
  double best_distance = 0.0;
  std::size_t states = 0;
};

/// Exhaustive minimum over every state of the space (all strings of the
/// allowed lengths times every grid point); refuses spaces above `limit`.
OracleResult dp_oracle(const OracleSpace& space, const Distribution& target, const GroundMetricGraph& g,
                       const StateMap& map);

/// Uniform grid on [lo, hi] with `points` values (1-D continuous parts).
std::vector<Vec> grid_1d(double lo, double hi, int points);

void write_trace_csv(const std::filesystem::path& path, const std::vector<FixpointTraceRow>& trace);

}  // namespace actpc
