#include "actpc/galois.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "actpc/error.hpp"
#include "actpc/parallel.hpp"

namespace actpc {

std::string CandidateState::key() const {
  std::string k = discrete;
  k += '|';
  char buf[64];
  for (Eigen::Index i = 0; i < continuous.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%a", i ? "," : "", continuous[i]);
    k += buf;
  }
  return k;
}

void HybridMetricSpec::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || alpha + beta <= 0.0)
    throw ConfigError("hybrid metric needs alpha, beta >= 0, not both zero");
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

double euclid(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DomainError("continuous parts have different dimensions");
  return (a - b).norm();
}

}  // namespace

double hybrid_distance(const CandidateState& a, const CandidateState& b, const HybridMetricSpec& spec) {
  spec.validate();
  return spec.alpha * static_cast<double>(levenshtein(a.discrete, b.discrete)) +
         spec.beta * euclid(a.continuous, b.continuous);
}

HybridMetricSpec auto_rescale(const HybridMetricSpec& spec, const std::vector<CandidateState>& sample) {
  spec.validate();
  double md = 0.0, mc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < sample.size(); ++i)
    for (std::size_t j = i + 1; j < sample.size(); ++j) {
      md += static_cast<double>(levenshtein(sample[i].discrete, sample[j].discrete));
      mc += euclid(sample[i].continuous, sample[j].continuous);
      ++pairs;
    }
  if (pairs == 0 || md <= 0.0 || mc <= 0.0) return spec;
  md /= static_cast<double>(pairs);
  mc /= static_cast<double>(pairs);
  // alpha md = beta mc with alpha + beta fixed.
  const double total = spec.alpha + spec.beta;
  return {total * mc / (md + mc), total * md / (md + mc)};
}

GroundMetricGraph anchor_graph(const std::vector<CandidateState>& anchors, const HybridMetricSpec& spec) {
  const int n = static_cast<int>(anchors.size());
  if (n < 2) throw DomainError("anchor graph needs at least two anchors");
  Mat cost = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) cost(i, j) = cost(j, i) = hybrid_distance(anchors[i], anchors[j], spec);
  return GroundMetricGraph::from_cost(cost);
}

StateMap trigram_state_map(int nodes, int continuous_dim, std::uint64_t seed, int buckets) {
  if (nodes < 2 || continuous_dim < 0 || buckets < 1) throw ConfigError("invalid trigram map");
  Rng rng(mix_seed(seed, 0x7219));
  const Mat B = gaussian_mat(rng, nodes, buckets + continuous_dim, 1.0 / std::sqrt(static_cast<double>(buckets)));
  return [B, buckets, continuous_dim](const CandidateState& s) {
    if (s.continuous.size() != continuous_dim) throw DomainError("state has the wrong continuous dimension");
    Vec in = Vec::Zero(buckets + continuous_dim);
    const std::string padded = "^^" + s.discrete + "$$";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
      in[static_cast<Eigen::Index>(fnv1a(padded.data() + i, 3) % static_cast<std::uint64_t>(buckets))] += 1.0;
    in.tail(continuous_dim) = s.continuous;
    return Distribution(softmax(B * in));
  };
}

StateMap chain_state_map(int nodes, double width) {
  if (nodes < 2 || !(width > 0.0)) throw ConfigError("invalid chain map");
  return [nodes, width](const CandidateState& s) {
    const double pos = static_cast<double>(s.discrete.size()) - 1.0 + (s.continuous.size() ? s.continuous[0] : 0.0);
    Vec logits(nodes);
    for (int i = 0; i < nodes; ++i) logits[i] = -(i - pos) * (i - pos) / (2.0 * width * width);
    return Distribution(softmax(logits));
  };
}

double state_distance(const CandidateState& s, const Distribution& target, const GroundMetricGraph& g,
                      const StateMap& map) {
  return w2_exact(map(s), target, g).distance;
}

Ordering partial_order_cmp(const CandidateState& a, const CandidateState& b, const Distribution& target,
                           const GroundMetricGraph& g, const StateMap& map) {
  const double da = state_distance(a, target, g, map);
  const double db = state_distance(b, target, g, map);
  if (std::abs(da - db) < 1e-9) return Ordering::equal;
  return da < db ? Ordering::better : Ordering::worse;
}

CandidateSet make_set(const std::vector<CandidateState>& states) {
  CandidateSet set;
  for (const auto& s : states) set.emplace(s.key(), s);
  return set;
}

std::vector<std::string> single_edits(const std::string& s, const ExpansionRules& rules) {
  std::set<std::string> out;
  const int len = static_cast<int>(s.size());
  if (len - 1 >= rules.min_length)
    for (int i = 0; i < len; ++i) out.insert(s.substr(0, i) + s.substr(i + 1));
  for (int i = 0; i < len; ++i)
    for (char c : rules.alphabet)
      if (c != s[i]) {
        std::string t = s;
        t[i] = c;
        out.insert(t);
      }
  if (len + 1 <= rules.max_length)
    for (int i = 0; i <= len; ++i)
      for (char c : rules.alphabet) out.insert(s.substr(0, i) + c + s.substr(i));
  out.erase(s);
  return {out.begin(), out.end()};
}

namespace {

std::vector<CandidateState> moves_of(const CandidateState& s, const ExpansionRules& rules, int budget,
                                     std::uint64_t seed) {
  const std::string key = s.key();
  Rng rng(mix_seed(seed, fnv1a_str(key)));
  std::vector<CandidateState> moves;
  for (const auto& d : single_edits(s.discrete, rules)) moves.push_back({d, s.continuous, {}});
  if (s.continuous.size() > 0)
    for (double sigma : rules.step_sigmas)
      moves.push_back({s.discrete, s.continuous + gaussian_vec(rng, s.continuous.size(), sigma), {}});
  if (static_cast<int>(moves.size()) > budget) {
    std::shuffle(moves.begin(), moves.end(), rng);
    moves.resize(budget);
  }
  return moves;
}

void check_budget(int budget) {
  if (budget < 1) throw ConfigError("expansion budget must be >= 1");
}

}  // namespace

CandidateSet expand_serial(const CandidateSet& frontier, const ExpansionRules& rules, int budget,
                           std::uint64_t seed) {
  check_budget(budget);
  CandidateSet out = frontier;
  for (const auto& [key, s] : frontier)
    for (auto& m : moves_of(s, rules, budget, seed)) out.emplace(m.key(), std::move(m));
  return out;
}

CandidateSet expand_omp(const CandidateSet& frontier, const ExpansionRules& rules, int budget,
                        std::uint64_t seed, int workers) {
  check_budget(budget);
  std::vector<const CandidateState*> states;
  for (const auto& [key, s] : frontier) states.push_back(&s);
  std::vector<std::vector<CandidateState>> moves(states.size());
  parallel_for(static_cast<long>(states.size()), workers,
               [&](long i) { moves[i] = moves_of(*states[i], rules, budget, seed); });
  CandidateSet out = frontier;
  for (auto& list : moves)
    for (auto& m : list) out.emplace(m.key(), std::move(m));
  return out;
}

CandidateSet expand(const CandidateSet& frontier, const ExpansionRules& rules, int budget, std::uint64_t seed,
                    int workers) {
  return workers > 1 ? expand_omp(frontier, rules, budget, seed, workers)
                     : expand_serial(frontier, rules, budget, seed);
}

CandidateSet shrink(const CandidateSet& candidates, const Distribution& target, const GroundMetricGraph& g,
                    const StateMap& map, int keep, int workers) {
  if (keep < 1) throw ConfigError("shrink needs keep >= 1");
  std::vector<CandidateState> all;
  all.reserve(candidates.size());
  for (const auto& [key, s] : candidates) all.push_back(s);
  parallel_for(static_cast<long>(all.size()), workers,
               [&](long i) { all[i].score = state_distance(all[i], target, g, map); });
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Candidates arrive in key order, so a stable sort on score breaks ties by key.
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return *all[a].score < *all[b].score; });
  CandidateSet out;
  for (std::size_t i = 0; i < idx.size() && static_cast<int>(i) < keep; ++i) {
    auto& s = all[idx[i]];
    out.emplace(s.key(), std::move(s));
  }
  return out;
}

FixpointResult iterate_to_fixpoint(const CandidateState& start, const Distribution& target,
                                   const GroundMetricGraph& g, const StateMap& map, const ExpansionRules& rules,
                                   const FixpointOptions& opt) {
  if (opt.max_iter < 1) throw ConfigError("fixpoint needs max_iter >= 1");
  FixpointResult r;
  CandidateSet frontier = make_set({start});
  r.best = start;
  r.best_distance = state_distance(start, target, g, map);
  r.best.score = r.best_distance;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const CandidateSet expanded = expand(frontier, rules, opt.budget, mix_seed(opt.seed, it), opt.workers);
    CandidateSet next = shrink(expanded, target, g, map, opt.keep, opt.workers);
    for (const auto& [key, s] : next)
      if (*s.score < r.best_distance || (*s.score == r.best_distance && key < r.best.key())) {
        r.best = s;
        r.best_distance = *s.score;
      }
    r.trace.push_back({it, next.size(), expanded.size(), r.best_distance});
    r.iterations = it;
    bool same = next.size() == frontier.size();
    if (same)
      for (auto a = next.begin(), b = frontier.begin(); a != next.end(); ++a, ++b)
        if (a->first != b->first) {
          same = false;
          break;
        }
    frontier = std::move(next);
    if (same) {
      r.stabilized = true;
      break;
    }
    if (r.best_distance <= opt.stop_distance) break;
  }
  return r;
}

OracleResult dp_oracle(const OracleSpace& space, const Distribution& target, const GroundMetricGraph& g,
                       const StateMap& map) {
  if (space.alphabet.empty() && space.max_length > 0) throw ConfigError("oracle alphabet is empty");
  std::vector<std::string> strings;
  std::size_t count = 0;
  std::size_t per_length = 1;
  for (int len = 0; len <= space.max_length; ++len) {
    if (len >= space.min_length) count += per_length;
    per_length *= space.alphabet.size();
    if (count > space.limit) break;
  }
  const std::size_t grid = space.grid.empty() ? 1 : space.grid.size();
  if (count * grid > space.limit)
    throw DomainError("state space too large for the exhaustive oracle; lower max_length or the grid");
  std::vector<std::string> level{""};
  for (int len = 0; len <= space.max_length; ++len) {
    if (len >= space.min_length) strings.insert(strings.end(), level.begin(), level.end());
    std::vector<std::string> next;
    for (const auto& s : level)
      for (char c : space.alphabet) next.push_back(s + c);
    level = std::move(next);
  }
  OracleResult r;
  bool first = true;
  for (const auto& s : strings) {
    for (std::size_t k = 0; k < grid; ++k) {
      CandidateState st{s, space.grid.empty() ? Vec() : space.grid[k], {}};
      const double d = state_distance(st, target, g, map);
      ++r.states;
      if (first || d < r.best_distance || (d == r.best_distance && st.key() < r.best.key())) {
        r.best = st;
        r.best.score = d;
        r.best_distance = d;
        first = false;
      }
    }
  }
  if (first) throw DomainError("oracle state space is empty");
  return r;
}

std::vector<Vec> grid_1d(double lo, double hi, int points) {
  if (points < 1) throw ConfigError("grid needs at least one point");
  std::vector<Vec> g;
  for (int i = 0; i < points; ++i) {
    Vec v(1);
    v[0] = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
    g.push_back(v);
  }
  return g;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<FixpointTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "iteration,frontier_size,best_distance\n";
  out.precision(17);
  for (const auto& row : trace) out << row.iteration << ',' << row.frontier << ',' << row.best << '\n';
}

}  // namespace actpc
