#include "actpc/hypervector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "actpc/error.hpp"
#include "actpc/io.hpp"
#include "actpc/parallel.hpp"

namespace actpc {

namespace {

std::vector<std::int8_t> random_signs(Rng& rng, int n) {
  std::vector<std::int8_t> s(n);
  for (int i = 0; i < n; i += 64) {
    std::uint64_t bits = rng();
    for (int b = 0; b < 64 && i + b < n; ++b) s[i + b] = ((bits >> b) & 1U) ? 1 : -1;
  }
  return s;
}

long dot_signs(const std::vector<std::int8_t>& a, const std::vector<std::int8_t>& b) {
  long s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_same_layout(const Hypervector& a, const Hypervector& b) {
  if (a.ell() != b.ell() || a.R() != b.R()) throw DomainError("hypervectors have different block layouts");
}

}  // namespace

ConceptDictionary::ConceptDictionary(std::uint64_t seed, int ell, int R, int slots)
    : seed_(seed), ell_(ell), R_(R) {
  if (ell < 0 || R < 1 || slots < 0) throw ConfigError("invalid hypervector layout");
  Rng tie(mix_seed(seed, 0x71eb));
  tiebreak_ = random_signs(tie, R);
  for (int s = 0; s < slots; ++s) {
    Rng rng(mix_seed(seed, 0x9e70000ULL + static_cast<std::uint64_t>(s)));
    std::vector<int> p(R);
    std::iota(p.begin(), p.end(), 0);
    for (int i = R - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(p[i], p[pick(rng)]);
    }
    std::vector<int> inv(R);
    for (int i = 0; i < R; ++i) inv[p[i]] = i;
    perm_.push_back(std::move(p));
    inv_.push_back(std::move(inv));
  }
}

double ConceptDictionary::orthogonality_bound() const { return 5.0 / std::sqrt(static_cast<double>(R_)); }

std::vector<std::int8_t> ConceptDictionary::signature(const std::string& name) const {
  const double bound = orthogonality_bound() * R_;
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(mix_seed(seed_ ^ fnv1a_str(name), attempt));
    auto s = random_signs(rng, R_);
    bool ok = true;
    for (const auto& [other, hv] : entries_)
      if (other != name && std::abs(static_cast<double>(dot_signs(s, hv.random))) >= bound) {
        ok = false;
        break;
      }
    if (ok) return s;
  }
  throw DomainError("could not draw a nearly orthogonal signature for '" + name + "'");
}

const Hypervector& ConceptDictionary::atom(const std::string& name) {
  if (auto it = entries_.find(name); it != entries_.end()) return it->second;
  return insert(name, Hypervector{Vec::Zero(ell_), signature(name)});
}

const Hypervector& ConceptDictionary::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw DomainError("unknown concept '" + name + "'");
  return it->second;
}

std::vector<std::string> ConceptDictionary::names() const { return order_; }

const Hypervector& ConceptDictionary::insert(const std::string& name, Hypervector hv) {
  if (entries_.count(name)) throw DomainError("concept '" + name + "' is already registered");
  if (hv.ell() != ell_ || hv.R() != R_) throw DomainError("hypervector layout does not match the dictionary");
  const double bound = orthogonality_bound() * R_;
  for (const auto& [other, stored] : entries_)
    if (std::abs(static_cast<double>(dot_signs(hv.random, stored.random))) >= bound)
      throw DomainError("signature of '" + name + "' is not nearly orthogonal to '" + other + "'");
  order_.push_back(name);
  return entries_.emplace(name, std::move(hv)).first->second;
}

const std::vector<int>& ConceptDictionary::permutation(int slot) const {
  if (slot < 0 || slot >= slots()) throw DomainError("permutation slot out of range");
  return perm_[slot];
}

const std::vector<int>& ConceptDictionary::inverse_permutation(int slot) const {
  if (slot < 0 || slot >= slots()) throw DomainError("permutation slot out of range");
  return inv_[slot];
}

Mat ConceptDictionary::extension(int k) const {
  if (k < 1 || k > ell_) throw DomainError("extension needs 1 <= k <= ell");
  if (k == ell_) return Mat::Identity(ell_, ell_);
  Rng rng(mix_seed(seed_, 0xe7000ULL + static_cast<std::uint64_t>(k)));
  Eigen::HouseholderQR<Mat> qr(gaussian_mat(rng, ell_, k));
  return qr.householderQ() * Mat::Identity(ell_, k);
}

void ConceptDictionary::save(const std::filesystem::path& path) const {
  nlohmann::json h;
  h["format"] = "actpc-dictionary-v1";
  h["seed"] = seed_;
  h["ell"] = ell_;
  h["R"] = R_;
  h["slots"] = slots();
  h["names"] = order_;
  nlohmann::json kpca = nlohmann::json::array();
  for (const auto& n : order_) kpca.push_back(io::to_json(entries_.at(n).kpca));
  h["kpca"] = std::move(kpca);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  io::write_header(out, h);
  for (const auto& n : order_) io::write_i8(out, entries_.at(n).random);
}

ConceptDictionary ConceptDictionary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  const auto h = io::read_header(in);
  if (h.value("format", "") != "actpc-dictionary-v1") throw ConfigError("not a dictionary file");
  ConceptDictionary d(h.at("seed").get<std::uint64_t>(), h.at("ell").get<int>(), h.at("R").get<int>(),
                      h.at("slots").get<int>());
  const auto names = h.at("names").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < names.size(); ++i) {
    Hypervector hv{io::vec_from_json(h.at("kpca")[i]), io::read_i8(in, d.R_)};
    if (hv.kpca.size() == 0) hv.kpca = Vec::Zero(d.ell_);
    d.insert(names[i], std::move(hv));
  }
  return d;
}

// ---------------------------------------------------------------------------

Hypervector bind(const Hypervector& a, const Hypervector& b) {
  require_same_layout(a, b);
  Hypervector c{a.kpca, std::vector<std::int8_t>(a.random.size())};
  for (std::size_t i = 0; i < a.random.size(); ++i) c.random[i] = static_cast<std::int8_t>(a.random[i] * b.random[i]);
  return c;
}

Hypervector bundle(const ConceptDictionary& dict, const std::vector<Hypervector>& items,
                   const std::vector<double>& weights) {
  if (items.empty()) throw DomainError("cannot bundle an empty list");
  if (!weights.empty() && weights.size() != items.size())
    throw DomainError("bundle needs one weight per item");
  const auto& first = items.front();
  if (first.R() != dict.R()) throw DomainError("hypervector layout does not match the dictionary");
  Vec sum = Vec::Zero(first.R());
  Vec kpca = Vec::Zero(first.ell());
  double wsum = 0.0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    require_same_layout(first, items[k]);
    const double w = weights.empty() ? 1.0 : weights[k];
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("bundle weights must be nonnegative");
    for (int i = 0; i < first.R(); ++i) sum[i] += w * items[k].random[i];
    kpca += w * items[k].kpca;
    wsum += w;
  }
  if (!(wsum > 0.0)) throw DomainError("bundle weights sum to zero");
  Hypervector out{kpca / wsum, std::vector<std::int8_t>(first.R())};
  const auto& tie = dict.tiebreak();
  for (int i = 0; i < first.R(); ++i) out.random[i] = sum[i] > 0.0 ? 1 : (sum[i] < 0.0 ? -1 : tie[i]);
  return out;
}

Hypervector permute(const ConceptDictionary& dict, const Hypervector& h, int slot) {
  if (h.R() != dict.R()) throw DomainError("hypervector layout does not match the dictionary");
  const auto& p = dict.permutation(slot);
  Hypervector out{h.kpca, std::vector<std::int8_t>(h.random.size())};
  for (int i = 0; i < h.R(); ++i) out.random[i] = h.random[p[i]];
  return out;
}

Hypervector inverse_permute(const ConceptDictionary& dict, const Hypervector& h, int slot) {
  if (h.R() != dict.R()) throw DomainError("hypervector layout does not match the dictionary");
  const auto& inv = dict.inverse_permutation(slot);
  Hypervector out{h.kpca, std::vector<std::int8_t>(h.random.size())};
  for (int i = 0; i < h.R(); ++i) out.random[i] = h.random[inv[i]];
  return out;
}

Hypervector identity_hv(int ell, int R) { return {Vec::Zero(ell), std::vector<std::int8_t>(R, 1)}; }

double similarity(const Hypervector& a, const Hypervector& b, SimilarityMode mode) {
  require_same_layout(a, b);
  const double rb = static_cast<double>(dot_signs(a.random, b.random));
  switch (mode) {
    case SimilarityMode::random_block_cos:
      return a.R() > 0 ? rb / a.R() : 0.0;
    case SimilarityMode::full_cos: {
      const double na = std::sqrt(a.kpca.squaredNorm() + a.R());
      const double nb = std::sqrt(b.kpca.squaredNorm() + b.R());
      return (a.kpca.dot(b.kpca) + rb) / (na * nb);
    }
    case SimilarityMode::l2: {
      // |a_rb - b_rb|^2 = 2R - 2 <a_rb, b_rb> for sign vectors.
      return std::sqrt((a.kpca - b.kpca).squaredNorm() + 2.0 * a.R() - 2.0 * rb);
    }
  }
  return 0.0;
}

const Hypervector& build_two_block(const Vec& u, ConceptDictionary& dict, const std::string& name, int ell) {
  if (ell != dict.ell()) throw ConfigError("requested kPCA width differs from the dictionary layout");
  if (u.size() < 1 || u.size() > ell) throw DomainError("build_two_block needs 1 <= k <= ell");
  const Vec block = u.size() == ell ? u : Vec(dict.extension(static_cast<int>(u.size())) * u);
  if (dict.contains(name)) {
    const auto& stored = dict.at(name);
    if (stored.kpca != block) throw DomainError("concept '" + name + "' is registered with a different embedding");
    return stored;
  }
  return dict.insert(name, Hypervector{block, dict.signature(name)});
}

Hypervector encode_fact(const ConceptDictionary& dict, const std::string& entity,
                        const std::vector<std::pair<std::string, std::string>>& role_values) {
  if (role_values.empty()) throw DomainError("a fact needs at least one role/value pair");
  const auto& e = dict.at(entity);
  std::vector<Hypervector> parts;
  for (const auto& [role, value] : role_values) parts.push_back(bind(e, bind(dict.at(role), dict.at(value))));
  return bundle(dict, parts);
}

Hypervector encode_slots(const ConceptDictionary& dict, const std::vector<std::pair<int, std::string>>& fillers) {
  if (fillers.empty()) throw DomainError("no slot fillers given");
  std::vector<Hypervector> parts;
  for (const auto& [slot, name] : fillers) parts.push_back(permute(dict, dict.at(name), slot));
  return bundle(dict, parts);
}

std::pair<std::string, double> cleanup(const ConceptDictionary& dict, const Hypervector& residual,
                                       const std::vector<std::string>& atoms) {
  std::pair<std::string, double> best{"", -2.0};
  for (const auto& a : atoms) {
    const double c = similarity(residual, dict.at(a));
    if (c > best.second) best = {a, c};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Aggregator search

std::string Candidate::describe() const {
  std::ostringstream os;
  os << "m" << memory_index;
  for (const auto& seg : path) {
    os << " | m" << seg.memory_index << "[";
    for (std::size_t i = 0; i < seg.keys.size(); ++i) os << (i ? "," : "") << seg.keys[i];
    os << "]";
    if (!seg.resolved.empty()) os << "->" << seg.resolved;
  }
  return os.str();
}

namespace {

struct Node {
  std::vector<UnbindStep> segments;
  Hypervector residual;
  double score = 0.0;
  std::string key;
};

std::string node_key(const std::vector<UnbindStep>& segs) {
  std::string k;
  for (const auto& s : segs) {
    auto keys = s.keys;
    std::sort(keys.begin(), keys.end());
    k += std::to_string(s.memory_index) + "[";
    for (const auto& x : keys) k += x + ",";
    k += "]" + s.resolved + ";";
  }
  return k;
}

double path_score(const Hypervector& query, const ConceptDictionary& dict, const std::vector<UnbindStep>& segs) {
  std::set<std::string> keys;
  for (const auto& s : segs) keys.insert(s.keys.begin(), s.keys.end());
  if (keys.empty()) return -1.0;
  std::vector<Hypervector> parts;
  for (const auto& k : keys) parts.push_back(dict.at(k));
  return similarity(query, bundle(dict, parts));
}

std::vector<Candidate> search_root(int root, const Hypervector& query, const std::vector<Hypervector>& memory,
                                   const ConceptDictionary& dict, const std::vector<std::string>& atoms,
                                   const SearchOptions& opt) {
  std::vector<Candidate> out;
  const double raw = similarity(query, memory[root]);
  out.push_back({root, raw, raw, raw, "", {}});
  if (opt.depth == 0) return out;

  std::vector<Node> frontier{{{UnbindStep{root, {}, "", 0.0}}, memory[root], raw, ""}};
  std::set<std::string> seen;
  while (!frontier.empty()) {
    std::vector<Node> children;
    for (const auto& node : frontier) {
      const UnbindStep& cur = node.segments.back();
      if (!cur.resolved.empty()) {
        if (static_cast<int>(node.segments.size()) > opt.hops) continue;
        std::set<int> used;
        for (const auto& s : node.segments) used.insert(s.memory_index);
        for (int j = 0; j < static_cast<int>(memory.size()); ++j) {
          if (used.count(j)) continue;
          Node child{node.segments, bind(memory[j], dict.at(cur.resolved)), 0.0, ""};
          child.segments.push_back({j, {cur.resolved}, "", 0.0});
          children.push_back(std::move(child));
        }
      } else {
        if (static_cast<int>(cur.keys.size()) >= opt.depth) continue;
        for (const auto& a : atoms) {
          if (std::find(cur.keys.begin(), cur.keys.end(), a) != cur.keys.end()) continue;
          Node child{node.segments, bind(node.residual, dict.at(a)), 0.0, ""};
          child.segments.back().keys.push_back(a);
          children.push_back(std::move(child));
        }
      }
    }
    std::vector<Node> kept;
    for (auto& c : children) {
      UnbindStep& seg = c.segments.back();
      std::vector<std::string> targets;
      for (const auto& a : atoms)
        if (std::find(seg.keys.begin(), seg.keys.end(), a) == seg.keys.end()) targets.push_back(a);
      auto [name, cos] = cleanup(dict, c.residual, targets);
      if (cos >= opt.resolve) {
        seg.resolved = name;
        seg.cleanup = cos;
      }
      c.key = node_key(c.segments);
      if (!seen.insert(c.key).second) continue;
      // Unresolved nodes that cannot unbind further are dead ends.
      if (seg.resolved.empty() && static_cast<int>(seg.keys.size()) >= opt.depth) continue;
      c.score = path_score(query, dict, c.segments);
      kept.push_back(std::move(c));
    }
    std::sort(kept.begin(), kept.end(), [](const Node& a, const Node& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.key < b.key;
    });
    if (static_cast<int>(kept.size()) > opt.beam) kept.resize(opt.beam);
    for (const auto& n : kept) {
      if (n.segments.back().resolved.empty()) continue;
      Candidate c;
      c.memory_index = root;
      c.raw_similarity = raw;
      c.path_score = n.score;
      c.score = std::max(raw, n.score);
      c.answer = n.segments.back().resolved;
      c.path = n.segments;
      out.push_back(std::move(c));
    }
    frontier = std::move(kept);
  }
  return out;
}

}  // namespace

std::vector<Candidate> aggregator_search(const Hypervector& query, const std::vector<Hypervector>& memory,
                                         const ConceptDictionary& dict, const SearchOptions& options) {
  if (options.beam < 1 || options.depth < 0 || options.hops < 0)
    throw ConfigError("aggregator search needs beam >= 1, depth >= 0 and hops >= 0");
  if (memory.empty()) return {};
  const auto atoms = dict.names();
  std::vector<std::vector<Candidate>> per_root(memory.size());
  parallel_for(static_cast<long>(memory.size()), options.workers, [&](long r) {
    per_root[r] = search_root(static_cast<int>(r), query, memory, dict, atoms, options);
  });
  std::vector<Candidate> all;
  for (auto& v : per_root)
    for (auto& c : v) all.push_back(std::move(c));
  std::vector<std::string> keys(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) keys[i] = all[i].describe();
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (all[a].score != all[b].score) return all[a].score > all[b].score;
    if (all[a].memory_index != all[b].memory_index) return all[a].memory_index < all[b].memory_index;
    return keys[a] < keys[b];
  });
  std::vector<Candidate> sorted;
  for (auto i : idx) sorted.push_back(std::move(all[i]));
  return sorted;
}

}  // namespace actpc
