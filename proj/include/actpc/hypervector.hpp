#pragma once

// Two-block hypervectors [kPCA block | random sign block] with MCR-style
// binding, bundling and permutation, a seeded concept dictionary and the
// aggregator's partial-unbinding beam search.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "actpc/types.hpp"

namespace actpc {

struct Hypervector {
  Vec kpca;                         // length ell
  std::vector<std::int8_t> random;  // length R, entries +-1

  int ell() const { return static_cast<int>(kpca.size()); }
  int R() const { return static_cast<int>(random.size()); }
  bool operator==(const Hypervector& o) const { return kpca == o.kpca && random == o.random; }
};

/// Name -> hypervector store with deterministic random signatures, a bundle
/// tiebreak vector and per-slot permutation tables.
class ConceptDictionary {
 public:
  explicit ConceptDictionary(std::uint64_t seed, int ell = 64, int R = 8192, int slots = 16);

  std::uint64_t seed() const { return seed_; }
  int ell() const { return ell_; }
  int R() const { return R_; }
  double orthogonality_bound() const;  // 5 / sqrt(R)

  /// Registers `name` with a zero kPCA block if it is new; returns the stored vector.
  const Hypervector& atom(const std::string& name);
  /// Throws DomainError if `name` is not registered.
  const Hypervector& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::vector<std::string> names() const;  // insertion order
  std::size_t size() const { return order_.size(); }

  /// Stores a fully built vector under a fresh name.
  const Hypervector& insert(const std::string& name, Hypervector hv);

  /// Signature of `name`: seeded by the name, redrawn until it is nearly
  /// orthogonal to every stored signature.
  std::vector<std::int8_t> signature(const std::string& name) const;

  const std::vector<std::int8_t>& tiebreak() const { return tiebreak_; }
  int slots() const { return static_cast<int>(perm_.size()); }
  const std::vector<int>& permutation(int slot) const;
  const std::vector<int>& inverse_permutation(int slot) const;

  /// Orthonormal ell x k extension map (identity when k == ell).
  Mat extension(int k) const;

  void save(const std::filesystem::path& path) const;
  static ConceptDictionary load(const std::filesystem::path& path);

 private:
  std::uint64_t seed_;
  int ell_, R_;
  std::map<std::string, Hypervector> entries_;
  std::vector<std::string> order_;
  std::vector<std::int8_t> tiebreak_;
  std::vector<std::vector<int>> perm_, inv_;
};

Hypervector bind(const Hypervector& a, const Hypervector& b);
/// Bind is an involution on the sign block, so unbinding is binding.
inline Hypervector unbind(const Hypervector& a, const Hypervector& b) { return bind(a, b); }

/// Sign of the (weighted) sum of random blocks with the dictionary tiebreak;
/// weighted mean of kPCA blocks.
Hypervector bundle(const ConceptDictionary& dict, const std::vector<Hypervector>& items,
                   const std::vector<double>& weights = {});

Hypervector permute(const ConceptDictionary& dict, const Hypervector& h, int slot);
Hypervector inverse_permute(const ConceptDictionary& dict, const Hypervector& h, int slot);

/// All-(+1) sign block, zero kPCA block: the identity for bind.
Hypervector identity_hv(int ell, int R);

enum class SimilarityMode { random_block_cos, full_cos, l2 };

/// random_block_cos and full_cos are cosines; l2 is the Euclidean distance.
double similarity(const Hypervector& a, const Hypervector& b,
                  SimilarityMode mode = SimilarityMode::random_block_cos);

/// Two-block vector for `name`: kPCA block = extension(k) * u, random block =
/// the name's signature. Re-registering with the same u returns the stored vector.
const Hypervector& build_two_block(const Vec& u, ConceptDictionary& dict, const std::string& name, int ell);

/// Bundle over bind(entity, bind(role, value)).
Hypervector encode_fact(const ConceptDictionary& dict, const std::string& entity,
                        const std::vector<std::pair<std::string, std::string>>& role_values);

/// Bundle over permute(filler, slot): fillers placed in core-ontology slots.
Hypervector encode_slots(const ConceptDictionary& dict, const std::vector<std::pair<int, std::string>>& fillers);

struct SearchOptions {
  int beam = 4;
  int depth = 2;          // max keys unbound from one memory item before it must resolve
  int hops = 1;           // times a resolved atom may re-enter another memory item
  double resolve = 0.5;   // cleanup cosine needed to call a residual an atom
  int workers = 1;
};

struct UnbindStep {
  int memory_index = -1;  // memory item the segment unbinds
  std::vector<std::string> keys;
  std::string resolved;   // atom the segment's residual cleaned up to
  double cleanup = 0.0;
};

struct Candidate {
  int memory_index = -1;  // root memory item
  double score = 0.0;
  double raw_similarity = 0.0;
  double path_score = 0.0;
  std::string answer;     // atom the last segment resolved to, empty at depth 0
  std::vector<UnbindStep> path;

  std::string describe() const;
};

/// Beam search over partial unbindings. Level 0 scores every memory item by
/// raw similarity. Deeper nodes unbind dictionary atoms from a memory item
/// until the residual resolves to an atom, which may then be unbound from
/// another memory item. A path scores cos(query, bundle(keys used)); a
/// candidate scores max(raw similarity of its root, path score). Results are
/// sorted by score, then root index, then path, so worker count cannot
/// change them.
std::vector<Candidate> aggregator_search(const Hypervector& query, const std::vector<Hypervector>& memory,
                                         const ConceptDictionary& dict, const SearchOptions& options = {});

/// Best-matching dictionary atom for a residual (by random-block cosine).
std::pair<std::string, double> cleanup(const ConceptDictionary& dict, const Hypervector& residual,
                                       const std::vector<std::string>& atoms);

}  // namespace actpc
