#include <doctest.h>

#include <filesystem>

#include "actpc/error.hpp"
#include "actpc/hypervector.hpp"

using namespace actpc;

TEST_SUITE("hypervector") {
  TEST_CASE("binding is self-inverse and identity-neutral") {
    ConceptDictionary d(1, 8, 1024);
    const auto& a = d.atom("a");
    const auto& b = d.atom("b");
    CHECK(unbind(bind(a, b), b) == a);
    CHECK(bind(a, identity_hv(8, 1024)) == a);
    CHECK(bind(a, b).random == bind(b, a).random);
    // kPCA block rides on the left operand.
    CHECK(bind(a, b).kpca == a.kpca);
  }

  TEST_CASE("bound pairs look unrelated to their parts") {
    ConceptDictionary d(2, 8, 8192);
    const auto& a = d.atom("a");
    const auto& b = d.atom("b");
    CHECK(std::abs(similarity(bind(a, b), a)) < d.orthogonality_bound());
  }

  TEST_CASE("bundles stay similar to their members") {
    ConceptDictionary d(3, 8, 8192);
    std::vector<Hypervector> parts{d.atom("x"), d.atom("y"), d.atom("z")};
    const auto s = bundle(d, parts);
    for (const auto& p : parts) CHECK(similarity(s, p) > 0.4);
    CHECK(std::abs(similarity(s, d.atom("w"))) < 0.1);
    // Even counts fall back to the tiebreak vector: result stays bipolar.
    const auto even = bundle(d, {d.at("x"), d.at("y")});
    for (auto v : even.random) CHECK((v == 1 || v == -1));
  }

  TEST_CASE("weighted bundles average the kPCA block") {
    ConceptDictionary d(4, 2, 256);
    Vec u(2), v(2);
    u << 1.0, 0.0;
    v << 0.0, 1.0;
    const auto& a = build_two_block(u, d, "a", 2);
    const auto& b = build_two_block(v, d, "b", 2);
    const auto s = bundle(d, {a, b}, {3.0, 1.0});
    CHECK(s.kpca[0] == doctest::Approx(0.75));
    CHECK(s.kpca[1] == doctest::Approx(0.25));
  }

  TEST_CASE("permutation round trip and slot encoding") {
    ConceptDictionary d(5, 4, 2048, 4);
    const auto& a = d.atom("a");
    for (int s = 0; s < 4; ++s) CHECK(inverse_permute(d, permute(d, a, s), s) == a);
    CHECK_THROWS_AS(permute(d, a, 4), DomainError);
    d.atom("b");
    const auto enc = encode_slots(d, {{0, "a"}, {1, "b"}, {2, "a"}});
    CHECK(similarity(inverse_permute(d, enc, 1), d.at("b")) > 0.3);
    CHECK(std::abs(similarity(inverse_permute(d, enc, 3), d.at("b"))) < 0.15);
  }

  TEST_CASE("dictionary is deterministic and persists") {
    ConceptDictionary a(6, 8, 1024), b(6, 8, 1024);
    for (const char* n : {"p", "q", "r"}) {
      a.atom(n);
      b.atom(n);
    }
    CHECK(a.at("q") == b.at("q"));
    CHECK(a.names() == std::vector<std::string>{"p", "q", "r"});
    const auto path = std::filesystem::temp_directory_path() / "actpc_dict.bin";
    a.save(path);
    const auto c = ConceptDictionary::load(path);
    CHECK(c.at("r") == a.at("r"));
    CHECK(c.names() == a.names());
    CHECK(c.permutation(3) == a.permutation(3));
  }

  TEST_CASE("insert rejects duplicates, bad layouts and non-orthogonal signatures") {
    ConceptDictionary d(7, 4, 512);
    const auto& a = d.atom("a");
    CHECK_THROWS_AS(d.insert("a", a), DomainError);
    CHECK_THROWS_AS(d.insert("b", Hypervector{Vec::Zero(3), a.random}), DomainError);
    CHECK_THROWS_AS(d.insert("c", Hypervector{Vec::Zero(4), a.random}), DomainError);
    CHECK_THROWS_AS(d.at("missing"), DomainError);
  }

  TEST_CASE("two-block construction checks its width") {
    ConceptDictionary d(8, 6, 512);
    CHECK_THROWS_AS(build_two_block(Vec::Ones(3), d, "x", 5), ConfigError);
    const auto& x = build_two_block(Vec::Ones(3), d, "x", 6);
    // The extension has orthonormal columns, so norms carry over.
    CHECK(x.kpca.norm() == doctest::Approx(std::sqrt(3.0)));
    const Mat E = d.extension(3);
    CHECK((E.transpose() * E - Mat::Identity(3, 3)).norm() < 1e-12);
  }

  TEST_CASE("cleanup finds the stored atom in a noisy residual") {
    ConceptDictionary d(9, 4, 8192);
    std::vector<std::string> names;
    for (int i = 0; i < 10; ++i) names.push_back("n" + std::to_string(i)), d.atom(names.back());
    const auto noisy = bundle(d, {d.at("n3"), d.at("n3"), d.at("n7")});
    CHECK(cleanup(d, noisy, names).first == "n3");
  }

  TEST_CASE("aggregator search: multi-hop answer, determinism, worker independence") {
    ConceptDictionary d(10, 16, 8192);
    for (const char* n : {"Chinaglia", "associatedSport", "soccer", "homeCountry", "UK", "nationality", "Italy"})
      d.atom(n);
    std::vector<Hypervector> memory{encode_fact(d, "Chinaglia", {{"associatedSport", "soccer"}}),
                                    encode_fact(d, "soccer", {{"homeCountry", "UK"}}),
                                    encode_fact(d, "Chinaglia", {{"nationality", "Italy"}})};
    const auto q = bundle(d, {d.at("Chinaglia"), d.at("associatedSport"), d.at("homeCountry")});
    SearchOptions o;
    const auto r1 = aggregator_search(q, memory, d, o);
    REQUIRE_FALSE(r1.empty());
    CHECK(r1.front().answer == "UK");
    CHECK(r1.front().path.size() == 2);
    o.workers = 4;
    const auto r4 = aggregator_search(q, memory, d, o);
    REQUIRE(r4.size() == r1.size());
    for (std::size_t i = 0; i < r1.size(); ++i) {
      CHECK(r4[i].describe() == r1[i].describe());
      CHECK(r4[i].score == r1[i].score);
    }
    CHECK(aggregator_search(q, {}, d, o).empty());
    // Without hops the chain cannot complete.
    o.hops = 0;
    const auto r0 = aggregator_search(q, memory, d, o);
    REQUIRE_FALSE(r0.empty());
    CHECK(r0.front().answer != "UK");
  }
}
