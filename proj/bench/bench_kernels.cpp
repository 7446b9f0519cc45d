// Serial reference vs OpenMP kernels.

#include <benchmark/benchmark.h>

#include "actpc/approximator.hpp"
#include "actpc/galois.hpp"
#include "actpc/kernels.hpp"

using namespace actpc;

namespace {

std::vector<Distribution> random_dists(int count, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Distribution> out;
  for (int i = 0; i < count; ++i) out.emplace_back(softmax(gaussian_vec(rng, n)));
  return out;
}

std::vector<KernelItem> operator_items(int count, int n) {
  const auto g = GroundMetricGraph::path(n);
  std::vector<KernelItem> items;
  for (const auto& d : random_dists(count, n, 3)) items.push_back(operator_item(d, g));
  return items;
}

void BM_Gram(benchmark::State& state) {
  const auto items = operator_items(64, 10);
  KernelSpec spec;
  spec.bandwidth = 5.0;
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Mat K = workers == 0 ? kernels::gram_matrix_serial(items, spec) : kernels::gram_matrix_omp(items, spec, workers);
    benchmark::DoNotOptimize(K.data());
  }
}
BENCHMARK(BM_Gram)->Arg(0)->Arg(1)->Arg(4)->Arg(8);

void BM_PairwiseW2(benchmark::State& state) {
  const auto dists = random_dists(32, 8, 5);
  const auto g = GroundMetricGraph::path(8);
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Mat D = workers == 0 ? kernels::pairwise_w2_serial(dists, g) : kernels::pairwise_w2_omp(dists, g, workers);
    benchmark::DoNotOptimize(D.data());
  }
}
BENCHMARK(BM_PairwiseW2)->Arg(0)->Arg(1)->Arg(4)->Arg(8);

void BM_Expand(benchmark::State& state) {
  ExpansionRules rules{"ab", 1, 8, {0.3, 0.1, 0.03}};
  std::vector<CandidateState> seeds;
  for (const char* s : {"a", "ab", "ba", "abb", "bab", "aaab", "abab", "bbbb"})
    seeds.push_back({s, Vec::Zero(1), {}});
  const auto frontier = make_set(seeds);
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto out = workers == 0 ? expand_serial(frontier, rules, 32, 11) : expand_omp(frontier, rules, 32, 11, workers);
    benchmark::DoNotOptimize(out.size());
  }
}
BENCHMARK(BM_Expand)->Arg(0)->Arg(1)->Arg(4)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
