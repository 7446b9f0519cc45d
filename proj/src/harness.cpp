#include "actpc/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <set>

#include "actpc/approximator.hpp"
#include "actpc/error.hpp"
#include "actpc/galois.hpp"
#include "actpc/geometry.hpp"
#include "actpc/hypervector.hpp"
#include "actpc/io.hpp"
#include "actpc/linalg.hpp"
#include "actpc/parallel.hpp"
#include "actpc/pc_net.hpp"

namespace actpc::harness {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Reports

void Report::add(const std::string& run_id, std::uint64_t seed, const std::string& variant,
                 const std::string& metric, double value) {
  rows.push_back({run_id, seed, variant, metric, value});
}

json Report::to_json() const {
  json rj = json::array();
  for (const auto& r : rows)
    rj.push_back({{"run_id", r.run_id}, {"seed", r.seed}, {"variant", r.variant}, {"metric", r.metric},
                  {"value", std::isfinite(r.value) ? json(r.value) : json(nullptr)}});
  return {{"command", command},
          {"version", kVersion},
          {"config", config},
          {"config_hash", config_hash},
          {"seeds", seeds},
          {"ok", ok()},
          {"violations", violations},
          {"summary", summary},
          {"rows", std::move(rj)}};
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_json_file(dir / "report.json", report.to_json());
  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw ConfigError("cannot write " + (dir / "metrics.csv").string());
  csv << "run_id,seed,variant,metric,value\n";
  for (const auto& r : report.rows)
    csv << r.run_id << ',' << r.seed << ',' << r.variant << ',' << r.metric << ',' << io::format_double(r.value)
        << '\n';
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  auto parse = [&](std::string_view s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      throw ConfigError("bad seed range '" + text + "' (expected a..b)");
    return v;
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) return {parse(text)};
  const std::string_view sv(text);
  const auto a = parse(sv.substr(0, dots));
  const auto b = parse(sv.substr(dots + 2));
  if (b < a) throw ConfigError("seed range '" + text + "' is empty");
  if (b - a > 100000) throw ConfigError("seed range '" + text + "' is too long");
  std::vector<std::uint64_t> out;
  for (auto s = a; s <= b; ++s) out.push_back(s);
  return out;
}

json merge_config(const json& defaults, const json& user, const std::string& where) {
  if (user.is_null()) return defaults;
  if (!user.is_object()) throw ConfigError(where + ": expected a JSON object");
  json out = defaults;
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    const auto& d = defaults.at(it.key());
    if (d.is_object() && !d.empty())
      out[it.key()] = merge_config(d, it.value(), where + "." + it.key());
    else
      out[it.key()] = it.value();
  }
  return out;
}

std::string config_hash(const json& config) {
  const auto dump = config.dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a_str(dump)));
  return buf;
}

namespace {

Report start_report(const std::string& command, const json& config, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError(command + ": no seeds given");
  Report r;
  r.command = command;
  r.config = config;
  r.config_hash = config_hash(config);
  r.seeds = seeds;
  return r;
}

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

// ---------------------------------------------------------------------------
// Summaries

double km_quantile(const std::vector<double>& times, const std::vector<bool>& censored, double q) {
  if (times.size() != censored.size()) throw ConfigError("km_quantile: size mismatch");
  std::vector<std::size_t> idx(times.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Events before censorings at equal times, the usual convention.
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (times[a] != times[b]) return times[a] < times[b];
    return !censored[a] && censored[b];
  });
  double survival = 1.0;
  std::size_t at_risk = times.size();
  std::size_t i = 0;
  while (i < idx.size()) {
    const double t = times[idx[i]];
    std::size_t events = 0, leaving = 0;
    while (i < idx.size() && times[idx[i]] == t) {
      if (!censored[idx[i]]) ++events;
      ++leaving;
      ++i;
    }
    if (events > 0) {
      survival *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
      if (survival <= 1.0 - q + 1e-12) return t;
    }
    at_risk -= leaving;
  }
  return std::numeric_limits<double>::infinity();
}

Spread quartiles(std::vector<double> v) {
  Spread s;
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  s.median = at(0.5);
  s.q25 = at(0.25);
  s.q75 = at(0.75);
  return s;
}

namespace {

json spread_json(const Spread& s) {
  return {{"median", finite_or_null(s.median)}, {"q25", finite_or_null(s.q25)}, {"q75", finite_or_null(s.q75)}};
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Benchmark: Euclidean vs Wasserstein natural-gradient PC training

json bench_defaults() {
  return {{"family", "bimodal-path-v1"},
          {"nodes", 12},
          {"hidden", 8},
          {"code_dim", 3},
          {"max_iters", 150},
          {"threshold", 0.35},
          {"eta_w", 0.02},
          {"eta_w_natural", 0.02},
          {"eta_z", 0.1},
          {"micro_iterations", 4},
          {"gain_clip", 3.0},
          {"variants", {"euclidean", "wasserstein_exact", "wasserstein_approx"}},
          {"workers", 1},
          {"approx",
           {{"items", 96},
            {"landmarks", 32},
            {"dim", 6},
            {"epochs", 60},
            {"hidden", 16},
            {"trainer", "predictive_coding"},
            {"seed", 7}}}};
}

namespace {

struct BenchContext {
  json config;
  GroundMetricGraph graph;
  // Approximator pipeline for the reconstructed-pseudoinverse variant.
  std::shared_ptr<EmbeddingBasis> basis;
  std::shared_ptr<Approximator> approx;
  std::vector<FactorTriple> codebook;
  Mat coords;
  double temperature = 1.0;
};

// Smooth random logits on the path: a few low cosine modes.
Distribution smooth_distribution(Rng& rng, int n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.5, 2.5);
  Vec logits = Vec::Zero(n);
  for (int k = 1; k <= 3; ++k) {
    const double a = nd(rng);
    for (int i = 0; i < n; ++i) logits[i] += a * std::cos(std::numbers::pi * k * i / (n - 1));
  }
  return Distribution(softmax(scale(rng) * logits));
}

std::shared_ptr<const BenchContext> make_context(const json& config, bool need_approx) {
  auto ctx = std::make_shared<BenchContext>();
  ctx->config = config;
  const int n = config.at("nodes").get<int>();
  if (n < 4) throw ConfigError("bench: nodes must be >= 4");
  ctx->graph = GroundMetricGraph::path(n);
  if (!need_approx) return ctx;

  const auto& a = config.at("approx");
  Rng rng(mix_seed(a.at("seed").get<std::uint64_t>(), 0xbe1c));
  std::vector<KernelItem> items;
  std::vector<Distribution> dists;
  const int count = a.at("items").get<int>();
  for (int i = 0; i < count; ++i) {
    dists.push_back(smooth_distribution(rng, n));
    items.push_back(operator_item(dists.back(), ctx->graph));
  }
  // Bandwidth: median pairwise distance of the flattened operators.
  std::vector<double> dd;
  for (std::size_t i = 0; i < items.size(); ++i)
    for (std::size_t j = i + 1; j < items.size(); ++j)
      dd.push_back((flatten(std::get<OperatorItem>(items[i]).factors) -
                    flatten(std::get<OperatorItem>(items[j]).factors)).norm());
  KernelSpec spec;
  spec.kind = KernelKind::flattened_rbf;
  spec.bandwidth = std::max(percentile(dd, 0.5), 1e-6);
  NystromOptions nopt;
  nopt.landmarks = a.at("landmarks").get<int>();
  nopt.dim = a.at("dim").get<int>();
  nopt.seed = a.at("seed").get<std::uint64_t>();
  nopt.compute_gram_error = false;
  ctx->basis = std::make_shared<EmbeddingBasis>(nystrom_fit(items, spec, nopt));
  ctx->codebook = landmark_codebook(*ctx->basis);
  ctx->temperature = suggest_temperature(*ctx->basis);
  ctx->coords = spectral_coordinates(ctx->graph);

  std::vector<ApproxSample> data;
  for (int i = 0; i < count; ++i)
    data.push_back({extract_features(dists[i], ctx->graph, ctx->coords),
                    ctx->basis->training_embeddings.row(i).transpose()});
  ApproximatorConfig ac;
  ac.hidden = a.at("hidden").get<int>();
  ac.epochs = a.at("epochs").get<int>();
  ac.trainer = a.at("trainer").get<std::string>() == "backprop" ? TrainerKind::backprop
                                                                : TrainerKind::predictive_coding;
  ac.seed = a.at("seed").get<std::uint64_t>();
  ctx->approx = std::make_shared<Approximator>(train_approximator(data, ac).net);
  return ctx;
}

Distribution bimodal_target(int n, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xb1));
  std::uniform_int_distribution<int> jitter(-1, 1);
  const double c1 = n / 4.0 + jitter(rng), c2 = 3.0 * n / 4.0 + jitter(rng);
  Vec w(n);
  for (int i = 0; i < n; ++i)
    w[i] = std::exp(-(i - c1) * (i - c1) / (2 * 0.8 * 0.8)) + std::exp(-(i - c2) * (i - c2) / (2 * 0.8 * 0.8));
  return Distribution::normalized(w);
}

Mat pinv_for(const BenchContext& ctx, const Distribution& p, bool approximate) {
  if (!approximate) return linalg::pinv_sym(build_laplacian(p, ctx.graph).matrix);
  DecodeOptions d;
  d.temperature = ctx.temperature;
  d.rank = ctx.graph.size() - 1;
  return predict_and_reconstruct(*ctx.approx, p, ctx.graph, *ctx.basis, ctx.codebook, d).dense();
}

BenchCurve run_curve(const BenchContext& ctx, std::uint64_t seed, const std::string& variant) {
  const json& c = ctx.config;
  const int n = ctx.graph.size();
  const int max_iters = c.at("max_iters").get<int>();
  const double threshold = c.at("threshold").get<double>();
  const bool natural = variant != "euclidean";
  if (variant != "euclidean" && variant != "wasserstein_exact" && variant != "wasserstein_approx")
    throw ConfigError("bench: unknown variant '" + variant + "'");

  const Distribution q = bimodal_target(n, seed);
  Vec z0 = (q.weights().array() + 1e-3).log().matrix();
  z0.array() -= z0.mean();

  PCConfig pc;
  pc.layers = {{n, Activation::identity}, {c.at("hidden").get<int>(), Activation::tanh},
               {c.at("code_dim").get<int>(), Activation::identity}};
  pc.eta_z = c.at("eta_z").get<double>();
  pc.eta_w = natural ? c.at("eta_w_natural").get<double>() : c.at("eta_w").get<double>();
  pc.seed = mix_seed(seed, 0xc0de);
  pc.order = UpdateOrder::settle_states_first;
  PCNetwork net(pc);
  Rng rng(mix_seed(seed, 0x70b));
  const Vec code = gaussian_vec(rng, pc.layers.back().dim);

  auto model_p = [&](const PCNetwork& m) { return Distribution(softmax(m.predict_from_top(code))); };

  BenchCurve curve;
  MicroOptions opts;
  opts.iterations = c.at("micro_iterations").get<int>();
  opts.order = UpdateOrder::settle_states_first;
  const double clip = c.at("gain_clip").get<double>();
  if (!(clip >= 1.0)) throw ConfigError("bench: gain_clip must be >= 1");
  try {
    for (int it = 1; it <= max_iters; ++it) {
      net.clamp_top(code);
      net.sweep_down();
      Preconditioner precond;
      if (natural) {
        const Distribution p = model_p(net);
        const Mat ldag = pinv_for(ctx, p, variant == "wasserstein_approx");
        for (int l = 0; l + 1 < net.num_layers(); ++l) {
          const Mat& W = net.weight(l);
          const Vec theta = Eigen::Map<const Vec>(W.data(), W.size());
          PCNetwork probe = net;
          DistributionMap map = [&, l](const Vec& t) {
            probe.weight(l) = Eigen::Map<const Mat>(t.data(), W.rows(), W.cols());
            return model_p(probe);
          };
          const Mat J = jacobian_fd(map, theta, 1e-6);
          const MetricTensor G = metric_tensor(ldag, J, 1e-8);
          // G has rank at most N - 1. On its range the step is G^-1 scaled by
          // the mean nonzero eigenvalue, with the gain clipped to [1/k, k];
          // on the null space it stays Euclidean.
          const Eigen::SelfAdjointEigenSolver<Mat> es(G.matrix);
          const Vec& ev = es.eigenvalues();
          const double top = ev.maxCoeff();
          const auto range = (ev.array() > 1e-10 * top).count();
          if (!(top > 1e-300) || range == 0) {
            precond.emplace_back();
            continue;
          }
          const double tau = (ev.array() > 1e-10 * top).select(ev.array(), 0.0).sum() / static_cast<double>(range);
          Vec gain = Vec::Ones(ev.size());
          for (Eigen::Index k = 0; k < ev.size(); ++k)
            if (ev[k] > 1e-10 * top) gain[k] = std::clamp(tau / ev[k], 1.0 / clip, clip);
          precond.push_back(es.eigenvectors() * gain.asDiagonal() * es.eigenvectors().transpose());
        }
        opts.preconditioner = &precond;
      }
      micro_iterate(net, z0, opts);
      opts.preconditioner = nullptr;
      const double w2 = w2_exact(model_p(net), q, ctx.graph).distance;
      if (!std::isfinite(w2)) throw DivergenceError("bench W2 is not finite", it, -1);
      curve.w2.push_back(w2);
      if (curve.iterations_to_threshold < 0 && w2 <= threshold) curve.iterations_to_threshold = it;
    }
  } catch (const Error& e) {
    curve.diverged = true;
    curve.error = e.what();
  }
  return curve;
}

}  // namespace

BenchCurve bench_curve(const json& config, std::uint64_t seed, const std::string& variant) {
  const json c = merge_config(bench_defaults(), config, "bench config");
  return run_curve(*make_context(c, variant == "wasserstein_approx"), seed, variant);
}

Report run_bench_compare(const json& user, const std::vector<std::uint64_t>& seeds) {
  const json c = merge_config(bench_defaults(), user, "bench config");
  Report report = start_report("bench compare", c, seeds);
  const auto variants = c.at("variants").get<std::vector<std::string>>();
  if (variants.empty()) throw ConfigError("bench: no variants");
  const bool need_approx = std::find(variants.begin(), variants.end(), "wasserstein_approx") != variants.end();
  const auto ctx = make_context(c, need_approx);
  const int workers = c.at("workers").get<int>();
  const int max_iters = c.at("max_iters").get<int>();

  // One job per (seed, variant); results land in fixed slots.
  const std::size_t jobs = seeds.size() * variants.size();
  std::vector<BenchCurve> curves(jobs);
  parallel_for(static_cast<long>(jobs), workers, [&](long j) {
    curves[j] = run_curve(*ctx, seeds[j / variants.size()], variants[j % variants.size()]);
  });

  // Self-consistency: the first seed/variant rerun must reproduce its curve.
  const BenchCurve again = run_curve(*ctx, seeds.front(), variants.front());
  const bool self_consistent = again.w2 == curves.front().w2 && again.diverged == curves.front().diverged;
  if (!self_consistent) report.violations.push_back("bench: rerun with the same seed changed the curve");

  json per_variant = json::object();
  std::map<std::string, double> km_median;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<double> times, finals;
    std::vector<bool> censored;
    int diverged = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& cv = curves[s * variants.size() + v];
      const std::string run = "bench-" + variants[v] + "-" + std::to_string(seeds[s]);
      const bool cens = cv.iterations_to_threshold < 0;
      times.push_back(cens ? static_cast<double>(cv.w2.size()) : cv.iterations_to_threshold);
      censored.push_back(cens);
      if (cv.diverged) ++diverged;
      const double final_w2 = cv.w2.empty() ? std::numeric_limits<double>::infinity() : cv.w2.back();
      finals.push_back(final_w2);
      report.add(run, seeds[s], variants[v], "iterations_to_threshold", cens ? -1.0 : cv.iterations_to_threshold);
      report.add(run, seeds[s], variants[v], "censored", cens ? 1.0 : 0.0);
      report.add(run, seeds[s], variants[v], "diverged", cv.diverged ? 1.0 : 0.0);
      report.add(run, seeds[s], variants[v], "final_w2", final_w2);
      for (std::size_t k = 0; k < cv.w2.size(); ++k)
        report.add(run, seeds[s], variants[v], "w2@" + std::to_string(k + 1), cv.w2[k]);
    }
    km_median[variants[v]] = km_quantile(times, censored, 0.5);
    per_variant[variants[v]] = {
        {"km_median_iterations", finite_or_null(km_quantile(times, censored, 0.5))},
        {"km_q25_iterations", finite_or_null(km_quantile(times, censored, 0.25))},
        {"km_q75_iterations", finite_or_null(km_quantile(times, censored, 0.75))},
        {"reached", static_cast<int>(std::count(censored.begin(), censored.end(), false))},
        {"censored", static_cast<int>(std::count(censored.begin(), censored.end(), true))},
        {"diverged", diverged},
        {"final_w2", spread_json(quartiles(finals))}};
  }
  report.summary["variants"] = per_variant;
  report.summary["self_consistent"] = self_consistent;
  report.summary["max_iters"] = max_iters;

  // The speedup question, reported either way.
  auto compare = [&](const std::string& other) {
    const auto a = std::find(variants.begin(), variants.end(), "euclidean");
    const auto b = std::find(variants.begin(), variants.end(), other);
    if (a == variants.end() || b == variants.end()) return;
    const double med = km_median["euclidean"];
    int wins = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& cv = curves[s * variants.size() + static_cast<std::size_t>(b - variants.begin())];
      if (cv.iterations_to_threshold >= 0 && cv.iterations_to_threshold <= med) ++wins;
    }
    report.summary["speedup_" + other] = {
        {"fraction_at_or_below_euclidean_median", static_cast<double>(wins) / static_cast<double>(seeds.size())},
        {"euclidean_km_median", finite_or_null(med)},
        {"variant_km_median", finite_or_null(km_median[other])}};
  };
  compare("wasserstein_exact");
  compare("wasserstein_approx");
  return report;
}

// ---------------------------------------------------------------------------
// Lipschitz and scale probes on the one-node-versus-rest softmax family

double lipschitz_bound_one_vs_rest(int nodes) {
  if (nodes < 3) throw ConfigError("lipschitz family needs at least 3 nodes");
  const double a = static_cast<double>(nodes - 1) * (nodes - 1);
  double b = 0.0;
  for (int i = 1; i < nodes; ++i) b += static_cast<double>(nodes - 1 - i) * (nodes - 1 - i);
  b /= static_cast<double>(nodes - 1);
  return std::abs(a - b) / (8.0 * std::sqrt(std::min(a, b)));
}

namespace {

Distribution one_vs_rest(int n, double theta) {
  Vec logits = Vec::Zero(n);
  logits[0] = theta;
  return Distribution(softmax(logits));
}

}  // namespace

json lipschitz_defaults() {
  return {{"family", "one-vs-rest-softmax-v1"}, {"nodes", 8}, {"pairs", 10000}, {"theta_min", -6.0},
          {"theta_max", 6.0}, {"asserted_L", nullptr}, {"scale_pairs", 500}, {"bins", 10}};
}

json scale_defaults() {
  return {{"family", "one-vs-rest-softmax-v1"}, {"nodes", 8}, {"pairs", 2000},
          {"theta_min", -6.0}, {"theta_max", 6.0}, {"bins", 10}};
}

namespace {

struct ScaleStats {
  std::vector<double> internal, external;
  int triangle_violations = 0;
};

ScaleStats scale_pairs(int n, int pairs, double lo, double hi, std::uint64_t seed) {
  const auto g = GroundMetricGraph::path(n);
  const Distribution q = Distribution::point_mass(n, n - 1);
  Rng rng(mix_seed(seed, 0x5ca1e));
  std::uniform_real_distribution<double> u(lo, hi);
  ScaleStats st;
  for (int k = 0; k < pairs; ++k) {
    const Distribution p1 = one_vs_rest(n, u(rng)), p2 = one_vs_rest(n, u(rng));
    const double delta = w2_exact(p1, p2, g).distance;
    const double ext = std::abs(w2_exact(q, p1, g).distance - w2_exact(q, p2, g).distance);
    if (ext > delta + 1e-9) ++st.triangle_violations;
    st.internal.push_back(delta);
    st.external.push_back(ext);
  }
  return st;
}

json scale_summary(const ScaleStats& st, int bins) {
  std::vector<int> hist(bins, 0);
  for (std::size_t i = 0; i < st.internal.size(); ++i) {
    if (st.internal[i] <= 1e-12) continue;
    const double r = std::clamp(st.external[i] / st.internal[i], 0.0, 1.0);
    hist[std::min(bins - 1, static_cast<int>(r * bins))]++;
  }
  return {{"correlation", pearson(st.internal, st.external)},
          {"ratio_histogram", hist},
          {"triangle_violations", st.triangle_violations}};
}

}  // namespace

Report probe_lipschitz(const json& user, const std::vector<std::uint64_t>& seeds) {
  const json c = merge_config(lipschitz_defaults(), user, "lipschitz config");
  Report report = start_report("probe lipschitz", c, seeds);
  const int n = c.at("nodes").get<int>();
  const int pairs = c.at("pairs").get<int>();
  const double lo = c.at("theta_min").get<double>(), hi = c.at("theta_max").get<double>();
  if (!(hi > lo) || pairs < 1) throw ConfigError("lipschitz config: need theta_max > theta_min and pairs >= 1");
  const double analytic = lipschitz_bound_one_vs_rest(n);
  const double L = c.at("asserted_L").is_null() ? analytic : c.at("asserted_L").get<double>();
  const auto g = GroundMetricGraph::path(n);
  const Distribution q = Distribution::point_mass(n, n - 1);

  std::vector<double> all;
  long violations = 0, skipped = 0;
  json per_seed = json::array();
  for (auto seed : seeds) {
    Rng rng(mix_seed(seed, 0x11b));
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> ratios;
    long v = 0;
    for (int k = 0; k < pairs; ++k) {
      const double t1 = u(rng), t2 = u(rng);
      if (std::abs(t1 - t2) < 1e-9) {
        ++skipped;
        continue;
      }
      const double f1 = w2_exact(q, one_vs_rest(n, t1), g).distance;
      const double f2 = w2_exact(q, one_vs_rest(n, t2), g).distance;
      const double r = std::abs(f1 - f2) / std::abs(t1 - t2);
      ratios.push_back(r);
      if (r > L * (1.0 + 1e-9)) ++v;
    }
    const std::string run = "lipschitz-" + std::to_string(seed);
    const double l98 = percentile(ratios, 0.98);
    const double maxr = ratios.empty() ? 0.0 : *std::max_element(ratios.begin(), ratios.end());
    report.add(run, seed, "softmax", "L_hat_98", l98);
    report.add(run, seed, "softmax", "max_ratio", maxr);
    report.add(run, seed, "softmax", "violation_fraction", ratios.empty() ? 0.0 : double(v) / ratios.size());
    per_seed.push_back({{"seed", seed}, {"L_hat_98", l98}, {"max_ratio", maxr}, {"violations", v}});
    violations += v;
    all.insert(all.end(), ratios.begin(), ratios.end());

    const ScaleStats st = scale_pairs(n, c.at("scale_pairs").get<int>(), lo, hi, seed);
    const json sj = scale_summary(st, c.at("bins").get<int>());
    report.add(run, seed, "scale", "correlation", sj.at("correlation").get<double>());
    if (st.triangle_violations > 0) report.violations.push_back("scale: external change exceeded internal shift");
  }
  const double frac = all.empty() ? 0.0 : static_cast<double>(violations) / static_cast<double>(all.size());
  report.summary = {{"L_bound", L},
                    {"L_analytic", analytic},
                    {"L_hat_98", percentile(all, 0.98)},
                    {"max_ratio", all.empty() ? 0.0 : *std::max_element(all.begin(), all.end())},
                    {"pairs", all.size()},
                    {"skipped_pairs", skipped},
                    {"violation_fraction", frac},
                    {"fraction_below_L_hat_98",
                     all.empty() ? 1.0
                                 : static_cast<double>(std::count_if(all.begin(), all.end(),
                                                                     [&](double r) { return r <= percentile(all, 0.98); })) /
                                       static_cast<double>(all.size())},
                    {"per_seed", per_seed}};
  if (violations > 0) report.violations.push_back("lipschitz: ratio exceeded the bound");
  return report;
}

Report probe_scale(const json& user, const std::vector<std::uint64_t>& seeds) {
  const json c = merge_config(scale_defaults(), user, "scale config");
  Report report = start_report("probe scale", c, seeds);
  const int n = c.at("nodes").get<int>();
  ScaleStats all;
  for (auto seed : seeds) {
    const ScaleStats st = scale_pairs(n, c.at("pairs").get<int>(), c.at("theta_min").get<double>(),
                                      c.at("theta_max").get<double>(), seed);
    const std::string run = "scale-" + std::to_string(seed);
    report.add(run, seed, "softmax", "correlation", pearson(st.internal, st.external));
    report.add(run, seed, "softmax", "triangle_violations", st.triangle_violations);
    all.internal.insert(all.internal.end(), st.internal.begin(), st.internal.end());
    all.external.insert(all.external.end(), st.external.begin(), st.external.end());
    all.triangle_violations += st.triangle_violations;
  }
  report.summary = scale_summary(all, c.at("bins").get<int>());
  if (all.triangle_violations > 0) report.violations.push_back("scale: external change exceeded internal shift");
  return report;
}

// ---------------------------------------------------------------------------
// Convexity probe: location family on a path

json convexity_defaults() {
  return {{"family", "gaussian-location-path-v1"},
          {"nodes", 16},
          {"width", 1.5},
          {"starts", 50},
          {"tol", 1e-3},
          {"grid_step", 1e-3},
          {"max_steps", 300},
          {"eta", 1.0},
          {"max_step", 1.0},
          {"damping", 1e-8},
          {"bumps", {0.01, 0.05}},
          {"bump_frequency", 3.0},
          {"bump_starts", 20}};
}

namespace {

struct LocationFamily {
  int n;
  double width;
  GroundMetricGraph g;
  Distribution at(double mu) const {
    Vec logits(n);
    for (int i = 0; i < n; ++i) logits[i] = -(i - mu) * (i - mu) / (2.0 * width * width);
    return Distribution(softmax(logits));
  }
};

struct DescentResult {
  double mu = 0.0;
  int accepted = 0;
  bool monotone = true;
};

// Natural-gradient descent on F with backtracking; only strict decreases are accepted.
template <class Objective>
DescentResult descend(const LocationFamily& fam, const Objective& F, double mu, const json& c) {
  DescentResult r{mu, 0, true};
  double f = F(mu);
  const double h = 1e-7;
  for (int step = 0; step < c.at("max_steps").get<int>() && f > 1e-16; ++step) {
    const double grad = (F(r.mu + h) - F(r.mu - h)) / (2.0 * h);
    if (grad == 0.0) break;
    DistributionMap map = [&](const Vec& t) { return fam.at(t[0]); };
    Vec theta(1);
    theta[0] = r.mu;
    const Mat J = jacobian_fd(map, theta, 1e-6);
    const Mat ldag = linalg::pinv_sym(build_laplacian(fam.at(r.mu), fam.g).matrix);
    const MetricTensor G = metric_tensor(ldag, J, c.at("damping").get<double>());
    double eta = c.at("eta").get<double>();
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, eta *= 0.5) {
      Vec g1(1);
      g1[0] = grad;
      // Trust region in parameter space: where the family saturates the
      // metric vanishes and the raw step leaves the support entirely.
      const double max_step = c.at("max_step").get<double>();
      const double cand =
          r.mu + std::clamp(natural_gradient_step(theta, g1, G, eta)[0] - r.mu, -max_step, max_step);
      const double fc = F(cand);
      if (fc < f) {
        if (!(F(cand) < F(r.mu))) r.monotone = false;  // fresh recomputation
        r.mu = cand;
        f = fc;
        ++r.accepted;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return r;
}

}  // namespace

Report probe_convexity(const json& user, const std::vector<std::uint64_t>& seeds) {
  const json c = merge_config(convexity_defaults(), user, "convexity config");
  Report report = start_report("probe convexity", c, seeds);
  const int n = c.at("nodes").get<int>();
  const double tol = c.at("tol").get<double>();
  const double step = c.at("grid_step").get<double>();
  LocationFamily fam{n, c.at("width").get<double>(), GroundMetricGraph::path(n)};

  int total = 0, reached = 0, monotone_runs = 0;
  json bump_summary = json::object();
  std::map<double, std::pair<int, int>> bump_counts;
  for (auto seed : seeds) {
    Rng rng(mix_seed(seed, 0xc0ec));
    const long grid_points = static_cast<long>(std::floor((n - 1) / step)) + 1;
    // Optimum placed on a grid point in the middle half of the path.
    std::uniform_int_distribution<long> pick(grid_points / 4, 3 * grid_points / 4);
    const double mu_star = static_cast<double>(pick(rng)) * step;
    const Distribution q = fam.at(mu_star);
    auto F = [&](double mu) { return w2_exact(fam.at(mu), q, fam.g).plan.cost_value; };

    double grid_best = 0.0, grid_val = std::numeric_limits<double>::infinity();
    for (long k = 0; k < grid_points; ++k) {
      const double mu = static_cast<double>(k) * step;
      const double v = F(mu);
      if (v < grid_val) {
        grid_val = v;
        grid_best = mu;
      }
    }
    std::uniform_real_distribution<double> start(0.5, n - 1.5);
    for (int s = 0; s < c.at("starts").get<int>(); ++s) {
      const double mu0 = start(rng);
      const DescentResult d = descend(fam, F, mu0, c);
      const bool ok = std::abs(d.mu - grid_best) <= tol;
      ++total;
      reached += ok;
      monotone_runs += d.monotone;
      const std::string run = "convexity-" + std::to_string(seed) + "-" + std::to_string(s);
      report.add(run, seed, "unimodal", "start", mu0);
      report.add(run, seed, "unimodal", "final_mu", d.mu);
      report.add(run, seed, "unimodal", "gap_to_grid_optimum", std::abs(d.mu - grid_best));
      report.add(run, seed, "unimodal", "w2_gap", std::sqrt(std::max(F(d.mu), 0.0)) - std::sqrt(grid_val));
      report.add(run, seed, "unimodal", "accepted_steps", d.accepted);
      report.add(run, seed, "unimodal", "monotone", d.monotone ? 1.0 : 0.0);
      report.add(run, seed, "unimodal", "reached", ok ? 1.0 : 0.0);
    }
    // Bumpy variant: same optimum, small periodic pockets.
    for (double eps : c.at("bumps").get<std::vector<double>>()) {
      const double freq = c.at("bump_frequency").get<double>();
      auto Fb = [&](double mu) {
        const double s = std::sin(std::numbers::pi * freq * (mu - mu_star));
        return F(mu) + eps * s * s;
      };
      for (int s = 0; s < c.at("bump_starts").get<int>(); ++s) {
        const double mu0 = start(rng);
        const DescentResult d = descend(fam, Fb, mu0, c);
        const bool escaped = std::abs(d.mu - mu_star) <= 0.05;
        auto& cnt = bump_counts[eps];
        cnt.first += escaped;
        cnt.second += 1;
        report.add("convexity-bump-" + std::to_string(seed) + "-" + std::to_string(s), seed,
                   "bumps_" + io::format_double(eps), "escaped", escaped ? 1.0 : 0.0);
        if (!d.monotone) report.violations.push_back("convexity: accepted step did not decrease W2");
      }
    }
  }
  for (const auto& [eps, cnt] : bump_counts)
    bump_summary[io::format_double(eps)] = static_cast<double>(cnt.first) / static_cast<double>(cnt.second);
  report.summary = {{"starts", total},
                    {"reached_fraction", total ? static_cast<double>(reached) / total : 0.0},
                    {"monotone_fraction", total ? static_cast<double>(monotone_runs) / total : 1.0},
                    {"tol", tol},
                    {"bump_escape_rate", bump_summary}};
  if (monotone_runs != total) report.violations.push_back("convexity: accepted step did not decrease W2");
  return report;
}

// ---------------------------------------------------------------------------
// Chinaglia demo

json chinaglia_defaults() {
  return {{"R", 8192},
          {"ell", 64},
          {"beam", 4},
          {"depth", 2},
          {"hops", 1},
          {"workers", 1},
          {"required_rate", 0.9},
          {"expect", "UK"},
          {"expect_fact", nullptr},
          {"query", {"Chinaglia", "associatedSport", "homeCountry"}},
          {"facts",
           json::array({{{"entity", "Chinaglia"}, {"pairs", json::array({json::array({"associatedSport", "soccer"})})}},
            {{"entity", "soccer"}, {"pairs", json::array({json::array({"homeCountry", "UK"})})}},
            {{"entity", "Chinaglia"}, {"pairs", json::array({json::array({"nationality", "Italy"})})}}})}};
}

Report demo_chinaglia(const json& scenario, const std::vector<std::uint64_t>& seeds) {
  json user = scenario;
  const json c = merge_config(chinaglia_defaults(), user, "chinaglia scenario");
  if (!c.at("facts").is_array() || !c.at("query").is_array()) throw ConfigError("chinaglia scenario: facts and query must be arrays");
  Report report = start_report("demo chinaglia", c, seeds);
  // Success is judged on the answer symbol, or on the retrieved fact when
  // expect_fact (a memory index) is given.
  const std::string expect = c.at("expect").is_null() ? std::string() : c.at("expect").get<std::string>();
  const int expect_fact = c.at("expect_fact").is_null() ? -1 : c.at("expect_fact").get<int>();
  SearchOptions opt;
  opt.beam = c.at("beam").get<int>();
  opt.depth = c.at("depth").get<int>();
  opt.hops = c.at("hops").get<int>();
  opt.workers = c.at("workers").get<int>();

  int successes = 0;
  json rankings = json::array();
  for (auto seed : seeds) {
    ConceptDictionary dict(seed, c.at("ell").get<int>(), c.at("R").get<int>());
    std::vector<Hypervector> memory;
    for (const auto& f : c.at("facts")) {
      io::require_known_keys(f, {"entity", "pairs"}, "chinaglia fact");
      const auto entity = f.at("entity").get<std::string>();
      dict.atom(entity);
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& p : f.at("pairs")) {
        const auto rv = p.get<std::vector<std::string>>();
        if (rv.size() != 2) throw ConfigError("chinaglia fact: pairs must be [role, value]");
        dict.atom(rv[0]);
        dict.atom(rv[1]);
        pairs.emplace_back(rv[0], rv[1]);
      }
      memory.push_back(encode_fact(dict, entity, pairs));
    }
    std::vector<Hypervector> qparts;
    for (const auto& name : c.at("query").get<std::vector<std::string>>()) qparts.push_back(dict.atom(name));
    if (qparts.empty()) throw ConfigError("chinaglia scenario: empty query");
    const Hypervector query = bundle(dict, qparts);
    const auto ranked = aggregator_search(query, memory, dict, opt);
    const bool ok = !ranked.empty() && (expect_fact >= 0 ? ranked.front().memory_index == expect_fact
                                                          : ranked.front().answer == expect);
    if (ranked.empty()) report.violations.push_back("chinaglia: empty ranking for seed " + std::to_string(seed));
    successes += ok;
    const std::string run = "chinaglia-" + std::to_string(seed);
    report.add(run, seed, "aggregator", "expected_first", ok ? 1.0 : 0.0);
    report.add(run, seed, "aggregator", "candidates", static_cast<double>(ranked.size()));
    if (!ranked.empty()) report.add(run, seed, "aggregator", "top_score", ranked.front().score);
    json list = json::array();
    for (std::size_t i = 0; i < ranked.size() && i < 8; ++i)
      list.push_back({{"answer", ranked[i].answer}, {"score", ranked[i].score}, {"trace", ranked[i].describe()}});
    rankings.push_back({{"seed", seed}, {"ranking", list}});
  }
  const double rate = static_cast<double>(successes) / static_cast<double>(seeds.size());
  report.summary = {{"expected", expect_fact >= 0 ? json(expect_fact) : json(expect)}, {"successes", successes}, {"runs", seeds.size()}, {"rate", rate},
                    {"rankings", rankings}};
  if (rate < c.at("required_rate").get<double>())
    report.violations.push_back("chinaglia: expected answer ranked first in too few seeds");
  return report;
}

// ---------------------------------------------------------------------------
// Galois scenario runs

json galois_defaults() {
  return {{"family", "chain-v1"},
          {"alphabet", "a"},
          {"min_length", 1},
          {"max_length", 5},
          {"step_sigmas", {0.3, 0.1, 0.03, 0.01, 0.003}},
          {"map", "chain"},
          {"nodes", 5},
          {"width", 0.7},
          {"trigram_buckets", 16},
          {"map_seed", 0},
          {"graph", "path"},
          {"anchors", json::array()},
          {"metric", {{"alpha", 1.0}, {"beta", 1.0}, {"auto_rescale", false}}},
          {"start", {{"discrete", "a"}, {"continuous", {0.0}}}},
          {"target_state", nullptr},
          {"target", nullptr},
          {"keep", 4},
          {"budget", 16},
          {"max_iter", 60},
          {"workers", 1},
          {"check_workers", json::array()},
          {"epsilon", 0.05},
          {"oracle", {{"enabled", true}, {"grid_lo", -0.5}, {"grid_hi", 0.5}, {"grid_points", 201}}}};
}

namespace {

CandidateState state_from_json(const json& j) {
  io::require_known_keys(j, {"discrete", "continuous"}, "galois state");
  CandidateState s;
  s.discrete = j.value("discrete", "");
  if (j.contains("continuous")) s.continuous = io::vec_from_json(j.at("continuous"));
  return s;
}

}  // namespace

Report galois_run(const json& scenario, const std::vector<std::uint64_t>& seeds) {
  const json c = merge_config(galois_defaults(), scenario, "galois scenario");
  Report report = start_report("galois run", c, seeds);

  ExpansionRules rules;
  rules.alphabet = c.at("alphabet").get<std::string>();
  rules.min_length = c.at("min_length").get<int>();
  rules.max_length = c.at("max_length").get<int>();
  rules.step_sigmas = c.at("step_sigmas").get<std::vector<double>>();
  const CandidateState start = state_from_json(c.at("start"));

  GroundMetricGraph g;
  int nodes = c.at("nodes").get<int>();
  if (c.at("graph").is_string() && c.at("graph") == "path") {
    g = GroundMetricGraph::path(nodes);
  } else if (c.at("graph").is_string() && c.at("graph") == "anchors") {
    std::vector<CandidateState> anchors;
    for (const auto& a : c.at("anchors")) anchors.push_back(state_from_json(a));
    const auto& m = c.at("metric");
    HybridMetricSpec spec{m.at("alpha").get<double>(), m.at("beta").get<double>()};
    if (m.at("auto_rescale").get<bool>()) spec = auto_rescale(spec, anchors);
    g = anchor_graph(anchors, spec);
    nodes = g.size();
    report.summary["metric"] = {{"alpha", spec.alpha}, {"beta", spec.beta}};
  } else {
    throw ConfigError("galois scenario: graph must be \"path\" or \"anchors\"");
  }

  StateMap map;
  const auto map_kind = c.at("map").get<std::string>();
  if (map_kind == "chain") {
    if (c.at("graph") != "path") throw ConfigError("galois scenario: the chain map needs the path graph");
    map = chain_state_map(nodes, c.at("width").get<double>());
  } else if (map_kind == "trigram") {
    map = trigram_state_map(nodes, static_cast<int>(start.continuous.size()), c.at("map_seed").get<std::uint64_t>(),
                            c.at("trigram_buckets").get<int>());
  } else {
    throw ConfigError("galois scenario: map must be \"chain\" or \"trigram\"");
  }

  FixpointOptions fo;
  fo.keep = c.at("keep").get<int>();
  fo.budget = c.at("budget").get<int>();
  fo.max_iter = c.at("max_iter").get<int>();
  fo.workers = c.at("workers").get<int>();
  const double eps = c.at("epsilon").get<double>();
  const auto& oc = c.at("oracle");

  int within = 0, monotone = 0;
  std::vector<double> gaps;
  json traces = json::object();
  for (auto seed : seeds) {
    Distribution target = Distribution::uniform(nodes);
    if (!c.at("target").is_null()) {
      target = distribution_from_json(c.at("target"));
    } else if (!c.at("target_state").is_null()) {
      target = map(state_from_json(c.at("target_state")));
    } else {
      // Random reachable target from the chain family.
      Rng rng(mix_seed(seed, 0x7a9));
      std::uniform_int_distribution<int> len(std::max(rules.min_length, 1), rules.max_length);
      std::uniform_real_distribution<double> cont(oc.at("grid_lo").get<double>(), oc.at("grid_hi").get<double>());
      CandidateState t{std::string(static_cast<std::size_t>(len(rng)), rules.alphabet.empty() ? 'a' : rules.alphabet[0]),
                       Vec::Constant(start.continuous.size(), 0.0), {}};
      for (Eigen::Index i = 0; i < t.continuous.size(); ++i) t.continuous[i] = cont(rng);
      target = map(t);
    }
    fo.seed = seed;
    const FixpointResult r = iterate_to_fixpoint(start, target, g, map, rules, fo);
    bool mono = true;
    for (std::size_t k = 1; k < r.trace.size(); ++k)
      if (r.trace[k].best > r.trace[k - 1].best) mono = false;
    monotone += mono;
    if (!mono) report.violations.push_back("galois: best-distance trace increased");

    const std::string run = "galois-" + std::to_string(seed);
    report.add(run, seed, "fixpoint", "best_distance", r.best_distance);
    report.add(run, seed, "fixpoint", "iterations", r.iterations);
    report.add(run, seed, "fixpoint", "stabilized", r.stabilized ? 1.0 : 0.0);
    report.add(run, seed, "fixpoint", "monotone", mono ? 1.0 : 0.0);
    for (const auto& row : r.trace)
      report.add(run, seed, "fixpoint", "best@" + std::to_string(row.iteration), row.best);
    json tj = json::array();
    for (const auto& row : r.trace) tj.push_back({row.iteration, row.frontier, row.best});
    traces[std::to_string(seed)] = tj;

    if (oc.at("enabled").get<bool>()) {
      OracleSpace space;
      space.alphabet = rules.alphabet;
      space.min_length = rules.min_length;
      space.max_length = rules.max_length;
      if (start.continuous.size() == 1)
        space.grid = grid_1d(oc.at("grid_lo").get<double>(), oc.at("grid_hi").get<double>(),
                             oc.at("grid_points").get<int>());
      else if (start.continuous.size() > 1)
        throw ConfigError("galois scenario: the oracle grid supports one continuous dimension");
      const OracleResult o = dp_oracle(space, target, g, map);
      const double gap = r.best_distance - o.best_distance;
      gaps.push_back(gap);
      within += gap <= eps;
      report.add(run, seed, "oracle", "oracle_distance", o.best_distance);
      report.add(run, seed, "oracle", "gap", gap);
      report.add(run, seed, "oracle", "within_epsilon", gap <= eps ? 1.0 : 0.0);
    }

    for (int w : c.at("check_workers").get<std::vector<int>>()) {
      FixpointOptions fw = fo;
      fw.workers = w;
      const FixpointResult rw = iterate_to_fixpoint(start, target, g, map, rules, fw);
      bool same = rw.best.key() == r.best.key() && rw.trace.size() == r.trace.size();
      for (std::size_t k = 0; same && k < r.trace.size(); ++k)
        same = rw.trace[k].best == r.trace[k].best && rw.trace[k].frontier == r.trace[k].frontier;
      if (!same) report.violations.push_back("galois: result changed with " + std::to_string(w) + " workers");
    }
  }
  report.summary["runs"] = seeds.size();
  report.summary["monotone_fraction"] = static_cast<double>(monotone) / static_cast<double>(seeds.size());
  if (!gaps.empty()) {
    report.summary["epsilon"] = eps;
    report.summary["within_epsilon_rate"] = static_cast<double>(within) / static_cast<double>(seeds.size());
    report.summary["empirical_epsilon_at_95"] = percentile(gaps, 0.95);
  }
  report.summary["traces"] = traces;
  return report;
}

}  // namespace actpc::harness
