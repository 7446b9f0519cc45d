// Command-line driver: benchmarks, probes, the Chinaglia demo and Galois runs.
// Every command writes report.json and metrics.csv into --out and exits
// nonzero if the run recorded an invariant violation.

#include <CLI11.hpp>

#include <iostream>

#include "actpc/error.hpp"
#include "actpc/galois.hpp"
#include "actpc/harness.hpp"
#include "actpc/io.hpp"

namespace h = actpc::harness;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::string seeds = "1..20";
  std::string out = "out";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config overriding the defaults");
  app->add_option("--seed-range", c.seeds, "Inclusive seed range a..b")->capture_default_str();
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

json load_config(const std::string& path) {
  return path.empty() ? json(nullptr) : actpc::io::read_json_file(path);
}

int finish(const h::Report& r, const std::string& out) {
  h::write_report(r, out);
  if (r.command == "galois run" && r.summary.contains("traces")) {
    // Per-seed trace CSVs next to the report.
    for (auto it = r.summary["traces"].begin(); it != r.summary["traces"].end(); ++it) {
      std::vector<actpc::FixpointTraceRow> rows;
      for (const auto& t : it.value())
        rows.push_back({t[0].get<int>(), t[1].get<std::size_t>(), 0, t[2].get<double>()});
      actpc::write_trace_csv(std::filesystem::path(out) / ("trace_" + it.key() + ".csv"), rows);
    }
  }
  std::cout << r.command << ": " << r.rows.size() << " rows -> " << out << "\n";
  for (const auto& v : r.violations) std::cerr << "violation: " << v << "\n";
  return r.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"actpc experiment driver"};
  app.set_version_flag("--version", h::kVersion);
  app.require_subcommand(1);

  Common bench_c, lip_c, conv_c, scale_c, demo_c, gal_c;
  auto* bench = app.add_subcommand("bench", "Benchmarks");
  bench->require_subcommand(1);
  auto* compare = bench->add_subcommand("compare", "Euclidean vs Wasserstein natural-gradient training");
  add_common(compare, bench_c);

  auto* probe = app.add_subcommand("probe", "Geometry probes");
  probe->require_subcommand(1);
  auto* lip = probe->add_subcommand("lipschitz", "Empirical Lipschitz constant of W2 to a fixed target");
  add_common(lip, lip_c);
  auto* conv = probe->add_subcommand("convexity", "Natural-gradient descent on a location family");
  add_common(conv, conv_c);
  auto* scale = probe->add_subcommand("scale", "Internal shift vs external W2 change");
  add_common(scale, scale_c);

  auto* demo = app.add_subcommand("demo", "Demonstrations");
  demo->require_subcommand(1);
  auto* chin = demo->add_subcommand("chinaglia", "Hypervector multi-hop retrieval demo");
  add_common(chin, demo_c);

  auto* galois = app.add_subcommand("galois", "Expand/shrink fixpoint search");
  galois->require_subcommand(1);
  auto* grun = galois->add_subcommand("run", "Run a scenario file");
  std::string scenario;
  grun->add_option("scenario", scenario, "Scenario JSON")->required();
  add_common(grun, gal_c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compare) {
      return finish(h::run_bench_compare(load_config(bench_c.config), h::parse_seed_range(bench_c.seeds)),
                    bench_c.out);
    }
    if (*lip) return finish(h::probe_lipschitz(load_config(lip_c.config), h::parse_seed_range(lip_c.seeds)), lip_c.out);
    if (*conv)
      return finish(h::probe_convexity(load_config(conv_c.config), h::parse_seed_range(conv_c.seeds)), conv_c.out);
    if (*scale)
      return finish(h::probe_scale(load_config(scale_c.config), h::parse_seed_range(scale_c.seeds)), scale_c.out);
    if (*chin) return finish(h::demo_chinaglia(load_config(demo_c.config), h::parse_seed_range(demo_c.seeds)), demo_c.out);
    if (*grun) {
      json sc = actpc::io::read_json_file(scenario);
      if (!gal_c.config.empty()) sc.update(load_config(gal_c.config));
      return finish(h::galois_run(sc, h::parse_seed_range(gal_c.seeds)), gal_c.out);
    }
  } catch (const actpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
