// higgs: command-line front end for the Z2 lattice Higgs engines.
#include <iostream>
#include <new>
#include <optional>

#include "CLI11.hpp"
#include "z2higgs/run.hpp"

using namespace z2higgs;

namespace {

struct Overrides {
  std::vector<std::pair<std::string, std::string>> items;

  void flag(CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(name, [this, key](const std::string& v) { items.emplace_back(key, v); }, help);
  }
};

void add_model_flags(CLI::App* s, Overrides& ov) {
  ov.flag(s, "--box", "model.box", "box extents, lo:hi per axis, comma separated");
  ov.flag(s, "--sizes", "model.sizes", "box side lengths from the origin, comma separated");
  ov.flag(s, "--beta", "model.beta", "plaquette coupling (inf for the Ising limit)");
  ov.flag(s, "--kappa", "model.kappa", "edge coupling");
  ov.flag(s, "--convention", "model.convention", "all-oriented or positive-only");
}

void add_gamma_flags(CLI::App* s, Overrides& ov) {
  ov.flag(s, "-n,--n", "gamma.n", "line length (mc: list or a..b range)");
  ov.flag(s, "--start", "gamma.start", "start vertex, comma separated");
  ov.flag(s, "--axis", "gamma.axis", "line axis");
  ov.flag(s, "--moves", "gamma.moves", "path steps +-(axis+1), comma separated");
}

void add_sampling_flags(CLI::App* s, Overrides& ov) {
  ov.flag(s, "--sweeps", "sampling.sweeps", "measurement sweeps per replica");
  ov.flag(s, "--therm", "sampling.therm", "thermalization sweeps (-1 automatic)");
  ov.flag(s, "--blocks", "sampling.min_blocks", "minimum number of jackknife blocks");
  ov.flag(s, "--block-len", "sampling.block_len", "block length in sweeps (-1 automatic)");
  ov.flag(s, "--streams", "sampling.streams", "independent replicas");
  ov.flag(s, "--threads", "sampling.threads", "worker threads");
  ov.flag(s, "--ising-update", "sampling.ising_update", "heat-bath or swendsen-wang");
  ov.flag(s, "--schedule", "schedule.kind", "fixed, scaling or infinite");
  ov.flag(s, "--lambda", "schedule.lambda", "scaling schedule constant");
}

int fail(const std::string& kind, const std::string& msg, int code, const std::optional<fs::path>& dir) {
  Json rec = error_json(kind, msg, code);
  std::cerr << rec.dump() << '\n';
  if (dir) {
    std::error_code ec;
    fs::create_directories(*dir, ec);
    if (!ec) {
      try {
        write_atomic(*dir / "error.json", json_text(rec));
      } catch (const Error&) {
      }
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Z2 lattice Higgs model: exact sums, cluster expansion, Monte Carlo and decay fits"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  Overrides ov;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", config_path, "TOML or JSON config, or a manifest.json to rerun");
    s->add_option("--set", sets, "override, section.key=value (repeatable)");
    ov.flag(s, "--seed", "seed", "base seed");
    ov.flag(s, "-o,--out", "output.dir", "run directory");
  };

  auto* exact = app.add_subcommand("exact", "brute-force ratio Z[gamma]/Z[0]");
  common(exact);
  add_model_flags(exact, ov);
  add_gamma_flags(exact, ov);
  ov.flag(exact, "--budget", "exact.budget", "maximum number of edges to enumerate");
  ov.flag(exact, "--exact-threads", "exact.threads", "scan threads");

  auto* expand = app.add_subcommand("expand", "truncated cluster expansion of the same ratio");
  common(expand);
  add_model_flags(expand, ov);
  add_gamma_flags(expand, ov);
  ov.flag(expand, "--max-norm1", "expand.max_norm1", "path norm cutoff");
  ov.flag(expand, "--max-norm2", "expand.max_norm2", "vortex norm cutoff");
  ov.flag(expand, "--max-cluster-size", "expand.max_cluster_size", "cluster size cutoff");
  ov.flag(expand, "--max-len0", "expand.max_len0", "connecting path length cutoff");
  expand->add_flag_callback("--census", [&] { ov.items.emplace_back("expand.census", "true"); }, "dump the cluster census");
  expand->add_flag_callback("--bounds", [&] { ov.items.emplace_back("expand.bounds", "true"); }, "bound diagnostics");

  auto* mc = app.add_subcommand("mc", "Monte Carlo Wilson lines, one record per (n, replica)");
  common(mc);
  add_model_flags(mc, ov);
  add_gamma_flags(mc, ov);
  add_sampling_flags(mc, ov);

  auto* scan = app.add_subcommand("scan", "decay scan over line lengths, plot-ready CSV");
  common(scan);
  add_model_flags(scan, ov);
  add_sampling_flags(scan, ov);
  ov.flag(scan, "--ns", "scan.ns", "line lengths, list or a..b range");
  ov.flag(scan, "--width", "scan.width", "strip width");
  ov.flag(scan, "--pad", "scan.pad", "strip padding at each end");
  ov.flag(scan, "--m", "scan.m", "strip dimension");

  auto* fit = app.add_subcommand("fit", "fit C exp(-c n) / n^p to a scan");
  common(fit);
  ov.flag(fit, "--input", "fit.input", "scan run directory or scan.csv");
  ov.flag(fit, "--n-min", "fit.n_min", "smallest n in the fit window");
  ov.flag(fit, "--n-max", "fit.n_max", "largest n in the fit window");

  auto* compare = app.add_subcommand("compare", "compare fitted decay rates");
  common(compare);
  ov.flag(compare, "--gauge", "compare.gauge", "gauge fit directory or fit.json");
  ov.flag(compare, "--ising", "compare.ising", "Ising fit directory or fit.json");
  ov.flag(compare, "--rel-tol", "compare.rel_tol", "relative tolerance");

  auto* rerun = app.add_subcommand("rerun", "repeat a run from its manifest.json");
  common(rerun);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  std::optional<fs::path> dir;
  try {
    CLI::App* used = app.get_subcommands().front();
    Json j = Json::object();
    if (!config_path.empty()) j = load_config_file(config_path);
    if (used == rerun) {
      if (config_path.empty()) throw ConfigError("rerun needs --config pointing at a manifest.json");
    } else {
      if (j.contains("mode") && j.at("mode") != used->get_name())
        throw ConfigError("config mode '" + j.at("mode").dump() + "' does not match subcommand " + used->get_name());
      j["mode"] = used->get_name();
    }
    for (const auto& [k, v] : ov.items) set_path(j, k, infer_value(v));
    for (const auto& s : sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
      set_path(j, s.substr(0, eq), infer_value(s.substr(eq + 1)));
    }
    if (j.contains("output") && j["output"].is_object() && j["output"].contains("dir") && j["output"]["dir"].is_string())
      dir = fs::path(j["output"]["dir"].get<std::string>());
    RunConfig cfg = parse_config(j);
    dir = cfg.run_dir();
    auto out = run(cfg);
    Json report = {{"run_dir", out.dir.string()}, {"artifacts", out.artifacts}, {"result", out.summary}};
    std::cout << report.dump(2) << '\n';
    return 0;
  } catch (const ConfigError& e) {
    return fail("config", e.what(), static_cast<int>(ExitCode::config), dir);
  } catch (const Error& e) {
    int code = static_cast<int>(e.code());
    const char* kind = e.code() == ExitCode::resource ? "resource" : e.code() == ExitCode::numeric ? "numeric" : "config";
    return fail(kind, e.what(), code, dir);
  } catch (const std::bad_alloc&) {
    return fail("resource", "out of memory", static_cast<int>(ExitCode::resource), dir);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1, dir);
  }
}
