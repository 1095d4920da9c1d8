#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/version.hpp>
#include <Eigen/Core>

#include "CLI11.hpp"
#include "json.hpp"
#include "z2higgs/cluster.hpp"
#include "z2higgs/exact.hpp"
#include "z2higgs/fit.hpp"
#include "z2higgs/mc.hpp"

namespace z2higgs {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kCsvHeader = "n,beta_n,kappa,mean,stderr,sweeps,seed";

using Json = nlohmann::json;
namespace fs = std::filesystem;

enum class Mode { Exact, Expand, Mc, Scan, Fit, Compare };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Exact: return "exact";
    case Mode::Expand: return "expand";
    case Mode::Mc: return "mc";
    case Mode::Scan: return "scan";
    case Mode::Fit: return "fit";
    case Mode::Compare: return "compare";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::Exact, Mode::Expand, Mode::Mc, Mode::Scan, Mode::Fit, Mode::Compare})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown mode '" + s + "'");
}

// ---- text values ----

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

// JSON has no infinities; they are written as strings
inline Json json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

// Scalar from TOML or a command-line flag: bool, integer, real, or string.
inline Json infer_scalar(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  long long i = 0;
  auto ri = std::from_chars(s.data(), s.data() + s.size(), i);
  if (ri.ec == std::errc() && ri.ptr == s.data() + s.size() && !s.empty()) return i;
  double d = 0;
  auto rd = std::from_chars(s.data(), s.data() + s.size(), d);
  if (rd.ec == std::errc() && rd.ptr == s.data() + s.size() && !s.empty()) return d;
  return s;
}

// "a,b,c" -> list, "a..b" -> integer range, anything else -> scalar
inline Json infer_value(const std::string& s) {
  auto dots = s.find("..");
  if (dots != std::string::npos && s.find(',') == std::string::npos) {
    Json lo = infer_scalar(s.substr(0, dots)), hi = infer_scalar(s.substr(dots + 2));
    if (lo.is_number_integer() && hi.is_number_integer()) {
      Json out = Json::array();
      for (long long k = lo.get<long long>(); k <= hi.get<long long>(); ++k) out.push_back(k);
      return out;
    }
  }
  if (s.find(',') != std::string::npos && s.find(':') == std::string::npos) {
    Json out = Json::array();
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(infer_scalar(item));
    return out;
  }
  return infer_scalar(s);
}

inline void set_path(Json& j, const std::string& dotted, Json value) {
  Json* cur = &j;
  std::stringstream ss(dotted);
  std::vector<std::string> parts;
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.empty() || dotted.empty()) throw ConfigError("empty override key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    Json& next = (*cur)[parts[i]];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) throw ConfigError("override '" + dotted + "' descends into a non-table");
    cur = &next;
  }
  (*cur)[parts.back()] = std::move(value);
}

inline Json toml_to_json(std::istream& in) {
  Json out = Json::object();
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("TOML: ") + e.what());
  }
  for (const auto& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    Json v;
    if (it.inputs.size() == 1) {
      v = infer_scalar(it.inputs.front());
    } else {
      v = Json::array();
      for (const auto& s : it.inputs) v.push_back(infer_scalar(s));
    }
    set_path(out, it.fullname(), std::move(v));
  }
  return out;
}

inline Json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  if (path.extension() == ".toml") return toml_to_json(in);
  try {
    Json j = Json::parse(in);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    // a manifest carries the config it ran
    if (j.contains("config") && j.contains("config_hash")) return j.at("config");
    return j;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("JSON: ") + e.what());
  }
}

// ---- schema ----

namespace detail {

inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"model", {"box", "sizes", "beta", "kappa", "convention"}},
      {"gamma", {"n", "start", "axis", "moves"}},
      {"exact", {"budget", "threads"}},
      {"expand", {"alpha", "a", "max_norm1", "max_norm2", "max_cluster_size", "region", "max_len0", "census", "bounds",
                  "bound_k", "bound_power"}},
      {"sampling", {"sweeps", "therm", "block_len", "min_blocks", "improved", "gauge_moves", "ising_update", "streams",
                    "threads"}},
      {"schedule", {"kind", "beta", "lambda"}},
      {"scan", {"ns", "n_min", "n_max", "m", "width", "pad", "axis", "shared_chain"}},
      {"fit", {"input", "n_min", "n_max", "snr_min", "cond_max"}},
      {"compare", {"gauge", "ising", "rel_tol", "n_sigma"}},
      {"output", {"dir"}},
  };
  return s;
}

inline void check_keys(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a table");
  for (const auto& [k, v] : j.items()) {
    if (k == "mode" || k == "seed") continue;
    auto it = schema().find(k);
    if (it == schema().end()) throw ConfigError("unknown config key '" + k + "'");
    if (!v.is_object()) throw ConfigError("config key '" + k + "' must be a table");
    for (const auto& [kk, vv] : v.items())
      if (!it->second.count(kk)) throw ConfigError("unknown config key '" + k + "." + kk + "'");
  }
}

inline const Json* find(const Json& j, const std::string& sec, const std::string& key) {
  if (!j.contains(sec)) return nullptr;
  const Json& s = j.at(sec);
  return s.contains(key) ? &s.at(key) : nullptr;
}

inline std::string where(const std::string& sec, const std::string& key) { return sec + "." + key; }

inline double get_real(const Json& j, const std::string& sec, const std::string& key, double def) {
  const Json* v = find(j, sec, key);
  if (!v) return def;
  if (v->is_number()) return v->get<double>();
  if (v->is_string()) {
    std::string s = v->get<std::string>();
    if (s == "inf" || s == "infinity") return ModelParams::infinity;
  }
  throw ConfigError(where(sec, key) + " must be a number");
}

inline long get_int(const Json& j, const std::string& sec, const std::string& key, long def) {
  const Json* v = find(j, sec, key);
  if (!v) return def;
  if (!v->is_number_integer()) throw ConfigError(where(sec, key) + " must be an integer");
  return v->get<long>();
}

inline bool get_bool(const Json& j, const std::string& sec, const std::string& key, bool def) {
  const Json* v = find(j, sec, key);
  if (!v) return def;
  if (!v->is_boolean()) throw ConfigError(where(sec, key) + " must be true or false");
  return v->get<bool>();
}

inline std::string get_string(const Json& j, const std::string& sec, const std::string& key, const std::string& def) {
  const Json* v = find(j, sec, key);
  if (!v) return def;
  if (v->is_string()) return v->get<std::string>();
  if (v->is_number()) return v->dump();
  throw ConfigError(where(sec, key) + " must be a string");
}

inline std::vector<int> get_ints(const Json& j, const std::string& sec, const std::string& key) {
  const Json* v = find(j, sec, key);
  std::vector<int> out;
  if (!v) return out;
  if (v->is_number_integer()) return {v->get<int>()};
  if (!v->is_array()) throw ConfigError(where(sec, key) + " must be an integer list");
  for (const auto& x : *v) {
    if (!x.is_number_integer()) throw ConfigError(where(sec, key) + " must be an integer list");
    out.push_back(x.get<int>());
  }
  return out;
}

// "lo:hi,lo:hi" or [[lo, hi], ...]
inline BoxSpec parse_box(const Json& v) {
  std::vector<Interval> ext;
  if (v.is_string()) {
    std::stringstream ss(v.get<std::string>());
    for (std::string item; std::getline(ss, item, ',');) {
      auto c = item.find(':');
      if (c == std::string::npos) throw ConfigError("model.box: expected lo:hi, got '" + item + "'");
      Json lo = infer_scalar(item.substr(0, c)), hi = infer_scalar(item.substr(c + 1));
      if (!lo.is_number_integer() || !hi.is_number_integer()) throw ConfigError("model.box: bounds must be integers");
      ext.push_back({lo.get<int>(), hi.get<int>()});
    }
  } else if (v.is_array()) {
    for (const auto& iv : v) {
      if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number_integer() || !iv[1].is_number_integer())
        throw ConfigError("model.box: expected [lo, hi] pairs");
      ext.push_back({iv[0].get<int>(), iv[1].get<int>()});
    }
  } else {
    throw ConfigError("model.box must be a string or a list of [lo, hi]");
  }
  return BoxSpec(std::move(ext));
}

}  // namespace detail

struct GammaSpec {
  std::vector<int> ns;
  Vec start;  // empty: centred
  int axis = 0;
  std::vector<int> moves;  // +-(axis + 1) steps

  bool explicit_path() const { return !moves.empty(); }
};

struct RunConfig {
  Mode mode = Mode::Exact;
  std::uint64_t seed = 0;
  bool has_box = false;
  ModelParams model;
  bool has_schedule = false;
  BetaSchedule schedule;
  GammaSpec gamma;
  ExactOptions exact;
  ExpansionConfig expand;
  int max_len0 = 6;
  bool census = false;
  bool bounds = false;
  BoundOptions bound_opt;
  SamplingPlan plan;
  long streams = 1;
  unsigned threads = 1;
  std::vector<int> scan_ns;
  int scan_m = 2, scan_width = 8, scan_pad = 4, scan_axis = 0;
  bool shared_chain = true;
  std::string fit_input;
  FitOptions fit;
  std::string compare_gauge, compare_ising;
  double rel_tol = 0.10, n_sigma = 2.0;
  std::string output_dir;
  Json raw;  // validated source, recorded in the manifest

  // FNV-1a over the canonical dump, output location excluded
  std::string hash() const {
    Json j = raw;
    j.erase("output");
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : j.dump()) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  fs::path run_dir() const {
    if (!output_dir.empty()) return output_dir;
    return fs::path("runs") / (std::string(to_string(mode)) + "-" + hash().substr(0, 12));
  }
};

inline RunConfig parse_config(const Json& j) {
  using namespace detail;
  check_keys(j);
  RunConfig c;
  c.raw = j;
  if (!j.contains("mode") || !j.at("mode").is_string()) throw ConfigError("mode is required");
  c.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0) throw ConfigError("seed must be a nonnegative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }

  const Json* box = find(j, "model", "box");
  const Json* sizes = find(j, "model", "sizes");
  if (box && sizes) throw ConfigError("model.box and model.sizes are exclusive");
  try {
    if (box) c.model.box = parse_box(*box);
    if (sizes) c.model.box = BoxSpec::sizes(get_ints(j, "model", "sizes"));
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  c.has_box = box || sizes;
  c.model.beta = get_real(j, "model", "beta", 0.0);
  c.model.kappa = get_real(j, "model", "kappa", 0.0);
  std::string conv = get_string(j, "model", "convention", "all-oriented");
  if (conv == "all-oriented") c.model.convention = Convention::AllOriented;
  else if (conv == "positive-only") c.model.convention = Convention::PositiveOnly;
  else throw ConfigError("model.convention must be all-oriented or positive-only");

  c.gamma.ns = get_ints(j, "gamma", "n");
  c.gamma.start = get_ints(j, "gamma", "start");
  c.gamma.axis = static_cast<int>(get_int(j, "gamma", "axis", 0));
  c.gamma.moves = get_ints(j, "gamma", "moves");

  c.exact.budget = static_cast<std::size_t>(get_int(j, "exact", "budget", 26));
  c.exact.threads = static_cast<unsigned>(get_int(j, "exact", "threads", 1));

  c.expand.alpha = get_real(j, "expand", "alpha", 0.5);
  c.expand.a = get_real(j, "expand", "a", 0.5);
  c.expand.max_norm1 = static_cast<int>(get_int(j, "expand", "max_norm1", 8));
  c.expand.max_norm2 = static_cast<int>(get_int(j, "expand", "max_norm2", 4));
  c.expand.max_cluster_size = static_cast<int>(get_int(j, "expand", "max_cluster_size", 6));
  std::string region = get_string(j, "expand", "region", "all");
  if (region == "all") c.expand.region = VortexRegion::All;
  else if (region == "bulk") c.expand.region = VortexRegion::Bulk;
  else throw ConfigError("expand.region must be all or bulk");
  c.max_len0 = static_cast<int>(get_int(j, "expand", "max_len0", 6));
  c.census = get_bool(j, "expand", "census", false);
  c.bounds = get_bool(j, "expand", "bounds", false);
  c.bound_opt.K = static_cast<int>(get_int(j, "expand", "bound_k", 4));
  c.bound_opt.power = static_cast<int>(get_int(j, "expand", "bound_power", 1));
  c.bound_opt.max_len0 = c.max_len0;

  c.plan.sweeps = get_int(j, "sampling", "sweeps", 100000);
  c.plan.therm = get_int(j, "sampling", "therm", -1);
  c.plan.block_len = get_int(j, "sampling", "block_len", -1);
  c.plan.min_blocks = get_int(j, "sampling", "min_blocks", 20);
  c.plan.improved = get_bool(j, "sampling", "improved", true);
  c.plan.gauge_moves = get_bool(j, "sampling", "gauge_moves", true);
  std::string upd = get_string(j, "sampling", "ising_update", "heat-bath");
  if (upd == "heat-bath") c.plan.ising_update = SamplingPlan::IsingUpdate::HeatBath;
  else if (upd == "swendsen-wang") c.plan.ising_update = SamplingPlan::IsingUpdate::SwendsenWang;
  else throw ConfigError("sampling.ising_update must be heat-bath or swendsen-wang");
  c.streams = get_int(j, "sampling", "streams", 1);
  c.threads = static_cast<unsigned>(get_int(j, "sampling", "threads", 1));

  if (j.contains("schedule")) {
    c.has_schedule = true;
    std::string kind = get_string(j, "schedule", "kind", "fixed");
    if (kind == "fixed") c.schedule = BetaSchedule::fixed(get_real(j, "schedule", "beta", c.model.beta));
    else if (kind == "scaling") c.schedule = BetaSchedule::scaling(get_real(j, "schedule", "lambda", 1.0));
    else if (kind == "infinite") c.schedule = BetaSchedule::infinite();
    else throw ConfigError("schedule.kind must be fixed, scaling or infinite");
    if (kind == "fixed" && std::isinf(c.schedule.beta)) c.schedule = BetaSchedule::infinite();
  } else {
    c.schedule = std::isinf(c.model.beta) ? BetaSchedule::infinite() : BetaSchedule::fixed(c.model.beta);
  }

  c.scan_ns = get_ints(j, "scan", "ns");
  if (find(j, "scan", "n_min") || find(j, "scan", "n_max")) {
    if (!c.scan_ns.empty()) throw ConfigError("scan.ns and scan.n_min/n_max are exclusive");
    long lo = get_int(j, "scan", "n_min", 1), hi = get_int(j, "scan", "n_max", lo);
    for (long n = lo; n <= hi; ++n) c.scan_ns.push_back(static_cast<int>(n));
  }
  c.scan_m = static_cast<int>(get_int(j, "scan", "m", 2));
  c.scan_width = static_cast<int>(get_int(j, "scan", "width", 8));
  c.scan_pad = static_cast<int>(get_int(j, "scan", "pad", 4));
  c.scan_axis = static_cast<int>(get_int(j, "scan", "axis", 0));
  c.shared_chain = get_bool(j, "scan", "shared_chain", true);

  c.fit_input = get_string(j, "fit", "input", "");
  c.fit.n_min = get_real(j, "fit", "n_min", c.fit.n_min);
  c.fit.n_max = get_real(j, "fit", "n_max", c.fit.n_max);
  c.fit.snr_min = get_real(j, "fit", "snr_min", c.fit.snr_min);
  c.fit.cond_max = get_real(j, "fit", "cond_max", c.fit.cond_max);

  c.compare_gauge = get_string(j, "compare", "gauge", "");
  c.compare_ising = get_string(j, "compare", "ising", "");
  c.rel_tol = get_real(j, "compare", "rel_tol", 0.10);
  c.n_sigma = get_real(j, "compare", "n_sigma", 2.0);
  c.output_dir = get_string(j, "output", "dir", "");

  // mode requirements
  auto need_box = [&] {
    if (!c.has_box) throw ConfigError(std::string(to_string(c.mode)) + " needs model.box or model.sizes");
  };
  auto need_gamma = [&] {
    if (c.gamma.explicit_path() && !c.gamma.ns.empty()) throw ConfigError("gamma.n and gamma.moves are exclusive");
    if (!c.gamma.explicit_path() && c.gamma.ns.empty()) throw ConfigError("gamma.n or gamma.moves is required");
    if (c.gamma.explicit_path() && c.gamma.start.empty()) throw ConfigError("gamma.moves needs gamma.start");
  };
  try {
    switch (c.mode) {
      case Mode::Exact:
      case Mode::Expand:
        need_box();
        need_gamma();
        if (c.gamma.ns.size() > 1) throw ConfigError("gamma.n must be a single length in this mode");
        c.model.validate();
        c.expand.validate();
        if (c.max_len0 < 0) throw ConfigError("expand.max_len0 must be >= 0");
        break;
      case Mode::Mc:
        need_box();
        need_gamma();
        c.model.validate();
        c.plan.validate();
        break;
      case Mode::Scan:
        if (c.scan_ns.empty()) throw ConfigError("scan needs scan.ns or scan.n_min/n_max");
        if (!c.has_box) {
          int n_max = *std::max_element(c.scan_ns.begin(), c.scan_ns.end());
          c.model.box = strip_box(c.scan_m, n_max, c.scan_width, c.scan_pad);
          c.has_box = true;
        }
        c.model.validate();
        c.plan.validate();
        break;
      case Mode::Fit:
        if (c.fit_input.empty()) throw ConfigError("fit needs fit.input");
        break;
      case Mode::Compare:
        if (c.compare_gauge.empty() || c.compare_ising.empty()) throw ConfigError("compare needs compare.gauge and compare.ising");
        break;
    }
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
  if (c.streams < 1) throw ConfigError("sampling.streams must be >= 1");
  if (c.threads < 1) throw ConfigError("sampling.threads must be >= 1");
  return c;
}

// ---- artifacts ----

inline void write_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw ResourceError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw ResourceError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

inline Json box_json(const BoxSpec& b) {
  Json out = Json::array();
  for (const auto& iv : b.extents) out.push_back({iv.lo, iv.hi});
  return out;
}

inline Json estimate_json(const WilsonEstimate& e) {
  return {{"mean", e.mean},
          {"stderr", e.stderr_},
          {"sweeps", e.n_sweeps},
          {"therm", e.n_therm},
          {"block_len", e.block_len},
          {"blocks", e.n_blocks},
          {"tau_int", e.tau_int},
          {"stationary", e.stationary},
          {"mode", e.mode},
          {"estimator", e.estimator},
          {"seed", e.rng.seed},
          {"stream", e.rng.stream},
          {"streams", e.streams}};
}

inline Json fit_json(const FitResult& f) {
  Json cov = Json::array();
  for (int i = 0; i < 3; ++i) cov.push_back({f.covariance(i, 0), f.covariance(i, 1), f.covariance(i, 2)});
  return {{"C", f.C},
          {"c", f.c},
          {"p", f.p},
          {"covariance", cov},
          {"sigma_c", f.sigma_c()},
          {"sigma_p", f.sigma_p()},
          {"fitRange", {f.n_min, f.n_max}},
          {"residual_norm", f.residual_norm},
          {"method", f.method},
          {"condition", f.condition},
          {"points", f.points},
          {"kappa", json_number(f.kappa)},
          {"chi2", f.full.chi2},
          {"dof", f.full.dof},
          {"aic", f.full.aic},
          {"pure", {{"C", f.pure.C}, {"c", f.pure.c}, {"chi2", f.pure.chi2}, {"dof", f.pure.dof}, {"aic", f.pure.aic}}},
          {"delta_aic", f.delta_aic()},
          {"prefers_power", f.prefers_power()},
          {"warnings", f.warnings}};
}

inline FitResult fit_from_json(const Json& j) {
  try {
    FitResult f;
    f.C = j.at("C").get<double>();
    f.c = j.at("c").get<double>();
    f.p = j.at("p").get<double>();
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) f.covariance(i, k) = j.at("covariance").at(i).at(k).get<double>();
    f.n_min = j.at("fitRange").at(0).get<double>();
    f.n_max = j.at("fitRange").at(1).get<double>();
    f.residual_norm = j.at("residual_norm").get<double>();
    f.method = j.at("method").get<std::string>();
    f.condition = j.at("condition").get<double>();
    f.points = j.at("points").get<int>();
    f.kappa = j.at("kappa").is_number() ? j.at("kappa").get<double>() : std::numeric_limits<double>::quiet_NaN();
    return f;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed fit result: ") + e.what());
  }
}

inline Json load_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

struct ScanTable {
  std::vector<DecayPoint> points;
  double kappa = std::numeric_limits<double>::quiet_NaN();
};

inline ScanTable read_scan_csv(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::string line;
  std::getline(in, line);
  if (line != kCsvHeader) throw ConfigError(p.string() + ": unexpected header '" + line + "'");
  ScanTable t;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (f.size() != 7) throw ConfigError(p.string() + ": row " + std::to_string(row) + " needs 7 fields");
    try {
      double kappa = std::stod(f[2]);
      if (std::isnan(t.kappa)) t.kappa = kappa;
      else if (kappa != t.kappa) throw ConfigError(p.string() + ": mixed kappa values");
      t.points.push_back({std::stod(f[0]), std::stod(f[3]), std::stod(f[4])});
    } catch (const std::logic_error&) {
      throw ConfigError(p.string() + ": row " + std::to_string(row) + " is not numeric");
    }
  }
  return t;
}

// ---- engines ----

struct RunOutput {
  fs::path dir;
  std::vector<std::string> artifacts;
  Json summary;
};

namespace detail {

inline PathPolymer build_gamma(const CellComplex& cx, const GammaSpec& g, int n) {
  if (g.axis < 0 || g.axis >= cx.dim()) throw ConfigError("gamma.axis out of range");
  if (!g.explicit_path()) {
    Vec start = g.start;
    if (start.empty()) start = centred_line(cx.box(), g.axis, n).first;
    if (static_cast<int>(start.size()) != cx.dim()) throw ConfigError("gamma.start has the wrong dimension");
    return straight_path(cx, start, g.axis, n);
  }
  Vec x = g.start;
  if (static_cast<int>(x.size()) != cx.dim()) throw ConfigError("gamma.start has the wrong dimension");
  std::vector<Index> edges;
  for (int mv : g.moves) {
    int a = std::abs(mv) - 1;
    if (mv == 0 || a >= cx.dim()) throw ConfigError("gamma.moves entries are +-(axis+1)");
    Vec base = x;
    if (mv < 0) base[a] -= 1;
    Cell e(base, 1u << a);
    if (!cx.contains(e)) throw ConfigError("gamma leaves the box");
    edges.push_back(cx.index(e));
    x[a] += mv > 0 ? 1 : -1;
  }
  auto sorted = edges;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ConfigError("gamma repeats an edge");
  return make_path(cx, edges);
}

inline std::pair<Vec, Vec> endpoints(const CellComplex& cx, const PathPolymer& g) {
  auto ends = odd_vertices(cx, g.edges);
  if (ends.empty()) return {cx.cell(0, 0).base, cx.cell(0, 0).base};
  if (ends.size() != 2) throw ConfigError("gamma must be a single open path or closed");
  return {cx.cell(0, ends[0]).base, cx.cell(0, ends[1]).base};
}

inline Json model_json(const ModelParams& mp) {
  return {{"box", box_json(mp.box)},
          {"beta", json_number(mp.beta)},
          {"kappa", mp.kappa},
          {"convention", to_string(mp.convention)}};
}

inline RunOutput run_exact(const RunConfig& c) {
  CellComplex cx(c.model.box);
  int n = c.gamma.ns.empty() ? 0 : c.gamma.ns.front();
  auto g = build_gamma(cx, c.gamma, n);
  ExactResult r;
  if (g.empty()) {
    r.ratio = 1.0;
    r.method = "empty-path";
  } else if (c.model.beta_infinite()) {
    r = exact_Z_ratio_flat(c.model, g, c.exact);
  } else {
    r = exact_Z_ratio(c.model, g, c.exact);
  }
  Json out = {{"logZ0", json_number(r.logZ0)},
              {"logZgamma", json_number(r.logZgamma)},
              {"ratio", r.ratio},
              {"method", r.method},
              {"length", g.length()},
              {"model", model_json(c.model)}};
  return {{}, {"result.json"}, out};
}

inline RunOutput run_expand(const RunConfig& c, const fs::path& dir) {
  ClusterExpansion ce(c.model, c.expand);
  const auto& cx = ce.complex();
  int n = c.gamma.ns.empty() ? 0 : c.gamma.ns.front();
  auto gn = build_gamma(cx, c.gamma, n);
  const auto& act = ce.activities();
  auto conn = enumerate_connecting_paths(cx, gn, c.max_len0);
  long double total = 0, tail = 0;
  std::size_t clusters = 0, contributing = 0;
  double last_shell = 0, extrapolated = 0, lemma_tail = 0;
  for (const auto& g0 : conn) {
    auto r = ce.log_ratio(gn, g0);
    long double term = act.path(g0.length()) * std::exp(static_cast<long double>(r.value));
    total += term;
    tail += term * std::expm1(static_cast<long double>(r.tail.lemma_tail));
    clusters += r.clusters;
    contributing += r.contributing;
    last_shell = std::max(last_shell, r.tail.last_shell);
    extrapolated = std::max(extrapolated, r.tail.extrapolated);
    lemma_tail = std::max(lemma_tail, r.tail.lemma_tail);
  }
  Json diag = {{"connecting_paths", conn.size()},
               {"clusters", clusters},
               {"contributing", contributing},
               {"pool_paths", ce.pool().path_count()},
               {"pool_vortices", ce.pool().vortex_count()},
               {"last_shell", last_shell},
               {"extrapolated", json_number(extrapolated)},
               {"lemma_tail", json_number(lemma_tail)},
               {"t", act.t()},
               {"xi", act.xi()}};
  std::vector<std::string> files = {"result.json"};
  if (c.bounds) {
    auto rep = bound_diagnostics(c.model, c.expand, gn, c.bound_opt);
    Json checks = Json::array();
    for (const auto& b : rep.checks)
      checks.push_back({{"name", b.name}, {"lhs", json_number(b.lhs)}, {"rhs", json_number(b.rhs)}, {"pass", b.pass}});
    Json D = Json::array();
    for (double d : rep.D) D.push_back(json_number(d));
    diag["bounds"] = {{"checks", checks},
                      {"D", D},
                      {"vartheta_total", json_number(rep.vartheta_total)},
                      {"hypotheses_hold", rep.hypotheses_hold}};
  }
  if (c.census) {
    std::ostringstream os;
    std::vector<char> all(ce.pool().size(), 1);
    enumerate_clusters(ce.pool(), all, act, c.expand, [&](const ClusterView& v) { dump_cluster(os, ce.pool(), v); });
    write_atomic(dir / "census.txt", os.str());
    files.push_back("census.txt");
  }
  Json out = {{"truncatedSum", static_cast<double>(total)},
              {"tailBound", json_number(static_cast<double>(tail))},
              {"cutoffs",
               {{"max_norm1", c.expand.max_norm1},
                {"max_norm2", c.expand.max_norm2},
                {"max_cluster_size", c.expand.max_cluster_size},
                {"max_len0", c.max_len0},
                {"alpha", c.expand.alpha},
                {"a", c.expand.a}}},
              {"diagnostics", diag},
              {"length", gn.length()},
              {"model", model_json(c.model)}};
  return {{}, files, out};
}

inline RunOutput run_mc(const RunConfig& c, const fs::path& dir) {
  CellComplex cx(c.model.box);
  const int m = c.model.box.dim();
  std::vector<int> ns = c.gamma.ns;
  if (c.gamma.explicit_path()) ns = {-1};
  std::ostringstream jsonl;
  Json pooled = Json::array();
  for (std::size_t i = 0; i < ns.size(); ++i) {
    auto g = build_gamma(cx, c.gamma, ns[i]);
    const int n = g.length();
    ModelParams mp = c.model;
    mp.beta = c.schedule.at(std::max(n, 1), m);
    auto [x, y] = endpoints(cx, g);
    auto job = [&](RngSpec r) {
      if (mp.beta_infinite()) return mc_ising_correlation(mp.kappa, mp.box, x, y, c.plan, r, mp.convention);
      return mc_wilson(mp, g, c.plan, r);
    };
    RngSpec base = RngSpec{c.seed, 0}.child(i);
    auto parts = run_replicas(base, c.streams, c.threads, job);
    for (std::size_t r = 0; r < parts.size(); ++r) {
      Json rec = {{"n", n}, {"replica", r}, {"beta", json_number(mp.beta)}, {"kappa", mp.kappa}};
      rec.update(estimate_json(parts[r]));
      jsonl << rec.dump() << '\n';
    }
    auto merged = merge_streams(parts);
    merged.rng = base;
    Json rec = {{"n", n}, {"beta", json_number(mp.beta)}, {"kappa", mp.kappa}};
    rec.update(estimate_json(merged));
    pooled.push_back(rec);
  }
  write_atomic(dir / "estimates.jsonl", jsonl.str());
  Json out = {{"estimates", pooled}, {"model", model_json(c.model)}, {"schedule", to_string(c.schedule.kind)}};
  return {{}, {"estimates.jsonl", "result.json"}, out};
}

inline RunOutput run_scan(const RunConfig& c, const fs::path& dir) {
  ScanSpec spec{c.model.box, c.scan_ns, c.model.kappa, c.schedule, c.model.convention, c.scan_axis, c.streams, c.threads,
                c.shared_chain};
  auto rows = decay_scan(spec, c.plan, RngSpec{c.seed, 0});
  std::ostringstream csv, jsonl;
  csv << kCsvHeader << '\n';
  for (const auto& r : rows) {
    csv << r.n << ',' << format_double(r.beta_n) << ',' << format_double(r.kappa) << ',' << format_double(r.est.mean)
        << ',' << format_double(r.est.stderr_) << ',' << r.est.n_sweeps << ',' << c.seed << '\n';
    Json rec = {{"n", r.n}, {"beta_n", json_number(r.beta_n)}, {"kappa", r.kappa}, {"realized_lambda", r.realized_lambda}};
    rec.update(estimate_json(r.est));
    jsonl << rec.dump() << '\n';
  }
  write_atomic(dir / "scan.csv", csv.str());
  write_atomic(dir / "scan.jsonl", jsonl.str());
  Json out = {{"rows", rows.size()},
              {"model", model_json(c.model)},
              {"schedule", {{"kind", to_string(c.schedule.kind)}, {"beta", json_number(c.schedule.beta)}, {"lambda", c.schedule.lambda}}}};
  return {{}, {"scan.csv", "scan.jsonl", "result.json"}, out};
}

// a run directory or a file inside one
inline fs::path resolve_input(const std::string& s, const std::string& file) {
  fs::path p(s);
  if (fs::is_directory(p)) p /= file;
  if (!fs::exists(p)) throw ConfigError("input " + p.string() + " not found");
  return p;
}

inline Json source_json(const fs::path& p) {
  Json src = {{"path", p.string()}};
  fs::path man = p.parent_path() / "manifest.json";
  if (fs::exists(man)) {
    Json m = load_json(man);
    src["manifest"] = man.string();
    if (m.contains("config_hash")) src["config_hash"] = m.at("config_hash");
  }
  return src;
}

inline RunOutput run_fit(const RunConfig& c) {
  fs::path in = resolve_input(c.fit_input, "scan.csv");
  auto table = read_scan_csv(in);
  auto f = fit_decay(table.points, c.fit);
  f.kappa = table.kappa;
  Json out = fit_json(f);
  out["source"] = source_json(in);
  return {{}, {"fit.json"}, out};
}

inline RunOutput run_compare(const RunConfig& c) {
  fs::path g = resolve_input(c.compare_gauge, "fit.json"), i = resolve_input(c.compare_ising, "fit.json");
  auto rep = compare_c(fit_from_json(load_json(g)), fit_from_json(load_json(i)), c.rel_tol, c.n_sigma);
  Json out = {{"c_gauge", rep.c_gauge},
              {"c_ising", rep.c_ising},
              {"delta", rep.delta},
              {"sigma", rep.sigma},
              {"tolerance", rep.tolerance},
              {"pass", rep.pass},
              {"gauge", source_json(g)},
              {"ising", source_json(i)}};
  return {{}, {"compare.json"}, out};
}

}  // namespace detail

inline Json versions_json() {
  return {{"higgs", kVersion},
          {"compiler", __VERSION__},
          {"cxx", static_cast<long>(__cplusplus)},
          {"boost", BOOST_LIB_VERSION},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"cli11", CLI11_VERSION}};
}

// Dispatch, then write the mode's primary artifact and manifest.json into the run directory.
inline RunOutput run(const RunConfig& c) {
  fs::path dir = c.run_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ResourceError("cannot create " + dir.string() + ": " + ec.message());
  RunOutput out;
  std::string primary = "result.json";
  switch (c.mode) {
    case Mode::Exact: out = detail::run_exact(c); break;
    case Mode::Expand: out = detail::run_expand(c, dir); break;
    case Mode::Mc: out = detail::run_mc(c, dir); break;
    case Mode::Scan: out = detail::run_scan(c, dir); break;
    case Mode::Fit: out = detail::run_fit(c); primary = "fit.json"; break;
    case Mode::Compare: out = detail::run_compare(c); primary = "compare.json"; break;
  }
  out.dir = dir;
  write_atomic(dir / primary, json_text(out.summary));
  Json manifest = {{"tool", "higgs"},
                   {"version", kVersion},
                   {"mode", to_string(c.mode)},
                   {"config_hash", c.hash()},
                   {"config", c.raw},
                   {"seeds", {{"seed", c.seed}, {"streams", c.streams}}},
                   {"versions", versions_json()},
                   {"artifacts", out.artifacts}};
  if (out.summary.contains("source")) manifest["inputs"] = {out.summary.at("source")};
  if (c.mode == Mode::Compare) manifest["inputs"] = {out.summary.at("gauge"), out.summary.at("ising")};
  write_atomic(dir / "manifest.json", json_text(manifest));
  out.artifacts.push_back("manifest.json");
  return out;
}

// Machine-readable error record.
inline Json error_json(const std::string& kind, const std::string& message, int code) {
  return {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
}

}  // namespace z2higgs
