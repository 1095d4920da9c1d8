#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <random>
#include <string>
#include <vector>

#include <boost/pending/disjoint_sets.hpp>

#include "z2higgs/exact.hpp"
#include "z2higgs/lattice.hpp"
#include "z2higgs/polymers.hpp"

namespace z2higgs {

struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  // independent sub-stream for job k of a scan
  RngSpec child(std::uint64_t k) const { return {seed, stream + ((k + 1) << 32)}; }
};

inline std::mt19937_64 make_engine(const RngSpec& r) {
  std::seed_seq seq{static_cast<std::uint32_t>(r.seed), static_cast<std::uint32_t>(r.seed >> 32),
                    static_cast<std::uint32_t>(r.stream), static_cast<std::uint32_t>(r.stream >> 32)};
  return std::mt19937_64(seq);
}

// 53-bit uniform in [0, 1), identical on every platform
inline double uniform01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

struct SamplingPlan {
  long sweeps = 100000;  // measurement sweeps
  long therm = -1;       // -1: max(1000, 20 tau) after a 1000-sweep pilot
  long block_len = -1;   // -1: ceil(5 tau)
  long min_blocks = 20;
  bool improved = true;  // conditional-mean estimator when the observable sites are conditionally independent
  bool gauge_moves = true;  // gauge model: also heat-bath the flip of all edges at each vertex
  enum class IsingUpdate { HeatBath, SwendsenWang };
  IsingUpdate ising_update = IsingUpdate::HeatBath;

  void validate() const {
    if (sweeps <= 0) throw PreconditionError("sweeps must be positive");
    if (therm != -1 && therm <= 0) throw PreconditionError("therm must be positive (or -1 for automatic)");
    if (block_len != -1 && block_len <= 0) throw PreconditionError("block_len must be positive (or -1 for automatic)");
    if (min_blocks < 2) throw PreconditionError("min_blocks must be >= 2");
  }
};

// Binary variables x with weight exp(-sum_c w_c parity(x|c)); cell parities are tracked incrementally.
class ParityModel {
 public:
  ParityModel(std::size_t n, std::vector<std::vector<Index>> cells, std::vector<double> weights)
      : x_(n, 0), cells_(std::move(cells)), w_(std::move(weights)), parity_(cells_.size(), 0), of_var_(n) {
    if (w_.size() != cells_.size()) throw PreconditionError("one weight per cell");
    for (std::size_t c = 0; c < cells_.size(); ++c) {
      if (!std::isfinite(w_[c])) throw NumericError("non-finite cell weight");
      for (Index v : cells_[c]) {
        if (v >= n) throw DimensionError("cell variable out of range");
        of_var_[v].push_back(static_cast<Index>(c));
      }
    }
    for (double w : w_)
      if (std::find(levels_.begin(), levels_.end(), w) == levels_.end()) levels_.push_back(w);
    cls_.resize(w_.size());
    for (std::size_t c = 0; c < w_.size(); ++c)
      cls_[c] = static_cast<int>(std::find(levels_.begin(), levels_.end(), w_[c]) - levels_.begin());
    for (const auto& cs : of_var_) reach_ = std::max(reach_, cs.size());
    var_off_.push_back(0);
    for (const auto& cs : of_var_) {
      var_cells_.insert(var_cells_.end(), cs.begin(), cs.end());
      var_off_.push_back(static_cast<Index>(var_cells_.size()));
    }
    build_table();
  }

  std::size_t size() const { return x_.size(); }
  const std::vector<std::uint8_t>& state() const { return x_; }
  const std::vector<std::vector<Index>>& cells() const { return cells_; }
  const std::vector<Index>& cells_of(Index v) const { return of_var_[v]; }

  void set_state(const std::vector<std::uint8_t>& x) {
    if (x.size() != x_.size()) throw DimensionError("state size mismatch");
    x_ = x;
    for (std::size_t c = 0; c < cells_.size(); ++c) {
      std::uint8_t p = 0;
      for (Index v : cells_[c]) p ^= x_[v];
      parity_[c] = p;
    }
  }

  // E(x_v = 1) - E(x_v = 0) given the rest
  double delta(Index v) const {
    double d = 0;
    for (Index c : of_var_[v]) d += w_[c] * (1 - 2 * (parity_[c] ^ x_[v]));
    return d;
  }
  double p1(Index v) const {
    if (table_.empty()) return 1.0 / (1.0 + std::exp(delta(v)));
    std::ptrdiff_t key = static_cast<std::ptrdiff_t>(offset_);
    const std::uint8_t xv = x_[v];
    for (Index i = var_off_[v]; i < var_off_[v + 1]; ++i) {
      Index c = var_cells_[i];
      key += (parity_[c] ^ xv) ? -cell_stride_[c] : cell_stride_[c];
    }
    return table_[static_cast<std::size_t>(key)];
  }
  // E[(-1)^{x_v} | rest]
  double conditional_sign(Index v) const { return 1.0 - 2.0 * p1(v); }

  double energy() const {
    double e = 0;
    for (std::size_t c = 0; c < cells_.size(); ++c) e += w_[c] * parity_[c];
    return e;
  }

  void update(Index v, double u) {
    std::uint8_t nv = u < p1(v) ? 1 : 0;
    if (nv != x_[v]) {
      x_[v] = nv;
      for (Index i = var_off_[v]; i < var_off_[v + 1]; ++i) parity_[var_cells_[i]] ^= 1;
    }
  }
  // Joint flip of a variable set, heat-bathed as a two-point law; only cells with odd overlap change.
  void add_move(const std::vector<Index>& vars) {
    std::vector<int> overlap(cells_.size(), 0);
    for (Index v : vars) {
      if (v >= x_.size()) throw DimensionError("move variable out of range");
      for (Index c : of_var_[v]) overlap[c] ^= 1;
    }
    Move mv{vars, {}};
    for (std::size_t c = 0; c < cells_.size(); ++c)
      if (overlap[c]) mv.cells.push_back(static_cast<Index>(c));
    if (mv.cells.size() > reach_) {
      reach_ = mv.cells.size();
      build_table();
    }
    moves_.push_back(std::move(mv));
  }
  std::size_t moves() const { return moves_.size(); }
  double move_delta(std::size_t k) const {
    double d = 0;
    for (Index c : moves_[k].cells) d += w_[c] * (1 - 2 * parity_[c]);
    return d;
  }
  double move_p(std::size_t k) const {
    if (table_.empty()) return 1.0 / (1.0 + std::exp(move_delta(k)));
    std::ptrdiff_t key = static_cast<std::ptrdiff_t>(offset_);
    for (Index c : moves_[k].cells) key += parity_[c] ? -cell_stride_[c] : cell_stride_[c];
    return table_[static_cast<std::size_t>(key)];
  }
  void apply_move(std::size_t k, double u) {
    if (u < move_p(k)) {
      for (Index v : moves_[k].vars) x_[v] ^= 1;
      for (Index c : moves_[k].cells) parity_[c] ^= 1;
    }
  }

  void sweep(std::mt19937_64& g) {
    for (Index v = 0; v < x_.size(); ++v) update(v, uniform01(g));
    for (std::size_t k = 0; k < moves_.size(); ++k) apply_move(k, uniform01(g));
  }

  // no two sites share a cell
  bool independent(const std::vector<Index>& sites) const {
    std::vector<char> mark(cells_.size(), 0);
    for (Index v : sites)
      for (Index c : of_var_[v]) {
        if (mark[c]) return false;
        mark[c] = 1;
      }
    return true;
  }
  double sign(const std::vector<Index>& sites) const {
    int p = 0;
    for (Index v : sites) p ^= x_[v];
    return p ? -1.0 : 1.0;
  }
  double conditional_product(const std::vector<Index>& sites) const {
    double r = 1;
    for (Index v : sites) r *= conditional_sign(v);
    return r;
  }

 private:
  std::vector<std::uint8_t> x_;
  std::vector<std::vector<Index>> cells_;
  std::vector<double> w_;
  std::vector<std::uint8_t> parity_;
  std::vector<std::vector<Index>> of_var_;
  struct Move {
    std::vector<Index> vars;
    std::vector<Index> cells;
  };
  std::vector<Move> moves_;
  // flip probabilities 1 / (1 + e^delta) indexed by the signed cell count of each weight level
  std::vector<double> levels_;
  std::vector<int> cls_;
  std::size_t reach_ = 0;
  std::vector<std::size_t> stride_;
  std::vector<std::ptrdiff_t> cell_stride_;
  std::size_t offset_ = 0;
  std::vector<double> table_;
  std::vector<Index> var_off_, var_cells_;

  void build_table() {
    table_.clear();
    if (levels_.empty() || levels_.size() > 3) return;
    const std::size_t base = 2 * reach_ + 1;
    stride_.assign(levels_.size(), 1);
    for (std::size_t k = 1; k < levels_.size(); ++k) stride_[k] = stride_[k - 1] * base;
    offset_ = 0;
    for (auto st : stride_) offset_ += st * reach_;
    cell_stride_.resize(cls_.size());
    for (std::size_t c = 0; c < cls_.size(); ++c) cell_stride_[c] = static_cast<std::ptrdiff_t>(stride_[cls_[c]]);
    table_.resize(stride_.back() * base);
    for (std::size_t key = 0; key < table_.size(); ++key) {
      double d = 0;
      std::size_t r = key;
      for (std::size_t k = 0; k < levels_.size(); ++k, r /= base)
        d += levels_[k] * (static_cast<double>(r % base) - static_cast<double>(reach_));
      table_[key] = 1.0 / (1.0 + std::exp(d));
    }
  }
};

// variables = positive edges; a cell per plaquette (weight 2B) and per edge (weight 2K)
inline ParityModel gauge_model(const CellComplex& cx, double K, double B) {
  std::vector<std::vector<Index>> cells;
  std::vector<double> w;
  for (Index p = 0; p < cx.plaquettes(); ++p) {
    std::vector<Index> es;
    for (const auto& f : cx.faces(2, p)) es.push_back(f.cell);
    cells.push_back(std::move(es));
    w.push_back(2 * B);
  }
  if (K != 0)
    for (Index e = 0; e < cx.edges(); ++e) {
      cells.push_back({e});
      w.push_back(2 * K);
    }
  return ParityModel(cx.edges(), std::move(cells), std::move(w));
}

inline void add_gauge_moves(ParityModel& model, const CellComplex& cx) {
  for (Index v = 0; v < cx.vertices(); ++v) {
    std::vector<Index> es;
    for (const auto& f : cx.cofaces(0, v)) es.push_back(f.cell);
    model.add_move(es);
  }
}

// variables = vertices; a cell per edge (weight 2K)
inline ParityModel ising_model(const CellComplex& cx, double K) {
  std::vector<std::vector<Index>> cells;
  std::vector<double> w;
  for (Index e = 0; e < cx.edges(); ++e) {
    cells.push_back({cx.edge_tail(e), cx.edge_head(e)});
    w.push_back(2 * K);
  }
  return ParityModel(cx.vertices(), std::move(cells), std::move(w));
}

// Integrated autocorrelation time with automatic windowing (smallest W with W >= c tau(W)).
inline double integrated_autocorrelation(const std::vector<double>& x, double c = 6.0) {
  const std::size_t n = x.size();
  if (n < 2) return 0.5;
  long double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  long double c0 = 0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  c0 /= n;
  if (c0 <= 0) return 0.5;
  double tau = 0.5;
  const std::size_t wmax = n / 4;
  for (std::size_t t = 1; t <= wmax; ++t) {
    long double ct = 0;
    for (std::size_t i = 0; i + t < n; ++i) ct += (x[i] - mean) * (x[i + t] - mean);
    ct /= n;
    tau += static_cast<double>(ct / c0);
    if (static_cast<double>(t) >= c * tau) break;
  }
  return std::max(tau, 0.5);
}

struct JackknifeResult {
  double value = 0.0;
  double stderr_ = 0.0;
};

// Delete-one jackknife of f over block means.
template <class F>
JackknifeResult jackknife(const std::vector<double>& blocks, F f) {
  const std::size_t b = blocks.size();
  if (b < 2) throw PreconditionError("jackknife needs at least 2 blocks");
  long double total = 0;
  for (double v : blocks) total += v;
  JackknifeResult r;
  r.value = f(static_cast<double>(total / b));
  std::vector<double> loo(b);
  long double mean = 0;
  for (std::size_t i = 0; i < b; ++i) {
    loo[i] = f(static_cast<double>((total - blocks[i]) / (b - 1)));
    mean += loo[i];
  }
  mean /= b;
  long double s = 0;
  for (double v : loo) s += (v - mean) * (v - mean);
  r.stderr_ = static_cast<double>(std::sqrt(s * (b - 1) / b));
  return r;
}

inline JackknifeResult jackknife_mean(const std::vector<double>& blocks) {
  return jackknife(blocks, [](double m) { return m; });
}

inline std::vector<double> block_means(const std::vector<double>& x, std::size_t len) {
  std::vector<double> out;
  for (std::size_t i = 0; i + len <= x.size(); i += len) {
    long double s = 0;
    for (std::size_t j = i; j < i + len; ++j) s += x[j];
    out.push_back(static_cast<double>(s / len));
  }
  return out;
}

// First and last thirds of the block means agree within k combined standard errors.
inline bool stationary(const std::vector<double>& blocks, double k = 4.0) {
  const std::size_t third = blocks.size() / 3;
  if (third < 2) return true;
  std::vector<double> a(blocks.begin(), blocks.begin() + third), b(blocks.end() - third, blocks.end());
  auto ja = jackknife_mean(a), jb = jackknife_mean(b);
  double s = std::hypot(ja.stderr_, jb.stderr_);
  return std::fabs(ja.value - jb.value) <= k * s || s == 0.0;
}

struct WilsonEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  long n_sweeps = 0;
  long n_therm = 0;
  long block_len = 0;
  long n_blocks = 0;
  double tau_int = 0.0;
  bool stationary = true;
  std::string mode;       // "finite-beta" or "ising-inf"
  std::string estimator;  // "raw", "conditional" or "exact"
  ModelParams params;
  RngSpec rng;
  long streams = 1;
};

namespace detail {

// Local heat-bath chain over a parity model; observables are sign products over site sets.
struct LocalChain {
  ParityModel& model;
  std::vector<std::vector<Index>> obs;
  std::vector<char> cond;

  LocalChain(ParityModel& m, std::vector<std::vector<Index>> o, bool improved) : model(m), obs(std::move(o)) {
    for (const auto& x : obs) cond.push_back(improved && model.independent(x));
  }
  std::size_t size() const { return obs.size(); }
  void sweep(std::mt19937_64& g) { model.sweep(g); }
  double measure(std::size_t i) const { return cond[i] ? model.conditional_product(obs[i]) : model.sign(obs[i]); }
  const char* tag(std::size_t i) const { return cond[i] ? "conditional" : "raw"; }
};

// Swendsen-Wang for the Ising weight exp(-2K #unsatisfied edges); the improved estimator of
// s_x s_y is the indicator that x and y share a bond cluster.
class SwendsenWangChain {
 public:
  SwendsenWangChain(const CellComplex& cx, double K, std::vector<std::pair<Index, Index>> pairs, bool improved)
      : n_(cx.vertices()), spin_(n_, 0), rank_(n_), parent_(n_), label_(n_), pairs_(std::move(pairs)),
        improved_(improved), p_bond_(1.0 - std::exp(-2.0 * K)) {
    for (Index e = 0; e < cx.edges(); ++e) edges_.push_back({cx.edge_tail(e), cx.edge_head(e)});
    if (!std::isfinite(p_bond_)) throw NumericError("non-finite bond probability");
  }
  std::size_t size() const { return pairs_.size(); }
  const std::vector<std::uint8_t>& state() const { return spin_; }

  void sweep(std::mt19937_64& g) {
    boost::disjoint_sets<std::size_t*, std::size_t*> ds(rank_.data(), parent_.data());
    for (std::size_t v = 0; v < n_; ++v) ds.make_set(v);
    for (const auto& [u, v] : edges_)
      if (spin_[u] == spin_[v] && uniform01(g) < p_bond_) ds.union_set(u, v);
    std::fill(label_.begin(), label_.end(), 2);
    for (std::size_t v = 0; v < n_; ++v) {
      std::size_t r = ds.find_set(v);
      if (label_[r] == 2) label_[r] = uniform01(g) < 0.5 ? 1 : 0;
    }
    connected_.assign(pairs_.size(), 0);
    for (std::size_t i = 0; i < pairs_.size(); ++i)
      connected_[i] = ds.find_set(pairs_[i].first) == ds.find_set(pairs_[i].second);
    for (std::size_t v = 0; v < n_; ++v) spin_[v] = label_[ds.find_set(v)];
  }
  double measure(std::size_t i) const {
    if (improved_) return connected_[i] ? 1.0 : 0.0;
    return spin_[pairs_[i].first] == spin_[pairs_[i].second] ? 1.0 : -1.0;
  }
  const char* tag(std::size_t) const { return improved_ ? "cluster" : "raw"; }

 private:
  std::size_t n_;
  std::vector<std::uint8_t> spin_;
  std::vector<std::size_t> rank_, parent_;
  std::vector<std::uint8_t> label_;
  std::vector<std::pair<Index, Index>> edges_;
  std::vector<std::pair<Index, Index>> pairs_;
  std::vector<char> connected_;
  bool improved_;
  double p_bond_;
};

// One chain, several observables; series are pre-binned to at most 2^20 entries each.
template <class Chain>
std::vector<WilsonEstimate> run_chains(Chain& chain, const SamplingPlan& plan, const RngSpec& rng) {
  const std::size_t k = chain.size();
  if (k == 0) throw PreconditionError("no observables");
  auto g = make_engine(rng);
  auto measure = [&](std::size_t i) { return chain.measure(i); };
  auto sweep = [&] { chain.sweep(g); };
  long therm = plan.therm;
  if (therm < 0) {
    const long pilot = 1000;
    std::vector<std::vector<double>> series(k);
    for (long s = 0; s < pilot; ++s) {
      sweep();
      for (std::size_t i = 0; i < k; ++i) series[i].push_back(measure(i));
    }
    double tau = 0.5;
    for (const auto& x : series) tau = std::max(tau, integrated_autocorrelation(x));
    therm = std::max<long>(pilot, static_cast<long>(std::ceil(20 * tau)));
    for (long s = pilot; s < therm; ++s) sweep();
  } else {
    for (long s = 0; s < therm; ++s) sweep();
  }
  const long max_series = 1L << 20;
  const long bin = std::max<long>(1, (plan.sweeps + max_series - 1) / max_series);
  std::vector<std::vector<double>> series(k);
  for (auto& x : series) x.reserve(static_cast<std::size_t>(plan.sweeps / bin));
  std::vector<long double> acc(k, 0);
  for (long s = 0; s < plan.sweeps; ++s) {
    sweep();
    for (std::size_t i = 0; i < k; ++i) {
      double v = measure(i);
      if (!std::isfinite(v)) throw NumericError("non-finite observable");
      acc[i] += v;
    }
    if ((s + 1) % bin == 0)
      for (std::size_t i = 0; i < k; ++i) {
        series[i].push_back(static_cast<double>(acc[i] / bin));
        acc[i] = 0;
      }
  }
  std::vector<double> tau(k);
  double tau_max = 0.5;
  for (std::size_t i = 0; i < k; ++i) {
    tau[i] = bin * integrated_autocorrelation(series[i]);
    tau_max = std::max(tau_max, tau[i]);
  }
  long len = plan.block_len > 0 ? plan.block_len : std::max<long>(1, static_cast<long>(std::ceil(5 * tau_max)));
  const long len_bins = (len + bin - 1) / bin;
  len = len_bins * bin;
  const long nb = static_cast<long>(series[0].size()) / len_bins;
  if (nb < plan.min_blocks)
    throw ResourceError("only " + std::to_string(nb) + " blocks of length " + std::to_string(len) +
                        "; raise sweeps or lower block_len");
  std::vector<WilsonEstimate> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto& est = out[i];
    auto blocks = block_means(series[i], static_cast<std::size_t>(len_bins));
    auto jk = jackknife_mean(blocks);
    est.estimator = chain.tag(i);
    est.rng = rng;
    est.mean = jk.value;
    est.stderr_ = jk.stderr_;
    est.tau_int = tau[i];
    est.n_sweeps = plan.sweeps;
    est.n_therm = therm;
    est.block_len = len;
    est.n_blocks = nb;
    est.stationary = stationary(blocks);
  }
  return out;
}

inline WilsonEstimate run_chain(ParityModel& model, const std::vector<Index>& sites, const SamplingPlan& plan,
                                const RngSpec& rng) {
  LocalChain chain(model, {sites}, plan.improved);
  return run_chains(chain, plan, rng).front();
}

}  // namespace detail

// Single-edge heat-bath for the gauge model, observable rho(sigma(gamma_n)).
inline WilsonEstimate mc_wilson(const ModelParams& mp, const PathPolymer& gn, const SamplingPlan& plan, const RngSpec& rng) {
  mp.validate();
  plan.validate();
  if (mp.beta_infinite()) throw PreconditionError("mc_wilson needs finite beta; use mc_ising_correlation");
  CellComplex cx(mp.box);
  for (Index e : gn.edges)
    if (e >= cx.edges()) throw DimensionError("path edge outside the box");
  WilsonEstimate est;
  if (gn.empty()) {
    est.mean = 1.0;
    est.estimator = "exact";
    est.rng = rng;
  } else {
    auto model = gauge_model(cx, mp.edge_coupling(), mp.plaquette_coupling());
    if (plan.gauge_moves) add_gauge_moves(model, cx);
    est = detail::run_chain(model, gn.edges, plan, rng);
  }
  est.mode = "finite-beta";
  est.params = mp;
  return est;
}

// Vertex heat-bath for the Ising model with the edge coupling of the convention.
// Several spin pairs measured on one chain; a pair with x = y gives exactly 1.
inline std::vector<WilsonEstimate> mc_ising_correlations(double kappa, const BoxSpec& box,
                                                         const std::vector<std::pair<Vec, Vec>>& pairs,
                                                         const SamplingPlan& plan, const RngSpec& rng,
                                                         Convention conv = Convention::AllOriented) {
  ModelParams mp{box, ModelParams::infinity, kappa, conv};
  mp.validate();
  plan.validate();
  if (pairs.empty()) throw PreconditionError("no spin pairs");
  CellComplex cx(box);
  std::vector<std::pair<Index, Index>> ids;
  for (const auto& [x, y] : pairs) {
    if (!box.contains(x) || !box.contains(y)) throw DimensionError("vertex outside box");
    ids.push_back({cx.vertex_index(x), cx.vertex_index(y)});
  }
  std::vector<WilsonEstimate> out;
  if (plan.ising_update == SamplingPlan::IsingUpdate::SwendsenWang) {
    detail::SwendsenWangChain chain(cx, mp.edge_coupling(), ids, plan.improved);
    out = detail::run_chains(chain, plan, rng);
  } else {
    auto model = ising_model(cx, mp.edge_coupling());
    std::vector<std::vector<Index>> obs;
    for (const auto& [a, b] : ids) obs.push_back({a, b});
    detail::LocalChain chain(model, obs, plan.improved);
    out = detail::run_chains(chain, plan, rng);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (ids[i].first == ids[i].second) {
      out[i].mean = 1.0;
      out[i].stderr_ = 0.0;
      out[i].estimator = "exact";
    }
    out[i].mode = "ising-inf";
    out[i].params = mp;
  }
  return out;
}

// Spin-spin correlation of x and y, by vertex heat-bath (or Swendsen-Wang when the plan asks for it).
inline WilsonEstimate mc_ising_correlation(double kappa, const BoxSpec& box, const Vec& x, const Vec& y,
                                           const SamplingPlan& plan, const RngSpec& rng,
                                           Convention conv = Convention::AllOriented) {
  return mc_ising_correlations(kappa, box, {{x, y}}, plan, rng, conv).front();
}

// Pooled mean over independent replicas, weighted by sweeps.
inline WilsonEstimate merge_streams(const std::vector<WilsonEstimate>& parts) {
  if (parts.empty()) throw PreconditionError("nothing to merge");
  WilsonEstimate r = parts.front();
  if (parts.size() == 1) return r;
  long double n = 0, s = 0, v = 0;
  for (const auto& p : parts) {
    n += p.n_sweeps;
    s += static_cast<long double>(p.n_sweeps) * p.mean;
    v += static_cast<long double>(p.n_sweeps) * p.n_sweeps * p.stderr_ * p.stderr_;
  }
  r.mean = static_cast<double>(s / n);
  r.stderr_ = static_cast<double>(std::sqrt(v) / n);
  r.n_sweeps = static_cast<long>(n);
  r.n_blocks = 0;
  r.tau_int = 0;
  for (const auto& p : parts) {
    r.n_blocks += p.n_blocks;
    r.tau_int = std::max(r.tau_int, p.tau_int);
    r.stationary = r.stationary && p.stationary;
  }
  r.streams = static_cast<long>(parts.size());
  return r;
}

// Replicas 0..count-1 on streams base.stream + i; results are independent of the thread count.
template <class Job>
auto run_replicas(const RngSpec& base, long count, unsigned threads, Job job) {
  using R = decltype(job(base));
  if (count < 1) throw PreconditionError("streams must be >= 1");
  std::vector<R> parts(static_cast<std::size_t>(count));
  auto rng_of = [&](long i) { return RngSpec{base.seed, base.stream + static_cast<std::uint64_t>(i)}; };
  if (threads <= 1) {
    for (long i = 0; i < count; ++i) parts[i] = job(rng_of(i));
  } else {
    for (long i = 0; i < count; i += threads) {
      std::vector<std::future<R>> fs;
      for (long j = i; j < std::min<long>(count, i + threads); ++j) fs.push_back(std::async(std::launch::async, job, rng_of(j)));
      for (std::size_t j = 0; j < fs.size(); ++j) parts[i + j] = fs[j].get();
    }
  }
  return parts;
}

template <class Job>
WilsonEstimate run_streams(const RngSpec& base, long count, unsigned threads, Job job) {
  auto r = merge_streams(run_replicas(base, count, threads, job));
  r.rng = base;
  return r;
}

// Same for jobs returning one estimate per observable; merged observable by observable.
template <class Job>
std::vector<WilsonEstimate> run_streams_multi(const RngSpec& base, long count, unsigned threads, Job job) {
  auto parts = run_replicas(base, count, threads, job);
  std::vector<WilsonEstimate> out;
  for (std::size_t o = 0; o < parts.front().size(); ++o) {
    std::vector<WilsonEstimate> col;
    for (const auto& p : parts) col.push_back(p.at(o));
    out.push_back(merge_streams(col));
    out.back().rng = base;
  }
  return out;
}

struct BetaSchedule {
  enum class Kind { Fixed, Scaling, Infinite };
  Kind kind = Kind::Fixed;
  double beta = 0.0;
  double lambda = 1.0;

  static BetaSchedule fixed(double b) { return {Kind::Fixed, b, 1.0}; }
  static BetaSchedule scaling(double l) { return {Kind::Scaling, 0.0, l}; }
  static BetaSchedule infinite() { return {Kind::Infinite, ModelParams::infinity, 1.0}; }

  // scaling: |gamma_n| exp(-8(m-1) beta_n) = lambda
  double at(int n, int m) const {
    switch (kind) {
      case Kind::Fixed: return beta;
      case Kind::Infinite: return ModelParams::infinity;
      case Kind::Scaling:
        if (lambda <= 0) throw PreconditionError("lambda must be positive");
        return std::log(n / lambda) / (8.0 * (m - 1));
    }
    return beta;
  }
};

inline const char* to_string(BetaSchedule::Kind k) {
  switch (k) {
    case BetaSchedule::Kind::Fixed: return "fixed";
    case BetaSchedule::Kind::Scaling: return "scaling";
    case BetaSchedule::Kind::Infinite: return "infinite";
  }
  return "?";
}

struct ScanSpec {
  BoxSpec box;
  std::vector<int> ns;
  double kappa = 0.0;
  BetaSchedule schedule;
  Convention convention = Convention::AllOriented;
  int axis = 0;
  long streams = 1;
  unsigned threads = 1;
  bool shared_ising_chain = true;  // infinite schedule: all n on one chain
};

struct ScanRow {
  int n = 0;
  double beta_n = 0.0;
  double kappa = 0.0;
  double realized_lambda = 0.0;  // n exp(-8(m-1) beta_n)
  WilsonEstimate est;
};

// length n_max + 2 pad along axis 0, width on the other axes
inline BoxSpec strip_box(int m, int n_max, int width, int pad) {
  std::vector<int> s(static_cast<std::size_t>(m), width);
  s[0] = n_max + 2 * pad;
  return BoxSpec::sizes(s);
}

// Straight line of length n along `axis`, centred in the box.
inline std::pair<Vec, Vec> centred_line(const BoxSpec& box, int axis, int n) {
  Vec a(box.dim());
  for (int d = 0; d < box.dim(); ++d) {
    const auto& iv = box.extents[d];
    a[d] = d == axis ? iv.lo + (iv.length() - n) / 2 : iv.lo + iv.length() / 2;
  }
  if (n > box.extents[axis].length()) throw DimensionError("line longer than the box");
  Vec b = a;
  b[axis] += n;
  return {a, b};
}

inline std::vector<ScanRow> decay_scan(const ScanSpec& spec, const SamplingPlan& plan, const RngSpec& rng) {
  if (spec.ns.empty()) throw PreconditionError("empty n range");
  const int m = spec.box.dim();
  CellComplex cx(spec.box);
  std::vector<ScanRow> rows;
  if (spec.schedule.kind == BetaSchedule::Kind::Infinite && spec.shared_ising_chain) {
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int n : spec.ns) {
      if (n < 1) throw PreconditionError("n must be >= 1");
      pairs.push_back(centred_line(spec.box, spec.axis, n));
    }
    auto ests = run_streams_multi(rng, spec.streams, spec.threads, [&](RngSpec s) {
      return mc_ising_correlations(spec.kappa, spec.box, pairs, plan, s, spec.convention);
    });
    for (std::size_t i = 0; i < spec.ns.size(); ++i) {
      ScanRow row;
      row.n = spec.ns[i];
      row.kappa = spec.kappa;
      row.beta_n = ModelParams::infinity;
      row.est = ests[i];
      rows.push_back(std::move(row));
    }
    return rows;
  }
  for (std::size_t i = 0; i < spec.ns.size(); ++i) {
    int n = spec.ns[i];
    if (n < 1) throw PreconditionError("n must be >= 1");
    ScanRow row;
    row.n = n;
    row.kappa = spec.kappa;
    row.beta_n = spec.schedule.at(n, m);
    row.realized_lambda = std::isinf(row.beta_n) ? 0.0 : n * std::exp(-8.0 * (m - 1) * row.beta_n);
    auto [a, b] = centred_line(spec.box, spec.axis, n);
    RngSpec r = rng.child(i);
    if (std::isinf(row.beta_n)) {
      row.est = run_streams(r, spec.streams, spec.threads, [&](RngSpec s) {
        return mc_ising_correlation(spec.kappa, spec.box, a, b, plan, s, spec.convention);
      });
    } else {
      ModelParams mp{spec.box, row.beta_n, spec.kappa, spec.convention};
      auto gn = straight_path(cx, a, spec.axis, n);
      row.est = run_streams(r, spec.streams, spec.threads, [&](RngSpec s) { return mc_wilson(mp, gn, plan, s); });
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace z2higgs
