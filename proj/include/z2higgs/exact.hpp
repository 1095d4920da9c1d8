#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "z2higgs/lattice.hpp"
#include "z2higgs/polymers.hpp"

namespace z2higgs {

// AllOriented: the action sums over both orientations of every cell (edge coupling 2 kappa,
// plaquette coupling 2 beta). PositiveOnly: one term per positive cell.
enum class Convention { AllOriented, PositiveOnly };

inline const char* to_string(Convention c) { return c == Convention::AllOriented ? "all-oriented" : "positive-only"; }

struct ModelParams {
  BoxSpec box;
  double beta = 0.0;
  double kappa = 0.0;
  Convention convention = Convention::AllOriented;

  static constexpr double infinity = std::numeric_limits<double>::infinity();

  double factor() const { return convention == Convention::AllOriented ? 2.0 : 1.0; }
  double edge_coupling() const { return factor() * kappa; }
  double plaquette_coupling() const { return factor() * beta; }
  double t() const { return std::tanh(edge_coupling()); }
  bool beta_infinite() const { return std::isinf(beta); }

  void validate() const {
    box.validate();
    if (std::isnan(beta) || beta < 0) throw PreconditionError("beta must be >= 0");
    if (!std::isfinite(kappa) || kappa < 0) throw PreconditionError("kappa must be finite and >= 0");
  }
};

struct ExactOptions {
  std::size_t budget = 26;  // max positive edges (or vertices for the Ising scan)
  unsigned threads = 1;
  unsigned shard_bits = 4;
};

struct ExactResult {
  double logZ0 = 0.0;
  double logZgamma = 0.0;  // -inf when Z[gamma] vanishes
  double ratio = 0.0;
  std::string method;
};

// Integer histograms of gauge configurations by (#frustrated plaquettes f, #edges with sigma = 1, o),
// total and signed by rho(sigma(gamma)) for each observable.
struct GaugeHistogram {
  std::size_t E = 0, P = 0;
  std::vector<std::uint64_t> total;
  std::vector<std::vector<std::int64_t>> signed_counts;

  std::size_t slot(std::size_t f, std::size_t o) const { return f * (E + 1) + o; }

  void merge(const GaugeHistogram& h) {
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += h.total[i];
    for (std::size_t k = 0; k < signed_counts.size(); ++k)
      for (std::size_t i = 0; i < total.size(); ++i) signed_counts[k][i] += h.signed_counts[k][i];
  }
};

namespace detail {

inline void check_masks(const CellComplex& cx, std::size_t budget) {
  if (cx.edges() > budget || cx.edges() > 40)
    throw ResourceError("exact scan needs 2^" + std::to_string(cx.edges()) + " states, over budget " + std::to_string(budget));
}

inline GaugeHistogram gauge_shard(const CellComplex& cx, const std::vector<std::uint64_t>& obs, unsigned high_bits,
                                  std::uint64_t shard) {
  const std::size_t E = cx.edges(), P = cx.plaquettes();
  GaugeHistogram h;
  h.E = E;
  h.P = P;
  h.total.assign((P + 1) * (E + 1), 0);
  h.signed_counts.assign(obs.size(), std::vector<std::int64_t>(h.total.size(), 0));
  const unsigned low = static_cast<unsigned>(E) - high_bits;
  std::uint64_t sigma = shard << low;
  std::vector<std::uint8_t> frus(P, 0);
  std::vector<std::vector<Index>> plaq_of(E);
  for (Index p = 0; p < P; ++p) {
    int par = 0;
    for (auto f : cx.faces(2, p)) {
      par ^= static_cast<int>(sigma >> f.cell & 1u);
      plaq_of[f.cell].push_back(p);
    }
    frus[p] = static_cast<std::uint8_t>(par);
  }
  std::size_t f = 0;
  for (auto v : frus) f += v;
  std::size_t o = static_cast<std::size_t>(std::popcount(sigma));
  std::vector<int> par(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) par[k] = std::popcount(sigma & obs[k]) & 1;
  auto record = [&] {
    std::size_t s = h.slot(f, o);
    ++h.total[s];
    for (std::size_t k = 0; k < obs.size(); ++k) h.signed_counts[k][s] += par[k] ? -1 : 1;
  };
  record();
  const std::uint64_t n = std::uint64_t{1} << low;
  for (std::uint64_t i = 1; i < n; ++i) {
    unsigned j = static_cast<unsigned>(std::countr_zero(i));
    sigma ^= std::uint64_t{1} << j;
    if (sigma >> j & 1u)
      ++o;
    else
      --o;
    for (Index p : plaq_of[j]) {
      frus[p] ^= 1u;
      if (frus[p])
        ++f;
      else
        --f;
    }
    for (std::size_t k = 0; k < obs.size(); ++k) par[k] ^= static_cast<int>(obs[k] >> j & 1u);
    record();
  }
  return h;
}

}  // namespace detail

inline std::uint64_t edge_mask(const PathPolymer& g) {
  std::uint64_t m = 0;
  for (Index e : g.edges) {
    if (e >= 64) throw ResourceError("edge mask overflow");
    m |= std::uint64_t{1} << e;
  }
  return m;
}

// Full 2^E scan, sharded by the high bits; shards merge exactly.
inline GaugeHistogram scan_gauge(const CellComplex& cx, const std::vector<PathPolymer>& observables, const ExactOptions& opt = {}) {
  detail::check_masks(cx, opt.budget);
  std::vector<std::uint64_t> obs;
  for (const auto& g : observables) obs.push_back(edge_mask(g));
  const unsigned E = static_cast<unsigned>(cx.edges());
  const unsigned hb = std::min<unsigned>(opt.shard_bits, E);
  const std::uint64_t shards = std::uint64_t{1} << hb;
  std::vector<GaugeHistogram> parts(shards);
  const unsigned nt = std::max(1u, opt.threads);
  for (std::uint64_t base = 0; base < shards; base += nt) {
    std::vector<std::future<GaugeHistogram>> fut;
    for (std::uint64_t s = base; s < std::min<std::uint64_t>(shards, base + nt); ++s)
      fut.push_back(std::async(nt > 1 ? std::launch::async : std::launch::deferred, detail::gauge_shard, std::cref(cx),
                               std::cref(obs), hb, s));
    for (std::size_t i = 0; i < fut.size(); ++i) parts[base + i] = fut[i].get();
  }
  GaugeHistogram h = parts[0];
  for (std::uint64_t s = 1; s < shards; ++s) h.merge(parts[s]);
  return h;
}

namespace detail {

// sum_{f,o} c(f,o) exp(-2 B f - 2 K o); the inner sum over o is exact when K = 0
template <class Count>
inline long double weighted_sum(const GaugeHistogram& h, const std::vector<Count>& c, double K, double B, bool flat) {
  long double s = 0.0L;
  const std::size_t fmax = flat ? 0 : h.P;
  for (std::size_t f = 0; f <= fmax; ++f) {
    long double inner = 0.0L;
    for (std::size_t o = 0; o <= h.E; ++o) {
      Count n = c[h.slot(f, o)];
      if (n == 0) continue;
      inner += static_cast<long double>(n) * std::exp(static_cast<long double>(-2.0 * K * double(o)));
    }
    if (inner != 0.0L) s += inner * std::exp(static_cast<long double>(-2.0 * B * double(f)));
  }
  return s;
}

}  // namespace detail

// Evaluates Z[gamma_k]/Z[0] for every observable of a histogram; flat restricts to d sigma = 0.
inline std::vector<ExactResult> ratios_from_histogram(const GaugeHistogram& h, const ModelParams& mp, bool flat) {
  const double K = mp.edge_coupling();
  const double B = flat ? 0.0 : mp.plaquette_coupling();
  if (!flat && !std::isfinite(B)) throw PreconditionError("beta = infinity: use the flat or Ising evaluation");
  double shift = K * double(h.E) + (flat ? 0.0 : B * double(h.P));
  long double z0 = detail::weighted_sum(h, h.total, K, B, flat);
  std::vector<ExactResult> out;
  for (const auto& sc : h.signed_counts) {
    long double zg = detail::weighted_sum(h, sc, K, B, flat);
    ExactResult r;
    r.logZ0 = shift + static_cast<double>(std::log(z0));
    r.logZgamma = zg > 0 ? shift + static_cast<double>(std::log(zg)) : -std::numeric_limits<double>::infinity();
    r.ratio = static_cast<double>(zg / z0);
    r.method = flat ? "exact-gray-code-flat" : "exact-gray-code";
    if (!std::isfinite(r.ratio)) throw NumericError("non-finite exact ratio");
    out.push_back(r);
  }
  return out;
}

inline ExactResult exact_Z_ratio(const ModelParams& mp, const PathPolymer& g, const ExactOptions& opt = {}) {
  mp.validate();
  if (mp.beta_infinite()) throw PreconditionError("beta = infinity: use exact_Z_ratio_ising");
  CellComplex cx(mp.box);
  auto h = scan_gauge(cx, {g}, opt);
  return ratios_from_histogram(h, mp, false).front();
}

// Sum restricted to closed sigma (d sigma = 0), the beta -> infinity limit of the gauge model.
inline ExactResult exact_Z_ratio_flat(const ModelParams& mp, const PathPolymer& g, const ExactOptions& opt = {}) {
  CellComplex cx(mp.box);
  auto h = scan_gauge(cx, {g}, opt);
  return ratios_from_histogram(h, mp, true).front();
}

// Straight line along axis 0 starting at the lower corner, or at `start` when given.
inline ExactResult wilson_line(const ModelParams& mp, int n, const ExactOptions& opt = {}, Vec start = {}, int axis = 0) {
  CellComplex cx(mp.box);
  if (start.empty())
    for (const auto& iv : mp.box.extents) start.push_back(iv.lo);
  auto g = straight_path(cx, start, axis, n);
  if (n == 0) {
    ExactResult r;
    r.ratio = 1.0;
    r.method = "empty-line";
    return r;
  }
  return exact_Z_ratio(mp, g, opt);
}

// Ising spin-spin correlation with weight exp(K sum_e rho(d theta(e))), K = edge coupling of the convention.
struct IsingHistogram {
  std::size_t E = 0;
  std::vector<std::uint64_t> total;              // by number of unsatisfied edges
  std::vector<std::vector<std::int64_t>> pairs;  // signed by rho(theta_x + theta_y)
};

inline IsingHistogram scan_ising(const CellComplex& cx, const std::vector<std::pair<Index, Index>>& pairs, std::size_t budget) {
  const std::size_t V = cx.vertices(), E = cx.edges();
  if (V > budget || V > 40) throw ResourceError("Ising scan needs 2^" + std::to_string(V) + " states, over budget");
  IsingHistogram h;
  h.E = E;
  h.total.assign(E + 1, 0);
  h.pairs.assign(pairs.size(), std::vector<std::int64_t>(E + 1, 0));
  std::vector<std::vector<Index>> inc(V);
  for (Index e = 0; e < E; ++e) {
    inc[cx.edge_tail(e)].push_back(e);
    inc[cx.edge_head(e)].push_back(e);
  }
  std::vector<std::uint8_t> bad(E, 0);
  std::size_t u = 0;
  std::uint64_t theta = 0;
  std::vector<int> par(pairs.size(), 0);
  auto record = [&] {
    ++h.total[u];
    for (std::size_t k = 0; k < pairs.size(); ++k) h.pairs[k][u] += par[k] ? -1 : 1;
  };
  record();
  const std::uint64_t n = std::uint64_t{1} << V;
  for (std::uint64_t i = 1; i < n; ++i) {
    unsigned v = static_cast<unsigned>(std::countr_zero(i));
    theta ^= std::uint64_t{1} << v;
    for (Index e : inc[v]) {
      bad[e] ^= 1u;
      if (bad[e])
        ++u;
      else
        --u;
    }
    for (std::size_t k = 0; k < pairs.size(); ++k)
      if (pairs[k].first != pairs[k].second) par[k] ^= (pairs[k].first == v) ^ (pairs[k].second == v);
    record();
  }
  return h;
}

inline std::vector<double> ising_correlations(const IsingHistogram& h, double K) {
  long double z = 0;
  std::vector<long double> zp(h.pairs.size(), 0);
  for (std::size_t u = 0; u <= h.E; ++u) {
    long double w = std::exp(static_cast<long double>(-2.0 * K * double(u)));
    z += h.total[u] * w;
    for (std::size_t k = 0; k < h.pairs.size(); ++k) zp[k] += h.pairs[k][u] * w;
  }
  std::vector<double> out;
  for (auto v : zp) out.push_back(static_cast<double>(v / z));
  return out;
}

inline double exact_Z_ratio_ising(double kappa, const BoxSpec& box, const Vec& x, const Vec& y,
                                  Convention conv = Convention::AllOriented, std::size_t budget = 26) {
  if (!std::isfinite(kappa) || kappa < 0) throw PreconditionError("kappa must be finite and >= 0");
  CellComplex cx(box);
  if (!box.contains(x) || !box.contains(y)) throw DimensionError("vertex outside box");
  Index a = cx.vertex_index(x), b = cx.vertex_index(y);
  if (a == b) return 1.0;
  ModelParams mp{box, 0.0, kappa, conv};
  auto h = scan_ising(cx, {{a, b}}, budget);
  return ising_correlations(h, mp.edge_coupling()).front();
}

// High-temperature side: Z-check[gamma, gamma0] and Z-check[gamma] by explicit sums over closed gamma' and closed omega.
struct CheckCutoffs {
  int max_len0 = -1;      // |gamma0| cutoff, -1 = unlimited
  int max_len_prime = -1; // |gamma'| cutoff, -1 = unlimited
};

struct CheckResult {
  double z_gamma = 0.0;  // Z-check[gamma]
  double z_zero = 0.0;   // Z-check[0]
  double ratio = 0.0;
  double tail_bound = 0.0;  // sum of |excluded terms|, relative to z_zero
  bool exact = true;
  std::size_t connecting_paths = 0;
  std::size_t closed_sets = 0;
  std::size_t closed_forms = 0;
};

class HighTemperatureSum {
 public:
  explicit HighTemperatureSum(const ModelParams& mp, std::size_t max_cycle_dim = 22, std::size_t max_form_dim = 22)
      : mp_(mp), cx_(mp.box) {
    mp.validate();
    if (cx_.edges() > 64 || cx_.plaquettes() > 64) throw ResourceError("high-temperature sum needs <= 64 edges and plaquettes");
    t_ = mp.t();
    // cycle space spanned by plaquette boundaries
    std::vector<std::uint64_t> gens;
    for (Index p = 0; p < cx_.plaquettes(); ++p) {
      std::uint64_t m = 0;
      for (auto f : cx_.faces(2, p)) m |= std::uint64_t{1} << f.cell;
      gens.push_back(m);
    }
    auto cyc = basis(gens);
    if (cyc.size() > max_cycle_dim) throw ResourceError("cycle space too large for explicit summation");
    closed_ = span(cyc);
    // closed 2-forms: image of d on 1-forms
    if (mp.beta_infinite()) {
      forms_ = {0};
    } else {
      std::vector<std::uint64_t> dgen;
      for (Index e = 0; e < cx_.edges(); ++e) {
        std::uint64_t m = 0;
        for (auto f : cx_.cofaces(1, e)) m |= std::uint64_t{1} << f.cell;
        dgen.push_back(m);
      }
      auto fb = basis(dgen);
      if (fb.size() > max_form_dim) throw ResourceError("closed-form space too large for explicit summation");
      forms_ = span(fb);
    }
    const double B = mp.beta_infinite() ? 0.0 : mp.plaquette_coupling();
    for (auto w : forms_) weights_.push_back(std::exp(-2.0 * B * std::popcount(w)));
  }

  const CellComplex& complex() const { return cx_; }
  std::size_t closed_count() const { return closed_.size(); }
  std::size_t form_count() const { return forms_.size(); }

  // V(A) = sum_omega exp(-2B|omega|) rho(omega(q_A)), A closed
  double vortex_sum(std::uint64_t A) {
    auto it = memo_.find(A);
    if (it != memo_.end()) return it->second;
    std::vector<Index> edges;
    for (std::uint64_t m = A; m; m &= m - 1) edges.push_back(static_cast<Index>(std::countr_zero(m)));
    std::uint64_t q = 0;
    if (!edges.empty()) {
      auto s = spanning_surface(cx_, make_path(cx_, edges));
      for (Index p : s.plaquettes) q |= std::uint64_t{1} << p;
    }
    long double v = 0;
    for (std::size_t i = 0; i < forms_.size(); ++i) v += (std::popcount(forms_[i] & q) & 1) ? -weights_[i] : weights_[i];
    return memo_[A] = static_cast<double>(v);
  }

  struct TermSums {
    long double kept = 0;
    long double excluded_abs = 0;
    long double all_abs = 0;
  };

  // Z-check[gamma, gamma0]: gamma + gamma0 closed; gamma' restricted to |gamma'| <= max_prime when >= 0
  TermSums term_sums(const PathPolymer& g, const PathPolymer& g0, int max_prime) {
    std::uint64_t base = edge_mask(g) ^ edge_mask(g0);
    std::uint64_t forbid = 0;
    for (Index v : g0.vertices)
      for (auto f : cx_.cofaces(0, v)) forbid |= std::uint64_t{1} << f.cell;
    TermSums r;
    for (auto c : closed_) {
      if (c & forbid) continue;
      int len = std::popcount(c);
      long double x = std::pow(static_cast<long double>(t_), len) * vortex_sum(base ^ c);
      r.all_abs += std::fabs(x);
      if (max_prime >= 0 && len > max_prime)
        r.excluded_abs += std::fabs(x);
      else
        r.kept += x;
    }
    return r;
  }

  double term(const PathPolymer& g, const PathPolymer& g0) { return static_cast<double>(term_sums(g, g0, -1).kept); }

  CheckResult check(const PathPolymer& g, CheckCutoffs cut = {}) {
    CheckResult r;
    r.closed_sets = closed_.size();
    r.closed_forms = forms_.size();
    long double tail = 0;
    auto conn = enumerate_connecting_paths(cx_, g, static_cast<int>(cx_.edges()));
    r.connecting_paths = conn.size();
    long double zg = 0;
    for (const auto& g0 : conn) {
      long double w = std::pow(static_cast<long double>(t_), g0.length());
      auto ts = term_sums(g, g0, cut.max_len_prime);
      if (cut.max_len0 >= 0 && g0.length() > cut.max_len0) {
        tail += w * ts.all_abs;
        continue;
      }
      zg += w * ts.kept;
      tail += w * ts.excluded_abs;
    }
    auto z0 = term_sums(PathPolymer{}, PathPolymer{}, cut.max_len_prime);
    r.z_zero = static_cast<double>(z0.kept);
    r.z_gamma = static_cast<double>(zg);
    r.ratio = static_cast<double>(zg / z0.kept);
    r.tail_bound = static_cast<double>((tail + std::fabs(zg / z0.kept) * z0.excluded_abs) / z0.kept);
    r.exact = tail == 0 && z0.excluded_abs == 0;
    if (!std::isfinite(r.ratio)) throw NumericError("non-finite high-temperature ratio");
    return r;
  }

 private:
  static std::vector<std::uint64_t> basis(std::vector<std::uint64_t> v) {
    std::vector<std::uint64_t> out;
    for (auto x : v) {
      for (auto b : out) x = std::min(x, x ^ b);
      if (x) {
        out.push_back(x);
        std::sort(out.rbegin(), out.rend());
      }
    }
    return out;
  }
  static std::vector<std::uint64_t> span(const std::vector<std::uint64_t>& b) {
    std::vector<std::uint64_t> out{0};
    std::uint64_t cur = 0;
    const std::uint64_t n = std::uint64_t{1} << b.size();
    for (std::uint64_t i = 1; i < n; ++i) {
      cur ^= b[std::countr_zero(i)];
      out.push_back(cur);
    }
    return out;
  }

  ModelParams mp_;
  CellComplex cx_;
  double t_ = 0;
  std::vector<std::uint64_t> closed_;
  std::vector<std::uint64_t> forms_;
  std::vector<double> weights_;
  std::unordered_map<std::uint64_t, double> memo_;
};

inline CheckResult exact_check_Z(const ModelParams& mp, const PathPolymer& g, CheckCutoffs cut = {}) {
  HighTemperatureSum hs(mp);
  return hs.check(g, cut);
}

// Z-check[gamma, gamma0] / Z-check[0]
inline double exact_check_Z_term(const ModelParams& mp, const PathPolymer& g, const PathPolymer& g0) {
  HighTemperatureSum hs(mp);
  return hs.term(g, g0) / hs.term(PathPolymer{}, PathPolymer{});
}

}  // namespace z2higgs
