#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "z2higgs/exact.hpp"
#include "z2higgs/lattice.hpp"
#include "z2higgs/polymers.hpp"
#include "z2higgs/ursell.hpp"

namespace z2higgs {

struct Activities {
  double beta = 0.0;
  double kappa = 0.0;
  int m = 2;
  Convention convention = Convention::AllOriented;

  static Activities from(const ModelParams& mp) { return {mp.beta, mp.kappa, mp.box.dim(), mp.convention}; }

  double factor() const { return convention == Convention::AllOriented ? 2.0 : 1.0; }
  double t() const { return std::tanh(factor() * kappa); }
  double B() const { return std::isinf(beta) ? ModelParams::infinity : factor() * beta; }
  // minimal vortex d sigma_e and the stated next-smallest activity
  double xi() const { return vortex(2 * (m - 1)); }
  double xi_hat() const { return vortex(4 * (m - 1) - 1); }
  double path(int len) const { return std::pow(t(), len); }
  double vortex(int size) const { return std::isinf(beta) ? 0.0 : std::exp(-2.0 * B() * size); }
  double log_path(int len) const { return len * std::log(t()); }
  double log_vortex(int size) const { return std::isinf(beta) ? -ModelParams::infinity : -2.0 * B() * size; }
};

struct ExpansionConfig {
  double alpha = 0.5;
  double a = 0.5;
  int max_norm1 = 8;
  int max_norm2 = 4;
  int max_cluster_size = 6;
  VortexRegion region = VortexRegion::All;
  std::size_t max_clusters = 50'000'000;
  // reference thresholds for the lemma hypotheses; not the unknown constants themselves
  double kappa0 = 0.05;
  double beta0 = 2.0;

  void validate() const {
    if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in (0,1)");
    if (!(a > 0 && a < 1)) throw ConfigError("a must lie in (0,1)");
    if (max_norm1 < 0 || max_norm2 < 0) throw ConfigError("norm cutoffs must be >= 0");
    if (max_cluster_size < 1) throw ConfigError("maxClusterSize must be >= 1");
  }
};

// Explicit cluster: distinct polymers with multiplicities.
struct Cluster {
  std::vector<Polymer> items;
  std::vector<int> mult;

  void add(Polymer p, int n = 1) {
    for (std::size_t i = 0; i < items.size(); ++i)
      if (items[i] == p) {
        mult[i] += n;
        return;
      }
    items.push_back(std::move(p));
    mult.push_back(n);
  }
  int size() const {
    int s = 0;
    for (int n : mult) s += n;
    return s;
  }
  int norm1() const {
    int s = 0;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (auto p = std::get_if<PathPolymer>(&items[i])) s += mult[i] * p->length();
    return s;
  }
  int norm2() const {
    int s = 0;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (auto v = std::get_if<VortexPolymer>(&items[i])) s += mult[i] * v->support_size();
    return s;
  }
  // C^1 as a cluster of its own
  Cluster paths_part() const {
    Cluster c;
    for (std::size_t i = 0; i < items.size(); ++i)
      if (std::holds_alternative<PathPolymer>(items[i])) c.add(items[i], mult[i]);
    return c;
  }
  // one entry per copy
  std::vector<Polymer> expanded() const {
    std::vector<Polymer> out;
    for (std::size_t i = 0; i < items.size(); ++i)
      for (int k = 0; k < mult[i]; ++k) out.push_back(items[i]);
    return out;
  }
};

inline std::vector<std::vector<int>> zeta_matrix(const std::vector<Polymer>& ps, SurfaceProvider& surfaces) {
  std::vector<std::vector<int>> z(ps.size(), std::vector<int>(ps.size(), 0));
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i; j < ps.size(); ++j) z[i][j] = z[j][i] = interaction_zeta(ps[i], ps[j], surfaces);
  return z;
}

inline bool is_connected(const std::vector<std::vector<int>>& z) {
  if (z.empty()) return false;
  std::vector<char> seen(z.size(), 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    auto i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < z.size(); ++j)
      if (!seen[j] && z[i][j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
  }
  return std::all_of(seen.begin(), seen.end(), [](char s) { return s; });
}

// U for an explicit list (one item per copy)
inline std::int64_t ursell(const std::vector<Polymer>& items, SurfaceProvider& surfaces, UrsellLimits lim = {}) {
  return ursell(zeta_matrix(items, surfaces), lim);
}

inline std::int64_t ursell(const Cluster& c, SurfaceProvider& surfaces) {
  return ursell_multiset(zeta_matrix(c.items, surfaces), c.mult);
}

// U(C) = U(C^1) (-2)^{|C^2|} prod_omega deg omega
inline std::int64_t ursell_minimal_factorization(const Cluster& c, SurfaceProvider& surfaces) {
  std::vector<const VortexPolymer*> vs;
  for (std::size_t i = 0; i < c.items.size(); ++i)
    if (auto v = std::get_if<VortexPolymer>(&c.items[i])) {
      if (!v->minimal()) throw PreconditionError("factorization needs minimal vortices");
      if (c.mult[i] != 1) throw PreconditionError("factorization needs pairwise non-adjacent vortices");
      vs.push_back(v);
    }
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = i + 1; j < vs.size(); ++j)
      if (vortex_adjacent(*vs[i], *vs[j])) throw PreconditionError("factorization needs pairwise non-adjacent vortices");
  Cluster c1 = c.paths_part();
  if (c1.items.empty()) return vs.size() == 1 ? 1 : 0;
  std::int64_t u = ursell(c1, surfaces);
  for (const auto* v : vs) {
    std::int64_t deg = 0;
    for (std::size_t i = 0; i < c1.items.size(); ++i)
      if (interaction_zeta(c1.items[i], Polymer{*v}, surfaces) == 2) deg += c1.mult[i];
    u = detail::checked_mul(u, -2 * deg);
  }
  return u;
}

inline double log_factorial(int n) { return std::lgamma(n + 1.0); }

// Psi = U(C) / prod n! * prod phi^n
inline double cluster_weight(const Cluster& c, const Activities& act, SurfaceProvider& surfaces) {
  std::int64_t u = ursell(c, surfaces);
  if (u == 0) return 0.0;
  double lg = 0.0;
  for (std::size_t i = 0; i < c.items.size(); ++i) {
    if (auto p = std::get_if<PathPolymer>(&c.items[i]))
      lg += c.mult[i] * act.log_path(p->length());
    else
      lg += c.mult[i] * act.log_vortex(std::get<VortexPolymer>(c.items[i]).support_size());
    lg -= log_factorial(c.mult[i]);
  }
  return static_cast<double>(u) * std::exp(lg);
}

// Truncated polymer pool: closed paths with |gamma| <= maxNorm1 (items 0..P-1) and vortices with
// |supp omega| <= maxNorm2 (items P..). Neighbour lists hold pairs with zeta != 0 that fit the norm budgets together.
class PolymerPool {
 public:
  PolymerPool(const CellComplex& cx, int max_norm1, int max_norm2, VortexRegion region = VortexRegion::All,
              EnumerationLimits lim = {})
      : cx_(cx), max_norm1_(max_norm1), max_norm2_(max_norm2) {
    paths_ = enumerate_closed_paths(cx, max_norm1, lim);
    vortices_ = enumerate_vortices(cx, max_norm2, region, lim);
    build();
  }
  // hand-picked polymers; budgets bound the cluster norms that later enumerations may request
  PolymerPool(const CellComplex& cx, std::vector<PathPolymer> paths, std::vector<VortexPolymer> vortices, int budget1,
              int budget2)
      : cx_(cx), max_norm1_(budget1), max_norm2_(budget2), paths_(std::move(paths)), vortices_(std::move(vortices)) {
    build();
  }

 private:
  void build() {
    const CellComplex& cx = cx_;
    const std::size_t P = paths_.size(), N = size();
    surfaces_.reserve(P);
    for (const auto& g : paths_) surfaces_.push_back(spanning_surface(cx, g).support);
    nbr_.assign(N, {});
    // paths sharing a vertex
    std::vector<std::vector<Index>> at_vertex(cx.vertices());
    for (Index i = 0; i < P; ++i)
      for (Index v : paths_[i].vertices) at_vertex[v].push_back(i);
    std::vector<Index> stamp(N, std::numeric_limits<Index>::max());
    for (Index i = 0; i < P; ++i) {
      for (Index v : paths_[i].vertices)
        for (Index j : at_vertex[v])
          if (j != i && stamp[j] != i && paths_[i].length() + paths_[j].length() <= max_norm1_) {
            stamp[j] = i;
            nbr_[i].push_back(j);
          }
    }
    // vortices sharing a plaquette or a 3-cell
    std::vector<std::vector<Index>> at_plaq(cx.plaquettes()), at_cube(cx.cubes());
    for (Index k = 0; k < vortices_.size(); ++k) {
      for (Index p : vortices_[k].plaquettes) at_plaq[p].push_back(k);
      for (Index c : vortices_[k].cubes) at_cube[c].push_back(k);
    }
    for (Index k = 0; k < vortices_.size(); ++k) {
      Index i = static_cast<Index>(P) + k;
      auto visit = [&](const std::vector<Index>& list) {
        for (Index l : list) {
          Index j = static_cast<Index>(P) + l;
          if (l != k && stamp[j] != i && vortices_[k].support_size() + vortices_[l].support_size() <= max_norm2_) {
            stamp[j] = i;
            nbr_[i].push_back(j);
          }
        }
      };
      for (Index p : vortices_[k].plaquettes) visit(at_plaq[p]);
      for (Index c : vortices_[k].cubes) visit(at_cube[c]);
    }
    // path/vortex pairs where the vortex flips on the path's surface
    std::vector<std::vector<Index>> on_surface(cx.plaquettes());
    for (Index i = 0; i < P; ++i)
      for (auto p = surfaces_[i].find_first(); p != Bits::npos; p = surfaces_[i].find_next(p)) on_surface[p].push_back(i);
    std::vector<char> parity(P, 0), seen(P, 0);
    std::vector<Index> touched;
    for (Index k = 0; k < vortices_.size(); ++k) {
      touched.clear();
      for (Index p : vortices_[k].plaquettes)
        for (Index i : on_surface[p]) {
          if (!seen[i]) {
            seen[i] = 1;
            touched.push_back(i);
          }
          parity[i] ^= 1;
        }
      for (Index i : touched) {
        if (parity[i]) {
          nbr_[i].push_back(static_cast<Index>(P) + k);
          nbr_[P + k].push_back(i);
        }
        parity[i] = seen[i] = 0;
      }
    }
    for (auto& l : nbr_) std::sort(l.begin(), l.end());
  }

 public:
  std::size_t size() const { return paths_.size() + vortices_.size(); }
  std::size_t path_count() const { return paths_.size(); }
  std::size_t vortex_count() const { return vortices_.size(); }
  int max_norm1() const { return max_norm1_; }
  int max_norm2() const { return max_norm2_; }
  bool is_path(Index i) const { return i < paths_.size(); }
  const PathPolymer& path(Index i) const { return paths_.at(i); }
  const VortexPolymer& vortex(Index i) const { return vortices_.at(i - paths_.size()); }
  const std::vector<PathPolymer>& paths() const { return paths_; }
  const std::vector<VortexPolymer>& vortices() const { return vortices_; }
  const Bits& surface(Index i) const { return surfaces_.at(i); }
  const std::vector<std::vector<Index>>& neighbours() const { return nbr_; }
  int norm1(Index i) const { return is_path(i) ? paths_[i].length() : 0; }
  int norm2(Index i) const { return is_path(i) ? 0 : vortex(i).support_size(); }
  Polymer polymer(Index i) const { return is_path(i) ? Polymer{paths_[i]} : Polymer{vortex(i)}; }

  // rho(omega(q)) flip for vortex item i against a plaquette set
  bool flips(Index i, const Bits& q) const {
    int par = 0;
    for (Index p : vortex(i).plaquettes) par ^= q.test(p) ? 1 : 0;
    return par;
  }
  int iota(Index i, Index j) const {
    if (i == j) return 0;
    bool pi = is_path(i), pj = is_path(j);
    if (pi && pj) return path_adjacent(paths_[i], paths_[j]) ? 0 : 1;
    if (!pi && !pj) return vortex_adjacent(vortex(i), vortex(j)) ? 0 : 1;
    if (pj) std::swap(i, j);
    return flips(j, surfaces_[i]) ? -1 : 1;
  }

 private:
  const CellComplex& cx_;
  int max_norm1_, max_norm2_;
  std::vector<PathPolymer> paths_;
  std::vector<VortexPolymer> vortices_;
  std::vector<Bits> surfaces_;
  std::vector<std::vector<Index>> nbr_;
};

struct ClusterView {
  const std::vector<Index>& types;
  const std::vector<int>& mult;
  int norm1;
  int norm2;
  int size;
  std::int64_t U;
  double psi;
};

namespace detail {

template <class Visit>
struct ClusterHooks {
  const PolymerPool& pool;
  const Activities& act;
  const ExpansionConfig& cfg;
  Visit& visit_fn;
  int n1 = 0, n2 = 0;
  std::size_t sets = 0, clusters = 0;
  std::vector<std::vector<int>> zeta;
  std::vector<int> mult;
  std::vector<double> logphi;
  std::vector<Index> types;

  ClusterHooks(const PolymerPool& p, const Activities& a, const ExpansionConfig& c, Visit& v)
      : pool(p), act(a), cfg(c), visit_fn(v) {}

  void add(Index x) {
    n1 += pool.norm1(x);
    n2 += pool.norm2(x);
  }
  void remove(Index x) {
    n1 -= pool.norm1(x);
    n2 -= pool.norm2(x);
  }
  bool fits(Index u) const { return n1 + pool.norm1(u) <= cfg.max_norm1 && n2 + pool.norm2(u) <= cfg.max_norm2; }
  bool prune(std::size_t size) const {
    return n1 > cfg.max_norm1 || n2 > cfg.max_norm2 || static_cast<int>(size) > cfg.max_cluster_size;
  }
  void visit(const std::vector<Index>& set) {
    ++sets;
    types = set;
    const std::size_t d = set.size();
    zeta.assign(d, std::vector<int>(d, 1));
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) zeta[i][j] = zeta[j][i] = 1 - pool.iota(set[i], set[j]);
    logphi.resize(d);
    for (std::size_t i = 0; i < d; ++i)
      logphi[i] = pool.is_path(set[i]) ? act.log_path(pool.norm1(set[i])) : act.log_vortex(pool.norm2(set[i]));
    mult.assign(d, 1);
    expand(0, n1, n2, static_cast<int>(d));
  }
  // raise multiplicities of types pos.. within the budgets
  void expand(std::size_t pos, int c1, int c2, int size) {
    if (pos == types.size()) {
      emit(c1, c2, size);
      return;
    }
    int a1 = pool.norm1(types[pos]), a2 = pool.norm2(types[pos]);
    int saved = mult[pos];
    for (;;) {
      expand(pos + 1, c1, c2, size);
      c1 += a1;
      c2 += a2;
      ++size;
      if (c1 > cfg.max_norm1 || c2 > cfg.max_norm2 || size > cfg.max_cluster_size) break;
      ++mult[pos];
    }
    mult[pos] = saved;
  }
  void emit(int c1, int c2, int size) {
    if (++clusters > cfg.max_clusters)
      throw ResourceError("cluster enumeration exceeded " + std::to_string(cfg.max_clusters) + " clusters");
    std::int64_t u = ursell_multiset(zeta, mult);
    double psi = 0.0;
    if (u != 0) {
      double lg = 0.0;
      for (std::size_t i = 0; i < types.size(); ++i) lg += mult[i] * logphi[i] - log_factorial(mult[i]);
      psi = static_cast<double>(u) * std::exp(lg);
    }
    visit_fn(ClusterView{types, mult, c1, c2, size, u, psi});
  }
};

}  // namespace detail

struct EnumerationStats {
  std::size_t sets = 0;
  std::size_t clusters = 0;
};

// Every cluster within the cutoffs that contains at least one active pool item, each exactly once.
template <class Visit>
EnumerationStats enumerate_clusters(const PolymerPool& pool, const std::vector<char>& active, const Activities& act,
                                    const ExpansionConfig& cfg, Visit&& visit) {
  cfg.validate();
  if (cfg.max_norm1 > pool.max_norm1() || cfg.max_norm2 > pool.max_norm2())
    throw PreconditionError("cutoffs exceed the polymer pool");
  const std::size_t N = pool.size();
  if (active.size() != N) throw PreconditionError("active mask must cover the pool");
  std::vector<Index> order, rank(N);
  for (Index i = 0; i < N; ++i)
    if (active[i]) order.push_back(i);
  const std::size_t roots = order.size();
  for (Index i = 0; i < N; ++i)
    if (!active[i]) order.push_back(i);
  for (std::size_t r = 0; r < N; ++r) rank[order[r]] = static_cast<Index>(r);
  detail::ClusterHooks<std::remove_reference_t<Visit>> hooks(pool, act, cfg, visit);
  ConnectedSetEnumerator<detail::ClusterHooks<std::remove_reference_t<Visit>>> esu(
      pool.neighbours(), rank, static_cast<std::size_t>(cfg.max_cluster_size), hooks);
  for (std::size_t r = 0; r < roots; ++r) {
    Index x = order[r];
    if (pool.norm1(x) > cfg.max_norm1 || pool.norm2(x) > cfg.max_norm2) continue;
    esu.run_root(x);
  }
  return {hooks.sets, hooks.clusters};
}

// Truncation bookkeeping: signed shell sums by ||C||_1 and ||C||_2.
struct TailReport {
  int cutoff1 = 0;
  int cutoff2 = 0;
  int cluster_size = 0;
  std::map<int, double> shells1;
  std::map<int, double> shells2;
  double last_shell = 0.0;    // |shell| at the largest populated ||C||_1
  double extrapolated = 0.0;  // geometric continuation of the last two path shells, inf when not contracting
  double lemma_tail = 0.0;    // 2 N t^{a(1-alpha)} sum_{k > cutoff} t^{(1-a) k}
};

struct ExpansionResult {
  double value = 0.0;
  TailReport tail;
  std::size_t clusters = 0;
  std::size_t contributing = 0;
};

namespace detail {

inline void finish_tail(TailReport& tr, const Activities& act, const ExpansionConfig& cfg, int n_edges) {
  tr.cutoff1 = cfg.max_norm1;
  tr.cutoff2 = cfg.max_norm2;
  tr.cluster_size = cfg.max_cluster_size;
  std::vector<std::pair<int, double>> nz;
  for (auto [k, v] : tr.shells1)
    if (k > 0 && v != 0.0) nz.emplace_back(k, std::fabs(v));
  if (!nz.empty()) tr.last_shell = nz.back().second;
  if (nz.size() >= 2) {
    double r = nz.back().second / nz[nz.size() - 2].second;
    tr.extrapolated = r < 1 ? nz.back().second * r / (1 - r) : std::numeric_limits<double>::infinity();
  }
  double t = act.t();
  double x = std::pow(t, 1 - cfg.a);
  tr.lemma_tail = x < 1 ? 2.0 * n_edges * std::pow(t, cfg.a * (1 - cfg.alpha)) * std::pow(x, cfg.max_norm1 + 1) / (1 - x)
                        : std::numeric_limits<double>::infinity();
}

inline Bits surface_of(const CellComplex& cx, const Bits& edges) {
  std::vector<Index> es;
  for (auto e = edges.find_first(); e != Bits::npos; e = edges.find_next(e)) es.push_back(static_cast<Index>(e));
  if (es.empty()) return Bits(cx.plaquettes());
  return spanning_surface(cx, make_path(cx, es)).support;
}

inline Bits vertex_bits(const CellComplex& cx, const PathPolymer& g) {
  Bits b(cx.vertices());
  for (Index v : g.vertices) b.set(v);
  return b;
}

}  // namespace detail

// Expansion of log(Z-check[gamma_n, gamma0] / Z-check[0]) over a fixed polymer pool.
class ClusterExpansion {
 public:
  ClusterExpansion(const ModelParams& mp, ExpansionConfig cfg)
      : mp_(mp), cfg_(cfg), act_(Activities::from(mp)), cx_(mp.box), pool_(cx_, cfg.max_norm1, cfg.max_norm2, cfg.region) {
    mp.validate();
    cfg.validate();
  }
  ClusterExpansion(const ClusterExpansion&) = delete;
  ClusterExpansion& operator=(const ClusterExpansion&) = delete;

  const CellComplex& complex() const { return cx_; }
  const PolymerPool& pool() const { return pool_; }
  const Activities& activities() const { return act_; }
  const ExpansionConfig& config() const { return cfg_; }

  // sum of Psi(C) (rho(C^2(q_A)) 1(C^1 not~ gamma0) - 1), A = gamma_n + gamma0; cutoffs may be lowered per call
  ExpansionResult log_ratio(const PathPolymer& gn, const PathPolymer& g0) const { return log_ratio(gn, g0, cfg_); }

  ExpansionResult log_ratio(const PathPolymer& gn, const PathPolymer& g0, const ExpansionConfig& cut) const {
    Bits A = edge_bits(cx_, gn) ^ edge_bits(cx_, g0);
    if (!odd_vertices(cx_, bits_to_edges(A)).empty()) throw PreconditionError("gamma_n + gamma0 must be closed");
    Bits q = detail::surface_of(cx_, A);
    Bits near = detail::vertex_bits(cx_, g0);
    const std::size_t N = pool_.size();
    std::vector<char> active(N, 0), adj(N, 0), flip(N, 0);
    for (Index i = 0; i < N; ++i) {
      if (pool_.is_path(i)) {
        for (Index v : pool_.path(i).vertices)
          if (near.test(v)) adj[i] = 1;
        active[i] = adj[i];
      } else {
        flip[i] = pool_.flips(i, q);
        active[i] = flip[i];
      }
    }
    ExpansionResult r;
    long double sum = 0;
    auto stats = enumerate_clusters(pool_, active, act_, cut, [&](const ClusterView& c) {
      bool touches = false;
      int sign = 0;
      for (std::size_t i = 0; i < c.types.size(); ++i) {
        if (adj[c.types[i]]) touches = true;
        if (flip[c.types[i]]) sign ^= c.mult[i] & 1;
      }
      double factor = (touches ? 0.0 : (sign ? -1.0 : 1.0)) - 1.0;
      if (factor == 0.0) return;
      double term = c.psi * factor;
      ++r.contributing;
      sum += term;
      r.tail.shells1[c.norm1] += term;
      r.tail.shells2[c.norm2] += term;
    });
    r.value = static_cast<double>(sum);
    r.clusters = stats.clusters;
    detail::finish_tail(r.tail, act_, cut, gn.length() + g0.length());
    if (!std::isfinite(r.value)) throw NumericError("non-finite truncated cluster sum");
    return r;
  }

  // sum over gamma0 in Lambda^{gamma_n} with |gamma0| <= maxLen0 of t^{|gamma0|} exp(log_ratio)
  double z_ratio(const PathPolymer& gn, int max_len0, const ExpansionConfig& cut) const {
    auto conn = enumerate_connecting_paths(cx_, gn, max_len0);
    long double s = 0;
    for (const auto& g0 : conn) s += act_.path(g0.length()) * std::exp(log_ratio(gn, g0, cut).value);
    return static_cast<double>(s);
  }
  double z_ratio(const PathPolymer& gn, int max_len0) const { return z_ratio(gn, max_len0, cfg_); }

 private:
  static std::vector<Index> bits_to_edges(const Bits& b) {
    std::vector<Index> out;
    for (auto e = b.find_first(); e != Bits::npos; e = b.find_next(e)) out.push_back(static_cast<Index>(e));
    return out;
  }

  ModelParams mp_;
  ExpansionConfig cfg_;
  Activities act_;
  CellComplex cx_;
  PolymerPool pool_;
};

inline ExpansionResult truncated_log_ratio(const ModelParams& mp, const PathPolymer& gn, const PathPolymer& g0,
                                           const ExpansionConfig& cfg) {
  ClusterExpansion ce(mp, cfg);
  return ce.log_ratio(gn, g0);
}

// Path-only clusters of the whole box, stored once; weight(gamma) = t^{|gamma|} exp(-sum_{C ~ gamma} Psi(C)).
class VarthetaMeasure {
 public:
  VarthetaMeasure(const BoxSpec& box, double kappa, ExpansionConfig cfg, Convention conv = Convention::AllOriented)
      : cx_(box), cfg_(cfg) {
    cfg_.max_norm2 = 0;
    cfg_.validate();
    act_ = Activities{ModelParams::infinity, kappa, box.dim(), conv};
    if (!std::isfinite(kappa) || kappa < 0) throw PreconditionError("kappa must be finite and >= 0");
    PolymerPool pool(cx_, cfg_.max_norm1, 0);
    std::vector<char> all(pool.size(), 1);
    at_vertex_.assign(cx_.vertices(), {});
    Bits seen(cx_.vertices());
    enumerate_clusters(pool, all, act_, cfg_, [&](const ClusterView& c) {
      if (c.psi == 0.0) return;
      Index id = static_cast<Index>(psi_.size());
      psi_.push_back(c.psi);
      norm_.push_back(c.norm1);
      seen.reset();
      for (Index x : c.types)
        for (Index v : pool.path(x).vertices)
          if (!seen.test(v)) {
            seen.set(v);
            at_vertex_[v].push_back(id);
          }
    });
  }

  const CellComplex& complex() const { return cx_; }
  const Activities& activities() const { return act_; }
  std::size_t clusters() const { return psi_.size(); }

  double cluster_sum(const PathPolymer& g) const {
    std::vector<char> hit(psi_.size(), 0);
    long double s = 0;
    for (Index v : g.vertices)
      for (Index id : at_vertex_[v])
        if (!hit[id]) {
          hit[id] = 1;
          s += psi_[id];
        }
    return static_cast<double>(s);
  }

  double weight(const PathPolymer& g) const {
    if (g.empty()) return 1.0;
    return act_.path(g.length()) * std::exp(-cluster_sum(g));
  }

  // theta({gamma in Lambda^{gamma_n}: minLen < |gamma| <= maxLen})
  double mass(const PathPolymer& gn, int max_len, int min_len_exclusive = -1) const {
    long double s = 0;
    for (const auto& g : enumerate_connecting_paths(cx_, gn, max_len))
      if (g.length() > min_len_exclusive) s += weight(g);
    return static_cast<double>(s);
  }

 private:
  CellComplex cx_;
  ExpansionConfig cfg_;
  Activities act_;
  std::vector<double> psi_;
  std::vector<int> norm_;
  std::vector<std::vector<Index>> at_vertex_;
};

inline double vartheta_weight(const PathPolymer& g, const PathPolymer& gn, double kappa, const BoxSpec& box,
                              const ExpansionConfig& cfg, Convention conv = Convention::AllOriented) {
  CellComplex cx(box);
  auto ends = odd_vertices(cx, g.edges);
  if (ends != odd_vertices(cx, gn.edges) || !is_connected(cx, g)) throw PreconditionError("gamma must lie in Lambda^{gamma_n}");
  return VarthetaMeasure(box, kappa, cfg, conv).weight(g);
}

// Split of the truncated sum for gamma0 = gamma into the minimal-vortex pieces.
struct DecompositionResult {
  double total = 0.0;        // truncated sum over the shared cluster set
  double main = 0.0;         // -2 xi (|gamma_n| + |gamma|)
  double E2 = 0.0;           // 4 xi |gamma_n cap gamma|
  double E2_enumerated = 0.0;  // single minimal vortex clusters minus main and R1
  double R1 = 0.0;           // 2 xi |A outside the bulk|
  double case1 = 0.0;
  double case2 = 0.0;        // sum over Xi^1 of Psi (1(C not~ gamma) - 1)
  double case3 = 0.0;        // enumerated C^1 + one minimal vortex
  double norm_term = 0.0;    // -2 xi sum Psi ||C|| (1(C not~ gamma) - 1)
  double line_term = 0.0;    // 4 xi sum Psi sum_{e in gamma_n} deg e
  double E3 = 0.0;           // -4 xi sum_{C ~ gamma} Psi sum_{e in gamma_n} deg e
  double R3 = 0.0;           // non-bulk edges of C^1
  double E1 = 0.0;           // everything else, summed directly
  std::size_t clusters = 0;

  double pieces() const { return main + E2 + R1 + case2 + norm_term + line_term + E3 + R3 + E1; }
};

inline DecompositionResult minimal_vortex_decomposition(const ClusterExpansion& ce, const PathPolymer& gn, const PathPolymer& g) {
  const auto& cx = ce.complex();
  const auto& pool = ce.pool();
  const auto& act = ce.activities();
  const auto& cfg = ce.config();
  if (odd_vertices(cx, g.edges) != odd_vertices(cx, gn.edges)) throw PreconditionError("gamma must connect the endpoints of gamma_n");
  const double xi = act.xi();
  const std::size_t N = pool.size();
  Bits gn_bits = edge_bits(cx, gn), g_bits = edge_bits(cx, g);
  Bits A = gn_bits ^ g_bits;
  Bits q = detail::surface_of(cx, A);
  Bits near = detail::vertex_bits(cx, g);
  std::vector<char> bulk(cx.edges(), 0);
  for (Index e = 0; e < cx.edges(); ++e) bulk[e] = edge_is_bulk(cx, e);
  std::vector<char> active(N, 0), adj(N, 0), flip(N, 0), on_line(N, 0);
  for (Index i = 0; i < N; ++i) {
    if (pool.is_path(i)) {
      for (Index v : pool.path(i).vertices)
        if (near.test(v)) adj[i] = 1;
      for (Index e : pool.path(i).edges)
        if (gn_bits.test(e)) on_line[i] = 1;
      active[i] = adj[i] || on_line[i];
    } else {
      flip[i] = pool.flips(i, q);
      active[i] = flip[i];
    }
  }
  DecompositionResult r;
  long double total = 0, c1 = 0, c2 = 0, c3 = 0, e1 = 0, nt = 0, lt = 0, e3 = 0, r3 = 0;
  std::vector<int> deg(cx.edges(), 0);
  auto stats = enumerate_clusters(pool, active, act, cfg, [&](const ClusterView& c) {
    bool touches = false;
    int sign = 0, vortex_copies = 0, path_copies = 0;
    Index vortex_item = 0;
    for (std::size_t i = 0; i < c.types.size(); ++i) {
      Index x = c.types[i];
      if (adj[x]) touches = true;
      if (flip[x]) sign ^= c.mult[i] & 1;
      if (pool.is_path(x))
        path_copies += c.mult[i];
      else {
        vortex_copies += c.mult[i];
        vortex_item = x;
      }
    }
    double term = c.psi * ((touches ? 0.0 : (sign ? -1.0 : 1.0)) - 1.0);
    total += term;
    bool single_minimal = vortex_copies == 1 && pool.vortex(vortex_item).minimal();
    if (single_minimal && path_copies == 0)
      c1 += term;
    else if (vortex_copies == 0)
      c2 += term;
    else if (single_minimal)
      c3 += term;
    else
      e1 += term;
    // case (iii) rewritten through C^1 alone, for every C^1 that leaves room for one vortex
    if (vortex_copies == 0 && c.size + 1 <= cfg.max_cluster_size && 2 * (cx.dim() - 1) <= cfg.max_norm2) {
      std::vector<Index> touched;
      for (std::size_t i = 0; i < c.types.size(); ++i)
        for (Index e : pool.path(c.types[i]).edges) {
          if (deg[e] == 0) touched.push_back(e);
          deg[e] += c.mult[i];
        }
      double away = touches ? 0.0 : 1.0;
      long double line = 0;
      for (Index e : touched) {
        if (gn_bits.test(e)) line += deg[e];
        if (!bulk[e]) r3 += 2.0 * xi * c.psi * deg[e] * ((1.0 - 2.0 * (A.test(e) ? 1.0 : 0.0)) * away - 1.0);
        deg[e] = 0;
      }
      nt += -2.0 * xi * c.psi * c.norm1 * (away - 1.0);
      lt += 4.0 * xi * c.psi * line;
      if (touches) e3 += -4.0 * xi * c.psi * line;
    }
  });
  std::size_t a_bulk = 0, a_all = A.count();
  for (auto e = A.find_first(); e != Bits::npos; e = A.find_next(e)) a_bulk += bulk[e] ? 1 : 0;
  std::size_t shared = (gn_bits & g_bits).count();
  r.clusters = stats.clusters;
  r.total = static_cast<double>(total);
  r.main = -2.0 * xi * (gn.length() + g.length());
  r.E2 = 4.0 * xi * static_cast<double>(shared);
  r.R1 = 2.0 * xi * static_cast<double>(a_all - a_bulk);
  r.case1 = static_cast<double>(c1);
  r.E2_enumerated = static_cast<double>(c1 - r.main - r.R1);
  r.case2 = static_cast<double>(c2);
  r.case3 = static_cast<double>(c3);
  r.norm_term = static_cast<double>(nt);
  r.line_term = static_cast<double>(lt);
  r.E3 = static_cast<double>(e3);
  r.R3 = static_cast<double>(r3);
  r.E1 = static_cast<double>(e1);
  return r;
}

struct BoundCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  double margin() const { return rhs - lhs; }
};

struct BoundReport {
  std::vector<BoundCheck> checks;
  std::vector<double> D;         // truncated D_0, D_1, D_2
  double vartheta_total = 0.0;
  bool hypotheses_hold = false;  // against the configured reference thresholds
  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const BoundCheck& c) { return c.pass; });
  }
  const BoundCheck& at(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    throw PreconditionError("no bound check named " + name);
  }
};

struct BoundOptions {
  int K = 4;             // lower norm for the power-cluster sum
  int power = 1;
  int max_len0 = 8;      // connecting paths kept in the theta sums
  int large_K = -1;      // |gamma| threshold for the theta tail, -1 = |gamma_n| + 2
};

// sum_{k >= K} k^p x^k
inline double power_series_tail(int K, int p, double x) {
  if (x >= 1) return std::numeric_limits<double>::infinity();
  long double s = 0, term;
  for (int k = std::max(K, 1);; ++k) {
    term = std::pow(static_cast<long double>(k), p) * std::pow(static_cast<long double>(x), k);
    s += term;
    if (k > K + 10 && term < 1e-30L * s) break;
    if (k > K + 100000) break;
  }
  if (K <= 0 && p == 0) s += 1;
  return static_cast<double>(s);
}

// Truncated left-hand sides of the bound lemmas against their closed-form right-hand sides.
inline BoundReport bound_diagnostics(const ModelParams& mp, const ExpansionConfig& cfg, const PathPolymer& gn,
                                     BoundOptions opt = {}) {
  mp.validate();
  cfg.validate();
  BoundReport rep;
  const Activities act = Activities::from(mp);
  const double t = act.t();
  const int m = mp.box.dim();
  CellComplex cx(mp.box);
  const std::size_t E = cx.edges();
  rep.hypotheses_hold = mp.kappa < cfg.kappa0 && std::pow(t, cfg.a) < std::tanh(act.factor() * cfg.kappa0) &&
                        cfg.a * mp.beta > cfg.beta0;

  // path-only clusters indexed by the edges they cover
  {
    PolymerPool pool(cx, cfg.max_norm1, 0);
    std::vector<char> all(pool.size(), 1);
    ExpansionConfig c1 = cfg;
    c1.max_norm2 = 0;
    std::vector<long double> lhs(E, 0);
    std::vector<std::vector<long double>> D(3, std::vector<long double>(E, 0));
    Bits cover(E);
    enumerate_clusters(pool, all, act, c1, [&](const ClusterView& c) {
      double w = std::fabs(c.psi);
      if (w == 0) return;
      cover.reset();
      for (Index x : c.types)
        for (Index e : pool.path(x).edges) cover.set(e);
      double n = c.norm1;
      for (auto e = cover.find_first(); e != Bits::npos; e = cover.find_next(e)) {
        if (c.norm1 >= opt.K) lhs[e] += w * std::pow(n, opt.power);
        for (int p = 0; p < 3; ++p) D[p][e] += w * std::pow(n, p);
      }
    });
    BoundCheck pc{"power_cluster"};
    pc.lhs = static_cast<double>(*std::max_element(lhs.begin(), lhs.end()));
    pc.rhs = std::pow(t, cfg.a * (1 - cfg.alpha)) * power_series_tail(opt.K, opt.power, std::pow(t, 1 - cfg.a));
    pc.pass = pc.lhs <= pc.rhs;
    rep.checks.push_back(pc);
    for (int p = 0; p < 3; ++p) rep.D.push_back(static_cast<double>(*std::max_element(D[p].begin(), D[p].end())));
  }

  // clusters with ||C||_2 > 2(m-1), indexed by the edges they touch
  if (!mp.beta_infinite()) {
    PolymerPool pool(cx, cfg.max_norm1, cfg.max_norm2, cfg.region);
    std::vector<char> all(pool.size(), 1);
    std::vector<long double> lhs(E, 0);
    Bits cover(E);
    enumerate_clusters(pool, all, act, cfg, [&](const ClusterView& c) {
      if (c.norm2 <= 2 * (m - 1) || c.psi == 0) return;
      cover.reset();
      for (Index x : c.types) {
        if (pool.is_path(x))
          for (Index e : pool.path(x).edges) cover.set(e);
        else
          for (Index p : pool.vortex(x).plaquettes)
            for (auto f : cx.faces(2, p)) cover.set(f.cell);
      }
      for (auto e = cover.find_first(); e != Bits::npos; e = cover.find_next(e)) lhs[e] += std::fabs(c.psi);
    });
    BoundCheck sn{"smallest_nonminimal"};
    sn.lhs = static_cast<double>(*std::max_element(lhs.begin(), lhs.end()));
    sn.rhs = std::pow(act.xi_hat(), 1 - cfg.a) * std::pow(t, cfg.a * (1 - cfg.alpha));
    sn.pass = sn.lhs <= sn.rhs;
    rep.checks.push_back(sn);
  }

  // theta total and its large-|gamma| tail
  if (!gn.empty()) {
    VarthetaMeasure theta(mp.box, mp.kappa, cfg, mp.convention);
    rep.vartheta_total = theta.mass(gn, opt.max_len0);
    BoundCheck vt{"vartheta_total"};
    vt.lhs = rep.vartheta_total;
    vt.rhs = 1.0;
    vt.pass = vt.lhs > 0 && vt.lhs <= 1.0;
    rep.checks.push_back(vt);
    int K = opt.large_K >= 0 ? opt.large_K : gn.length() + 2;
    BoundCheck lg{"large_gamma0"};
    lg.lhs = theta.mass(gn, opt.max_len0, K);
    double r = 2.0 * m * t * std::exp(2.0 * std::pow(t, 1 - cfg.alpha));
    lg.rhs = r < 1 ? std::pow(r, K) / (1 - r) : std::numeric_limits<double>::infinity();
    lg.pass = lg.lhs <= lg.rhs;
    rep.checks.push_back(lg);
  }
  return rep;
}

// one cluster per line: norms, size, U, Psi, then "type*mult" items
inline void dump_cluster(std::ostream& os, const PolymerPool& pool, const ClusterView& c) {
  os << "cluster " << c.norm1 << ' ' << c.norm2 << ' ' << c.size << ' ' << c.U << ' ' << c.psi;
  for (std::size_t i = 0; i < c.types.size(); ++i) os << ' ' << (pool.is_path(c.types[i]) ? 'p' : 'v') << c.types[i] << '*' << c.mult[i];
  os << '\n';
}

}  // namespace z2higgs
