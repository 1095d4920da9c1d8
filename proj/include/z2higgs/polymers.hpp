#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <boost/dynamic_bitset.hpp>

#include "z2higgs/lattice.hpp"

namespace z2higgs {

using Bits = boost::dynamic_bitset<>;

// Z2 edge support with canonical +1 coefficients.
struct PathPolymer {
  std::vector<Index> edges;     // sorted positive edge indices
  std::vector<Index> vertices;  // sorted vertices met by the support

  int length() const { return static_cast<int>(edges.size()); }
  bool empty() const { return edges.empty(); }
  bool operator==(const PathPolymer& o) const { return edges == o.edges; }
  bool operator<(const PathPolymer& o) const {
    if (edges.size() != o.edges.size()) return edges.size() < o.edges.size();
    return edges < o.edges;
  }
};

inline PathPolymer make_path(const CellComplex& cx, std::vector<Index> edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  PathPolymer p;
  for (Index e : edges) {
    if (e >= cx.edges()) throw DimensionError("edge index outside box");
    p.vertices.push_back(cx.edge_tail(e));
    p.vertices.push_back(cx.edge_head(e));
  }
  std::sort(p.vertices.begin(), p.vertices.end());
  p.vertices.erase(std::unique(p.vertices.begin(), p.vertices.end()), p.vertices.end());
  p.edges = std::move(edges);
  return p;
}

// symmetric difference of supports
inline PathPolymer path_sum(const CellComplex& cx, const PathPolymer& a, const PathPolymer& b) {
  std::vector<Index> out;
  std::set_symmetric_difference(a.edges.begin(), a.edges.end(), b.edges.begin(), b.edges.end(), std::back_inserter(out));
  return make_path(cx, std::move(out));
}

inline Chain path_chain(const CellComplex& cx, const PathPolymer& p) {
  Chain c(1);
  for (Index e : p.edges) c.add(cx.cell(1, e), 1);
  return c;
}

inline Bits edge_bits(const CellComplex& cx, const PathPolymer& p) {
  Bits b(cx.edges());
  for (Index e : p.edges) b.set(e);
  return b;
}

inline std::vector<Index> odd_vertices(const CellComplex& cx, const std::vector<Index>& edges) {
  std::map<Index, int> deg;
  for (Index e : edges) {
    deg[cx.edge_tail(e)] ^= 1;
    deg[cx.edge_head(e)] ^= 1;
  }
  std::vector<Index> out;
  for (auto [v, d] : deg)
    if (d) out.push_back(v);
  return out;
}

inline bool is_closed(const CellComplex& cx, const PathPolymer& p) { return odd_vertices(cx, p.edges).empty(); }

// vertex connectivity of the support
inline bool is_connected(const CellComplex& cx, const PathPolymer& p) {
  if (p.edges.empty()) return false;
  std::map<Index, Index> parent;
  std::function<Index(Index)> find = [&](Index v) {
    auto it = parent.find(v);
    if (it == parent.end()) return parent[v] = v;
    if (it->second == v) return v;
    return it->second = find(it->second);
  };
  for (Index e : p.edges) {
    Index a = find(cx.edge_tail(e)), b = find(cx.edge_head(e));
    if (a != b) parent[a] = b;
  }
  Index r = find(p.vertices.front());
  for (Index v : p.vertices)
    if (find(v) != r) return false;
  return true;
}

// Straight line of n edges along an axis starting at a vertex.
inline PathPolymer straight_path(const CellComplex& cx, const Vec& start, int axis, int n) {
  if (axis < 0 || axis >= cx.dim()) throw DimensionError("axis out of range");
  if (n < 0) throw PreconditionError("negative line length");
  std::vector<Index> edges;
  Vec x = start;
  for (int i = 0; i < n; ++i) {
    Cell e(x, 1u << axis);
    if (!cx.contains(e)) throw DimensionError("line does not fit the box");
    edges.push_back(cx.index(e));
    x[axis] += 1;
  }
  return make_path(cx, std::move(edges));
}

inline bool sorted_intersect(const std::vector<Index>& a, const std::vector<Index>& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j)
      ++i;
    else if (*j < *i)
      ++j;
    else
      return true;
  }
  return false;
}

// paths share a vertex
inline bool path_adjacent(const PathPolymer& a, const PathPolymer& b) { return sorted_intersect(a.vertices, b.vertices); }

struct VortexPolymer {
  std::vector<Index> plaquettes;  // sorted positive support
  std::vector<Index> cubes;       // sorted 3-cells meeting the support
  long minimal_edge = -1;         // e with omega = d sigma_e, when minimal

  int support_size() const { return static_cast<int>(plaquettes.size()); }
  bool minimal() const { return minimal_edge >= 0; }
  bool operator==(const VortexPolymer& o) const { return plaquettes == o.plaquettes; }
  bool operator<(const VortexPolymer& o) const {
    if (plaquettes.size() != o.plaquettes.size()) return plaquettes.size() < o.plaquettes.size();
    return plaquettes < o.plaquettes;
  }
};

inline Z2Form vortex_form(const CellComplex& cx, const VortexPolymer& v) {
  Z2Form w(cx, 2);
  for (Index p : v.plaquettes) w.support.set(p);
  return w;
}

inline Bits plaquette_bits(const CellComplex& cx, const std::vector<Index>& ps) {
  Bits b(cx.plaquettes());
  for (Index p : ps) b.set(p);
  return b;
}

// Edges whose coboundary in the box is a connected set of 2(m-1) plaquettes.
inline bool edge_is_bulk(const CellComplex& cx, Index e) {
  const auto& cof = cx.cofaces(1, e);
  if (static_cast<int>(cof.size()) != 2 * (cx.dim() - 1)) return false;
  if (cx.dim() == 2) return false;  // two plaquettes with no common 3-cell
  // connectivity in the plaquette graph through shared 3-cells
  std::vector<Index> ps;
  for (auto f : cof) ps.push_back(f.cell);
  std::vector<int> seen(ps.size(), 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < ps.size(); ++j) {
      if (seen[j]) continue;
      bool share = false;
      for (auto c1 : cx.cofaces(2, ps[i]))
        for (auto c2 : cx.cofaces(2, ps[j]))
          if (c1.cell == c2.cell) share = true;
      if (share) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int s) { return s; });
}

inline VortexPolymer make_vortex(const CellComplex& cx, std::vector<Index> ps) {
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  VortexPolymer v;
  if (cx.dim() >= 3)
    for (Index p : ps)
      for (auto c : cx.cofaces(2, p)) v.cubes.push_back(c.cell);
  std::sort(v.cubes.begin(), v.cubes.end());
  v.cubes.erase(std::unique(v.cubes.begin(), v.cubes.end()), v.cubes.end());
  if (!ps.empty() && static_cast<int>(ps.size()) == 2 * (cx.dim() - 1)) {
    for (auto f : cx.faces(2, ps.front())) {
      std::vector<Index> cob;
      for (auto g : cx.cofaces(1, f.cell)) cob.push_back(g.cell);
      std::sort(cob.begin(), cob.end());
      if (cob == ps && edge_is_bulk(cx, f.cell)) {
        v.minimal_edge = f.cell;
        break;
      }
    }
  }
  v.plaquettes = std::move(ps);
  return v;
}

// d sigma_e as a vortex (may be non-minimal or disconnected near the boundary)
inline VortexPolymer edge_vortex(const CellComplex& cx, Index e) {
  std::vector<Index> ps;
  for (auto f : cx.cofaces(1, e)) ps.push_back(f.cell);
  return make_vortex(cx, std::move(ps));
}

// shared plaquette or shared 3-cell
inline bool vortex_adjacent(const VortexPolymer& a, const VortexPolymer& b) {
  return sorted_intersect(a.plaquettes, b.plaquettes) || sorted_intersect(a.cubes, b.cubes);
}

inline bool is_closed(const CellComplex& cx, const VortexPolymer& v) {
  if (cx.dim() < 3) return true;
  return differential(cx, vortex_form(cx, v)).zero();
}

struct SpanningSurface {
  std::vector<Index> plaquettes;  // Z2 support with boundary equal to the path mod 2
  PathPolymer boundary_path;
  Bits support;
};

inline Chain surface_chain(const CellComplex& cx, const SpanningSurface& s) {
  Chain c(2);
  for (Index p : s.plaquettes) c.add(cx.cell(2, p), 1);
  return c;
}

// Z2 boundary of a plaquette set
inline std::vector<Index> z2_boundary(const CellComplex& cx, const std::vector<Index>& ps) {
  Bits b(cx.edges());
  for (Index p : ps)
    for (auto f : cx.faces(2, p)) b.flip(f.cell);
  std::vector<Index> out;
  for (auto i = b.find_first(); i != Bits::npos; i = b.find_next(i)) out.push_back(static_cast<Index>(i));
  return out;
}

namespace detail {
inline SpanningSurface finish_surface(const PathPolymer& g, Bits q) {
  SpanningSurface s;
  s.boundary_path = g;
  for (auto i = q.find_first(); i != Bits::npos; i = q.find_next(i)) s.plaquettes.push_back(static_cast<Index>(i));
  s.support = std::move(q);
  return s;
}
}  // namespace detail

// Staircase projection: push edges down along the last axis to the base hyperplane, then recurse.
inline SpanningSurface spanning_surface(const CellComplex& cx, const PathPolymer& g) {
  if (!is_closed(cx, g)) throw PreconditionError("spanning surface of an open path");
  const BoxSpec& box = cx.box();
  const int m = cx.dim();
  Bits cur = edge_bits(cx, g);
  Bits q(cx.plaquettes());
  for (int L = m - 1; L >= 1; --L) {
    std::vector<Cell> todo;
    for (auto i = cur.find_first(); i != Bits::npos; i = cur.find_next(i)) {
      Cell e = cx.cell(1, static_cast<Index>(i));
      if (!(e.dirs >> L & 1u) && e.base[L] > box.extents[L].lo) todo.push_back(e);
    }
    for (const Cell& e : todo) {
      for (int h = e.base[L] - 1; h >= box.extents[L].lo; --h) {
        Vec b = e.base;
        b[L] = h;
        Index p = cx.index(Cell(b, e.dirs | (1u << L)));
        q.flip(p);
        for (auto f : cx.faces(2, p)) cur.flip(f.cell);
      }
    }
    for (auto i = cur.find_first(); i != Bits::npos; i = cur.find_next(i))
      if (cx.cell(1, static_cast<Index>(i)).dirs >> L & 1u) throw NumericError("staircase projection left a vertical edge");
  }
  if (cur.any()) throw NumericError("staircase projection did not close");
  return detail::finish_surface(g, std::move(q));
}

// Second construction: GF(2) elimination on the edge-plaquette incidence matrix.
inline SpanningSurface spanning_surface_elimination(const CellComplex& cx, const PathPolymer& g) {
  if (!is_closed(cx, g)) throw PreconditionError("spanning surface of an open path");
  const std::size_t E = cx.edges(), P = cx.plaquettes();
  std::vector<Bits> rows(E, Bits(P + 1));
  for (Index p = 0; p < P; ++p)
    for (auto f : cx.faces(2, p)) rows[f.cell].set(p);
  for (Index e : g.edges) rows[e].set(P);
  // eliminate from the highest plaquette index down so the pivots differ from the staircase choice
  std::vector<long> pivot_row(P, -1);
  std::size_t r = 0;
  for (std::size_t col = P; col-- > 0;) {
    std::size_t sel = r;
    while (sel < E && !rows[sel].test(col)) ++sel;
    if (sel == E) continue;
    std::swap(rows[sel], rows[r]);
    for (std::size_t i = 0; i < E; ++i)
      if (i != r && rows[i].test(col)) rows[i] ^= rows[r];
    pivot_row[col] = static_cast<long>(r);
    ++r;
  }
  for (std::size_t i = r; i < E; ++i)
    if (rows[i].test(P)) throw NumericError("boundary equation inconsistent");
  Bits q(P);
  for (std::size_t col = 0; col < P; ++col)
    if (pivot_row[col] >= 0 && rows[pivot_row[col]].test(P)) q.set(col);
  return detail::finish_surface(g, std::move(q));
}

// rho(omega(q_gamma)) for a closed path through its surface
inline int iota_vortex_path(const VortexPolymer& w, const SpanningSurface& s) {
  int par = 0;
  for (Index p : w.plaquettes) par ^= s.support.test(p) ? 1 : 0;
  return rho(par);
}

using Polymer = std::variant<PathPolymer, VortexPolymer>;

// Caches one spanning surface per closed path support.
class SurfaceProvider {
 public:
  explicit SurfaceProvider(const CellComplex& cx) : cx_(cx) {}
  const SpanningSurface& get(const PathPolymer& g) {
    auto it = cache_.find(g.edges);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(g.edges, spanning_surface(cx_, g)).first->second;
  }

 private:
  const CellComplex& cx_;
  std::map<std::vector<Index>, SpanningSurface> cache_;
};

// iota in {-1,0,1}; zeta = 1 - iota
inline int interaction_iota(const Polymer& a, const Polymer& b, SurfaceProvider& surfaces) {
  if (auto pa = std::get_if<PathPolymer>(&a)) {
    if (auto pb = std::get_if<PathPolymer>(&b)) return path_adjacent(*pa, *pb) ? 0 : 1;
    return iota_vortex_path(std::get<VortexPolymer>(b), surfaces.get(*pa));
  }
  const auto& va = std::get<VortexPolymer>(a);
  if (auto pb = std::get_if<PathPolymer>(&b)) return iota_vortex_path(va, surfaces.get(*pb));
  return vortex_adjacent(va, std::get<VortexPolymer>(b)) ? 0 : 1;
}

inline int interaction_zeta(const Polymer& a, const Polymer& b, SurfaceProvider& surfaces) {
  return 1 - interaction_iota(a, b, surfaces);
}

// ESU-style enumeration of connected subsets whose least element (by rank) is the root.
// Hooks: add(x), remove(x), prune(size) -> bool, visit(set).
template <class Hooks>
class ConnectedSetEnumerator {
 public:
  ConnectedSetEnumerator(const std::vector<std::vector<Index>>& nbr, const std::vector<Index>& rank, std::size_t max_size,
                         Hooks& hooks)
      : nbr_(nbr), rank_(rank), max_size_(max_size), hooks_(hooks), in_set_(nbr.size(), 0), touch_(nbr.size(), 0) {}

  void run_root(Index root) {
    root_ = root;
    push(root);
    std::vector<Index> ext;
    for (Index u : nbr_[root])
      if (rank_[u] > rank_[root]) ext.push_back(u);
    recurse(ext);
    pop(root);
  }

 private:
  void push(Index x) {
    set_.push_back(x);
    in_set_[x] = 1;
    for (Index u : nbr_[x]) ++touch_[u];
    hooks_.add(x);
  }
  void pop(Index x) {
    hooks_.remove(x);
    for (Index u : nbr_[x]) --touch_[u];
    in_set_[x] = 0;
    set_.pop_back();
  }
  // optional hook: can item u still join the current set
  bool fits(Index u) const {
    if constexpr (requires { hooks_.fits(u); })
      return hooks_.fits(u);
    else
      return true;
  }
  void recurse(std::vector<Index> ext) {
    if (hooks_.prune(set_.size())) return;
    hooks_.visit(set_);
    if (set_.size() >= max_size_) return;
    while (!ext.empty()) {
      Index w = ext.back();
      ext.pop_back();
      if (!fits(w)) continue;
      push(w);
      std::vector<Index> next;
      if (set_.size() < max_size_) {
        next.reserve(ext.size() + nbr_[w].size());
        for (Index u : ext)
          if (fits(u)) next.push_back(u);
        for (Index u : nbr_[w])
          if (rank_[u] > rank_[root_] && !in_set_[u] && touch_[u] == 1 && u != w && fits(u)) next.push_back(u);
      }
      recurse(std::move(next));
      pop(w);
    }
  }

  const std::vector<std::vector<Index>>& nbr_;
  const std::vector<Index>& rank_;
  std::size_t max_size_;
  Hooks& hooks_;
  std::vector<char> in_set_;
  std::vector<int> touch_;
  std::vector<Index> set_;
  Index root_ = 0;
};

struct EnumerationLimits {
  std::size_t max_results = 20'000'000;
};

namespace detail {

inline std::vector<std::vector<Index>> edge_line_graph(const CellComplex& cx) {
  std::vector<std::vector<Index>> nbr(cx.edges());
  for (Index e = 0; e < cx.edges(); ++e)
    for (Index v : {cx.edge_tail(e), cx.edge_head(e)})
      for (auto f : cx.cofaces(0, v))
        if (f.cell != e) nbr[e].push_back(f.cell);
  return nbr;
}

// Tracks odd-degree vertices; lower bound on extra edges via nearest-odd-partner distances.
struct ParityPathHooks {
  const CellComplex& cx;
  std::vector<Vec> coord;
  std::vector<char> odd;
  std::vector<Index> odd_list;
  std::vector<long> odd_pos;
  std::vector<Index> targets;  // vertices required to be odd in the final support
  std::size_t max_len;
  std::size_t limit;
  std::vector<PathPolymer>& out;

  ParityPathHooks(const CellComplex& c, std::vector<Index> tgt, std::size_t ml, std::size_t lim, std::vector<PathPolymer>& o)
      : cx(c), odd(c.vertices(), 0), odd_pos(c.vertices(), -1), targets(std::move(tgt)), max_len(ml), limit(lim), out(o) {
    coord.reserve(cx.vertices());
    for (Index v = 0; v < cx.vertices(); ++v) coord.push_back(cx.cell(0, v).base);
    for (Index t : targets) toggle(t);
  }
  void toggle(Index v) {
    if (odd[v]) {
      odd[v] = 0;
      long pos = odd_pos[v];
      Index last = odd_list.back();
      odd_list[pos] = last;
      odd_pos[last] = pos;
      odd_list.pop_back();
      odd_pos[v] = -1;
    } else {
      odd[v] = 1;
      odd_pos[v] = static_cast<long>(odd_list.size());
      odd_list.push_back(v);
    }
  }
  int dist(Index a, Index b) const {
    int s = 0;
    for (std::size_t d = 0; d < coord[a].size(); ++d) s += std::abs(coord[a][d] - coord[b][d]);
    return s;
  }
  std::size_t lower_bound() const {
    if (odd_list.empty()) return 0;
    long total = 0;
    for (std::size_t i = 0; i < odd_list.size(); ++i) {
      int best = std::numeric_limits<int>::max();
      for (std::size_t j = 0; j < odd_list.size(); ++j)
        if (i != j) best = std::min(best, dist(odd_list[i], odd_list[j]));
      total += best;
    }
    return static_cast<std::size_t>((total + 1) / 2);
  }
  void add(Index e) {
    toggle(cx.edge_tail(e));
    toggle(cx.edge_head(e));
  }
  void remove(Index e) { add(e); }
  bool prune(std::size_t size) const { return size + lower_bound() > max_len; }
  void visit(const std::vector<Index>& set) {
    if (!odd_list.empty()) return;
    out.push_back(make_path(cx, set));
    if (out.size() > limit)
      throw ResourceError("path enumeration exceeded the result budget after " + std::to_string(out.size()) + " supports");
  }
};

}  // namespace detail

// Connected closed supports with 1 <= |gamma| <= maxLen, sorted by (length, edges).
inline std::vector<PathPolymer> enumerate_closed_paths(const CellComplex& cx, int max_len, EnumerationLimits lim = {}) {
  std::vector<PathPolymer> out;
  if (max_len < 4) return out;
  auto nbr = detail::edge_line_graph(cx);
  std::vector<Index> rank(cx.edges());
  for (Index e = 0; e < cx.edges(); ++e) rank[e] = e;
  detail::ParityPathHooks hooks(cx, {}, static_cast<std::size_t>(max_len), lim.max_results, out);
  ConnectedSetEnumerator<detail::ParityPathHooks> esu(nbr, rank, static_cast<std::size_t>(max_len), hooks);
  for (Index e = 0; e < cx.edges(); ++e) esu.run_root(e);
  std::sort(out.begin(), out.end());
  return out;
}

// Connected supports gamma with odd vertices exactly the endpoints of gamma_n, |gamma| <= maxLen.
inline std::vector<PathPolymer> enumerate_connecting_paths(const CellComplex& cx, const PathPolymer& gn, int max_len,
                                                           EnumerationLimits lim = {}) {
  auto ends = odd_vertices(cx, gn.edges);
  std::vector<PathPolymer> out;
  if (ends.empty()) {
    out.push_back(PathPolymer{});
    return out;
  }
  if (ends.size() != 2) throw PreconditionError("gamma_n must have exactly two boundary vertices");
  if (max_len < 1) return out;
  auto nbr = detail::edge_line_graph(cx);
  // edges at the first endpoint come first, so every valid support has its least element there
  std::vector<Index> order;
  std::vector<char> first(cx.edges(), 0);
  for (auto f : cx.cofaces(0, ends[0])) {
    order.push_back(f.cell);
    first[f.cell] = 1;
  }
  std::sort(order.begin(), order.end());
  std::size_t roots = order.size();
  for (Index e = 0; e < cx.edges(); ++e)
    if (!first[e]) order.push_back(e);
  std::vector<Index> rank(cx.edges());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = static_cast<Index>(i);
  detail::ParityPathHooks hooks(cx, ends, static_cast<std::size_t>(max_len), lim.max_results, out);
  ConnectedSetEnumerator<detail::ParityPathHooks> esu(nbr, rank, static_cast<std::size_t>(max_len), hooks);
  for (std::size_t i = 0; i < roots; ++i) esu.run_root(order[i]);
  std::sort(out.begin(), out.end());
  // the given line leads when it is itself a shortest connecting support
  auto it = std::find(out.begin(), out.end(), gn);
  if (it != out.end() && it->length() == out.front().length()) std::rotate(out.begin(), it, it + 1);
  return out;
}

enum class VortexRegion { All, Bulk };

namespace detail {

struct VortexHooks {
  const CellComplex& cx;
  std::vector<int> parity;
  std::size_t odd = 0;
  std::size_t max_support;
  std::size_t limit;
  std::vector<VortexPolymer>& out;

  void add(Index p) {
    for (auto c : cx.cofaces(2, p)) {
      parity[c.cell] ^= 1;
      if (parity[c.cell])
        ++odd;
      else
        --odd;
    }
  }
  void remove(Index p) { add(p); }
  // each extra plaquette fixes at most two 3-cells
  bool prune(std::size_t size) const { return size + (odd + 1) / 2 > max_support; }
  void visit(const std::vector<Index>& set) {
    if (odd) return;
    out.push_back(make_vortex(cx, set));
    if (out.size() > limit)
      throw ResourceError("vortex enumeration exceeded the result budget after " + std::to_string(out.size()) + " forms");
  }
};

}  // namespace detail

// Closed 2-forms with G2-connected support of size <= maxSupport, sorted.
inline std::vector<VortexPolymer> enumerate_vortices(const CellComplex& cx, int max_support,
                                                     VortexRegion region = VortexRegion::All, EnumerationLimits lim = {}) {
  std::vector<VortexPolymer> out;
  if (max_support < 1) return out;
  const std::size_t P = cx.plaquettes();
  std::vector<char> allowed(P, 1);
  if (region == VortexRegion::Bulk)
    for (Index p = 0; p < P; ++p) allowed[p] = cx.plaquette_on_surface(p) ? 0 : 1;
  std::vector<std::vector<Index>> nbr(P);
  if (cx.dim() >= 3) {
    for (Index p = 0; p < P; ++p) {
      if (!allowed[p]) continue;
      for (auto c : cx.cofaces(2, p))
        for (auto f : cx.faces(3, c.cell))
          if (f.cell != p && allowed[f.cell]) nbr[p].push_back(f.cell);
      std::sort(nbr[p].begin(), nbr[p].end());
      nbr[p].erase(std::unique(nbr[p].begin(), nbr[p].end()), nbr[p].end());
    }
  }
  std::vector<Index> rank(P);
  for (Index p = 0; p < P; ++p) rank[p] = p;
  detail::VortexHooks hooks{cx, std::vector<int>(cx.cubes(), 0), 0, static_cast<std::size_t>(max_support), lim.max_results, out};
  ConnectedSetEnumerator<detail::VortexHooks> esu(nbr, rank, static_cast<std::size_t>(max_support), hooks);
  for (Index p = 0; p < P; ++p)
    if (allowed[p]) esu.run_root(p);
  std::sort(out.begin(), out.end());
  return out;
}

// one canonical polymer per line
inline void dump_paths(std::ostream& os, const CellComplex& cx, const std::vector<PathPolymer>& ps) {
  for (const auto& p : ps) {
    os << "path " << p.length();
    for (Index e : p.edges) os << ' ' << to_string(cx.cell(1, e));
    os << '\n';
  }
}

inline void dump_vortices(std::ostream& os, const CellComplex& cx, const std::vector<VortexPolymer>& vs) {
  for (const auto& v : vs) {
    os << "vortex " << v.support_size() << (v.minimal() ? " minimal" : "");
    for (Index p : v.plaquettes) os << ' ' << to_string(cx.cell(2, p));
    os << '\n';
  }
}

}  // namespace z2higgs
