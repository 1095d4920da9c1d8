#pragma once

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/dynamic_bitset.hpp>

#include "z2higgs/errors.hpp"

namespace z2higgs {

using Index = std::uint32_t;
using Vec = std::vector<int>;

// Z2 element stored as 0/1; rho(0) = 1, rho(1) = -1.
inline int rho(int a) { return (a & 1) ? -1 : 1; }

struct Interval {
  int lo = 0;
  int hi = 0;
  int length() const { return hi - lo; }
};

struct BoxSpec {
  std::vector<Interval> extents;

  BoxSpec() = default;
  explicit BoxSpec(std::vector<Interval> e) : extents(std::move(e)) { validate(); }

  // [0,s_0] x ... x [0,s_{m-1}]
  static BoxSpec sizes(std::vector<int> s) {
    std::vector<Interval> e;
    for (int v : s) e.push_back({0, v});
    return BoxSpec(std::move(e));
  }
  // [-N,N]^m
  static BoxSpec cube(int m, int N) { return BoxSpec(std::vector<Interval>(m, Interval{-N, N})); }

  int dim() const { return static_cast<int>(extents.size()); }

  void validate() const {
    if (extents.size() < 2) throw DimensionError("box dimension must be >= 2");
    if (extents.size() > 16) throw DimensionError("box dimension too large");
    for (const auto& iv : extents)
      if (iv.hi < iv.lo) throw DimensionError("empty box interval");
  }

  bool contains(const Vec& x) const {
    if (x.size() != extents.size()) return false;
    for (std::size_t d = 0; d < x.size(); ++d)
      if (x[d] < extents[d].lo || x[d] > extents[d].hi) return false;
    return true;
  }

  bool operator==(const BoxSpec& o) const {
    if (extents.size() != o.extents.size()) return false;
    for (std::size_t d = 0; d < extents.size(); ++d)
      if (extents[d].lo != o.extents[d].lo || extents[d].hi != o.extents[d].hi) return false;
    return true;
  }
};

// Oriented k-cell [base; dirs] with dirs a bitmask of axes (ascending order is implicit).
struct Cell {
  int k = 0;
  Vec base;
  std::uint32_t dirs = 0;
  int sign = 1;

  Cell() = default;
  Cell(Vec b, std::uint32_t d, int s = 1) : k(std::popcount(d)), base(std::move(b)), dirs(d), sign(s) {}

  Cell negated() const {
    Cell c = *this;
    c.sign = -sign;
    return c;
  }
  Cell positive() const {
    Cell c = *this;
    c.sign = 1;
    return c;
  }
  std::vector<int> axes() const {
    std::vector<int> a;
    for (int d = 0; d < 32; ++d)
      if (dirs >> d & 1u) a.push_back(d);
    return a;
  }

  // orientation-blind ordering, used for chain keys
  bool operator<(const Cell& o) const {
    if (k != o.k) return k < o.k;
    if (dirs != o.dirs) return dirs < o.dirs;
    return base < o.base;
  }
  bool operator==(const Cell& o) const { return k == o.k && dirs == o.dirs && base == o.base && sign == o.sign; }
};

// "k:(x1,..,xm):d1d2..dk:+"
inline std::string to_string(const Cell& c) {
  std::ostringstream os;
  os << c.k << ":(";
  for (std::size_t i = 0; i < c.base.size(); ++i) os << (i ? "," : "") << c.base[i];
  os << "):";
  for (int d : c.axes()) os << d;
  os << ':' << (c.sign > 0 ? '+' : '-');
  return os.str();
}

inline Cell parse_cell(std::string_view s) {
  auto bad = [&] { return DimensionError("malformed cell text: " + std::string(s)); };
  auto c1 = s.find(':');
  auto open = s.find('(');
  auto close = s.find(')');
  if (c1 == std::string_view::npos || open != c1 + 1 || close == std::string_view::npos) throw bad();
  if (close + 1 >= s.size() || s[close + 1] != ':') throw bad();
  auto c3 = s.find(':', close + 2);
  if (c3 == std::string_view::npos || c3 + 2 != s.size()) throw bad();
  int k = std::stoi(std::string(s.substr(0, c1)));
  Vec base;
  std::string inner(s.substr(open + 1, close - open - 1));
  std::stringstream ss(inner);
  std::string tok;
  while (std::getline(ss, tok, ',')) base.push_back(std::stoi(tok));
  std::uint32_t dirs = 0;
  int prev = -1;
  for (char ch : s.substr(close + 2, c3 - close - 2)) {
    if (ch < '0' || ch > '9') throw bad();
    int d = ch - '0';
    if (d <= prev) throw bad();
    prev = d;
    dirs |= 1u << d;
  }
  char sg = s[c3 + 1];
  if (sg != '+' && sg != '-') throw bad();
  Cell c(base, dirs, sg == '+' ? 1 : -1);
  if (c.k != k) throw bad();
  for (int d : c.axes())
    if (d >= static_cast<int>(base.size())) throw bad();
  return c;
}

// Integer k-chain; keys are positive cells, zero coefficients are never stored.
class Chain {
 public:
  explicit Chain(int k = 0) : k_(k) {}

  int k() const { return k_; }
  const std::map<Cell, long>& coeffs() const { return coeffs_; }
  bool empty() const { return coeffs_.empty(); }
  std::size_t size() const { return coeffs_.size(); }

  void add(const Cell& c, long v) {
    if (c.k != k_) throw DimensionError("chain dimension mismatch");
    if (v == 0) return;
    Cell p = c.positive();
    long& slot = coeffs_[p];
    slot += c.sign * v;
    if (slot == 0) coeffs_.erase(p);
  }
  void add(const Chain& o, long scale = 1) {
    if (o.k_ != k_) throw DimensionError("chain dimension mismatch");
    for (const auto& [c, v] : o.coeffs_) add(c, scale * v);
  }
  long operator[](const Cell& c) const {
    auto it = coeffs_.find(c.positive());
    return it == coeffs_.end() ? 0 : c.sign * it->second;
  }
  bool operator==(const Chain& o) const { return k_ == o.k_ && coeffs_ == o.coeffs_; }

 private:
  int k_;
  std::map<Cell, long> coeffs_;
};

// Cubical boundary: sum_i (-1)^(i-1) ([x + e_{d_i}; D \ d_i] - [x; D \ d_i]), i counted from 1.
inline Chain boundary(const Cell& c) {
  if (c.k <= 0) throw DimensionError("boundary of a 0-cell");
  Chain out(c.k - 1);
  int i = 0;
  for (int d : c.axes()) {
    int s = (i % 2 == 0 ? 1 : -1) * c.sign;
    Cell lower(c.base, c.dirs & ~(1u << d));
    Cell upper = lower;
    upper.base[d] += 1;
    out.add(upper, s);
    out.add(lower, -s);
    ++i;
  }
  return out;
}

inline Chain boundary(const Chain& q) {
  if (q.k() <= 0) throw DimensionError("boundary of a 0-chain");
  Chain out(q.k() - 1);
  for (const auto& [c, v] : q.coeffs()) out.add(boundary(c), v);
  return out;
}

inline bool cell_in_box(const BoxSpec& box, const Cell& c) {
  if (static_cast<int>(c.base.size()) != box.dim()) return false;
  if (c.dirs >> box.dim()) return false;
  for (int d = 0; d < box.dim(); ++d) {
    int top = c.base[d] + ((c.dirs >> d & 1u) ? 1 : 0);
    if (c.base[d] < box.extents[d].lo || top > box.extents[d].hi) return false;
  }
  return true;
}

// Transpose of the boundary, clipped to the box.
inline Chain coboundary(const BoxSpec& box, const Cell& c) {
  if (!cell_in_box(box, c)) throw DimensionError("cell outside box: " + to_string(c));
  if (c.k >= box.dim()) throw DimensionError("coboundary of a top cell");
  Chain out(c.k + 1);
  for (int d = 0; d < box.dim(); ++d) {
    if (c.dirs >> d & 1u) continue;
    for (int shift : {0, -1}) {
      Cell up(c.base, c.dirs | (1u << d));
      up.base[d] += shift;
      if (!cell_in_box(box, up)) continue;
      long v = boundary(up)[c];
      out.add(up, v);
    }
  }
  return out;
}

// Indexing of positive cells of a box, plus incidence tables up to dimension 3.
class CellComplex {
 public:
  struct Incidence {
    Index cell;
    int sign;
  };

  explicit CellComplex(BoxSpec box) : box_(std::move(box)) {
    box_.validate();
    m_ = box_.dim();
    len_.resize(m_);
    for (int d = 0; d < m_; ++d) len_[d] = box_.extents[d].length();
    masks_.assign(m_ + 1, {});
    offsets_.assign(m_ + 1, {});
    slot_.assign(std::size_t{1} << m_, 0);
    for (std::uint32_t mask = 0; mask < (1u << m_); ++mask) masks_[std::popcount(mask)].push_back(mask);
    count_.assign(m_ + 1, 0);
    for (int k = 0; k <= m_; ++k) {
      std::size_t off = 0;
      for (std::size_t j = 0; j < masks_[k].size(); ++j) {
        std::uint32_t mask = masks_[k][j];
        slot_[mask] = j;
        offsets_[k].push_back(off);
        std::size_t n = 1;
        for (int d = 0; d < m_; ++d) n *= static_cast<std::size_t>(len_[d] + ((mask >> d & 1u) ? 0 : 1));
        off += n;
      }
      offsets_[k].push_back(off);
      count_[k] = off;
    }
    int top = std::min(m_, 3);
    bnd_.assign(top + 1, {});
    cobnd_.assign(top + 1, {});
    cobnd_[top].resize(count_[top]);
    for (int k = 1; k <= top; ++k) {
      if (count_[k] > (std::size_t{1} << 26)) throw ResourceError("box too large for incidence tables");
      bnd_[k].resize(count_[k]);
      cobnd_[k - 1].resize(count_[k - 1]);
      for (Index i = 0; i < count_[k]; ++i) {
        Chain b = boundary(cell(k, i));
        for (const auto& [f, v] : b.coeffs()) {
          Index j = index(f);
          bnd_[k][i].push_back({j, static_cast<int>(v)});
          cobnd_[k - 1][j].push_back({i, static_cast<int>(v)});
        }
      }
    }
  }

  const BoxSpec& box() const { return box_; }
  int dim() const { return m_; }
  std::size_t count(int k) const { return (k < 0 || k > m_) ? 0 : count_[k]; }
  std::size_t vertices() const { return count(0); }
  std::size_t edges() const { return count(1); }
  std::size_t plaquettes() const { return count(2); }
  std::size_t cubes() const { return count(3); }

  bool contains(const Cell& c) const { return cell_in_box(box_, c); }

  Index index(const Cell& c) const {
    if (!contains(c)) throw DimensionError("cell outside box: " + to_string(c));
    std::size_t j = slot_[c.dirs];
    std::size_t idx = 0, stride = 1;
    for (int d = 0; d < m_; ++d) {
      int n = len_[d] + ((c.dirs >> d & 1u) ? 0 : 1);
      idx += static_cast<std::size_t>(c.base[d] - box_.extents[d].lo) * stride;
      stride *= static_cast<std::size_t>(n);
    }
    return static_cast<Index>(offsets_[c.k][j] + idx);
  }

  Index vertex_index(const Vec& x) const { return index(Cell(x, 0)); }

  Cell cell(int k, Index idx) const {
    if (k < 0 || k > m_ || idx >= count_[k]) throw DimensionError("cell index out of range");
    const auto& off = offsets_[k];
    std::size_t j = std::upper_bound(off.begin(), off.end(), static_cast<std::size_t>(idx)) - off.begin() - 1;
    std::uint32_t mask = masks_[k][j];
    std::size_t rem = idx - off[j];
    Vec base(m_);
    for (int d = 0; d < m_; ++d) {
      int n = len_[d] + ((mask >> d & 1u) ? 0 : 1);
      base[d] = box_.extents[d].lo + static_cast<int>(rem % n);
      rem /= n;
    }
    return Cell(std::move(base), mask);
  }

  // signed incidence; k in [1, min(m,3)]
  const std::vector<Incidence>& faces(int k, Index i) const { return bnd_.at(k).at(i); }
  // signed coincidence; k in [0, min(m,3)], empty at the top dimension
  const std::vector<Incidence>& cofaces(int k, Index i) const { return cobnd_.at(k).at(i); }

  Index edge_tail(Index e) const {
    for (auto f : bnd_[1][e])
      if (f.sign < 0) return f.cell;
    return 0;
  }
  Index edge_head(Index e) const {
    for (auto f : bnd_[1][e])
      if (f.sign > 0) return f.cell;
    return 0;
  }
  int edge_axis(Index e) const { return std::countr_zero(cell(1, e).dirs); }

  int distance(Index v, Index w) const {
    Cell a = cell(0, v), b = cell(0, w);
    int s = 0;
    for (int d = 0; d < m_; ++d) s += std::abs(a.base[d] - b.base[d]);
    return s;
  }

  // a plaquette lies on the box surface when its coordinate along some normal axis is extremal
  bool plaquette_on_surface(Index p) const {
    Cell c = cell(2, p);
    for (int d = 0; d < m_; ++d) {
      if (c.dirs >> d & 1u) continue;
      if (c.base[d] == box_.extents[d].lo || c.base[d] == box_.extents[d].hi) return true;
    }
    return false;
  }

 private:
  BoxSpec box_;
  int m_ = 0;
  std::vector<int> len_;
  std::vector<std::vector<std::uint32_t>> masks_;
  std::vector<std::vector<std::size_t>> offsets_;
  std::vector<std::size_t> slot_;
  std::vector<std::size_t> count_;
  std::vector<std::vector<std::vector<Incidence>>> bnd_;
  std::vector<std::vector<std::vector<Incidence>>> cobnd_;
};

// Z2 k-form: support bitset over positive k-cells of a complex.
struct Z2Form {
  int k = 0;
  boost::dynamic_bitset<> support;

  Z2Form() = default;
  Z2Form(const CellComplex& cx, int kk) : k(kk), support(cx.count(kk)) {}

  int operator()(const CellComplex& cx, const Cell& c) const { return support.test(cx.index(c)) ? 1 : 0; }
  void set(const CellComplex& cx, const Cell& c, bool v = true) { support.set(cx.index(c), v); }
  bool zero() const { return support.none(); }
  bool operator==(const Z2Form& o) const { return k == o.k && support == o.support; }
};

// (d omega)(c) = omega(boundary c) mod 2
inline Z2Form differential(const CellComplex& cx, const Z2Form& w) {
  if (w.k >= cx.dim()) throw DimensionError("differential of a top form");
  if (w.support.size() != cx.count(w.k)) throw DimensionError("form does not match complex");
  Z2Form out(cx, w.k + 1);
  if (w.k + 1 <= std::min(cx.dim(), 3)) {
    for (Index i = 0; i < cx.count(w.k + 1); ++i) {
      int s = 0;
      for (auto f : cx.faces(w.k + 1, i)) s ^= w.support.test(f.cell) ? 1 : 0;
      if (s) out.support.set(i);
    }
  } else {
    for (Index i = 0; i < cx.count(w.k + 1); ++i) {
      int s = 0;
      Chain b = boundary(cx.cell(w.k + 1, i));
      for (const auto& [f, v] : b.coeffs())
        if (w.support.test(cx.index(f))) s ^= static_cast<int>(v & 1);
      if (s) out.support.set(i);
    }
  }
  return out;
}

// sum_c q[c] omega(c) mod 2
inline int evaluate(const CellComplex& cx, const Z2Form& w, const Chain& q) {
  if (w.k != q.k()) throw DimensionError("evaluate: dimension mismatch");
  long s = 0;
  for (const auto& [c, v] : q.coeffs())
    if (w.support.test(cx.index(c))) s += v;
  return static_cast<int>(((s % 2) + 2) % 2);
}

// parity of |A cap B| for Z2 supports
inline int parity_overlap(const boost::dynamic_bitset<>& a, const boost::dynamic_bitset<>& b) {
  return static_cast<int>((a & b).count() & 1u);
}

}  // namespace z2higgs
