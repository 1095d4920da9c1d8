#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "z2higgs/errors.hpp"

namespace z2higgs {

struct UrsellLimits {
  std::size_t max_items = 8;
};

namespace detail {

inline std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw NumericError("Ursell arithmetic overflow");
  return r;
}

inline std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw NumericError("Ursell arithmetic overflow");
  return r;
}

inline std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) r = checked_mul(r, n - k + i) / i;
  return r;
}

}  // namespace detail

// Sum over connected graphs G on k labelled items of prod_{ij in G} (-zeta_ij).
// Recursion on the component of the first item: g(S) = f(S) - sum_{T owns min S, T != S} g(T) f(S \ T),
// f(S) = prod_{i<j in S} (1 - zeta_ij). Diagonal entries are ignored.
inline std::int64_t ursell(const std::vector<std::vector<int>>& zeta, UrsellLimits lim = {}) {
  const std::size_t k = zeta.size();
  if (k == 0) throw PreconditionError("Ursell function of an empty list");
  if (k > lim.max_items || k > 24)
    throw ResourceError("Ursell function limited to " + std::to_string(lim.max_items) + " items, got " + std::to_string(k));
  for (const auto& row : zeta) {
    if (row.size() != k) throw PreconditionError("zeta matrix must be square");
    for (int z : row)
      if (z < 0 || z > 2) throw PreconditionError("zeta values must lie in {0, 1, 2}");
  }
  const std::uint32_t full = (std::uint32_t{1} << k) - 1;
  std::vector<std::int64_t> f(full + 1, 0), g(full + 1, 0);
  f[0] = 1;
  for (std::uint32_t S = 1; S <= full; ++S) {
    int top = 31 - __builtin_clz(S);
    std::uint32_t rest = S & ~(std::uint32_t{1} << top);
    std::int64_t v = f[rest];
    for (std::uint32_t r = rest; r && v; r &= r - 1) v *= 1 - zeta[top][__builtin_ctz(r)];
    f[S] = v;
  }
  for (std::uint32_t S = 1; S <= full; ++S) {
    std::uint32_t low = S & (~S + 1);
    std::uint32_t others = S & ~low;
    std::int64_t v = f[S];
    // proper subsets T of S with low in T
    for (std::uint32_t sub = (others - 1) & others;; sub = (sub - 1) & others) {
      if (sub != others) {
        std::uint32_t T = sub | low;
        if (g[T] && f[S & ~T]) v = detail::checked_add(v, -detail::checked_mul(g[T], f[S & ~T]));
      }
      if (sub == 0) break;
    }
    g[S] = v;
  }
  return g[full];
}

// Same sum for a multiset: type i appears mult[i] times; zeta[i][i] is the self interaction of a type.
// Counts subsets by type vectors with binomial weights, so the cost is prod (mult_i + 1)^2.
inline std::int64_t ursell_multiset(const std::vector<std::vector<int>>& zeta, const std::vector<int>& mult) {
  const std::size_t d = mult.size();
  if (d == 0) throw PreconditionError("Ursell function of an empty cluster");
  if (zeta.size() != d) throw PreconditionError("zeta matrix must match the type count");
  std::vector<std::size_t> stride(d + 1, 1);
  for (std::size_t i = 0; i < d; ++i) {
    if (mult[i] < 1) throw PreconditionError("multiplicities must be >= 1");
    stride[i + 1] = stride[i] * static_cast<std::size_t>(mult[i] + 1);
    if (stride[i + 1] > (std::size_t{1} << 22)) throw ResourceError("multiset Ursell state space too large");
  }
  const std::size_t states = stride[d];
  auto digit = [&](std::size_t s, std::size_t i) { return static_cast<int>(s / stride[i] % (mult[i] + 1)); };
  // f(b) = prod_i (1 - z_ii)^{C(b_i,2)} prod_{i<j} (1 - z_ij)^{b_i b_j}, each factor in {-1, 0, 1}
  for (const auto& row : zeta)
    for (int z : row)
      if (z < 0 || z > 2) throw PreconditionError("zeta values must lie in {0, 1, 2}");
  auto power_sign = [](int w, long e) -> std::int64_t { return w == 0 ? 0 : (w < 0 && (e & 1)) ? -1 : 1; };
  std::vector<std::int64_t> f(states), g(states, 0);
  std::vector<int> b(d);
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t i = 0; i < d; ++i) b[i] = digit(s, i);
    std::int64_t v = 1;
    for (std::size_t i = 0; i < d && v; ++i)
      for (std::size_t j = i; j < d && v; ++j) {
        long e = i == j ? static_cast<long>(b[i]) * (b[i] - 1) / 2 : static_cast<long>(b[i]) * b[j];
        if (e > 0) v *= power_sign(1 - zeta[i][j], e);
      }
    f[s] = v;
  }
  std::vector<int> c(d);
  for (std::size_t s = 1; s < states; ++s) {
    for (std::size_t i = 0; i < d; ++i) b[i] = digit(s, i);
    std::size_t first = 0;
    while (b[first] == 0) ++first;
    std::int64_t v = f[s];
    // sub-vectors c <= b with c_first >= 1, c != b
    for (std::size_t i = 0; i < d; ++i) c[i] = (i == first) ? 1 : 0;
    while (true) {
      std::size_t cs = 0;
      for (std::size_t i = 0; i < d; ++i) cs += static_cast<std::size_t>(c[i]) * stride[i];
      if (cs != s && g[cs] != 0 && f[s - cs] != 0) {
        std::int64_t w = 1;
        for (std::size_t i = 0; i < d; ++i)
          w = detail::checked_mul(w, i == first ? detail::binomial(b[i] - 1, c[i] - 1) : detail::binomial(b[i], c[i]));
        v = detail::checked_add(v, -detail::checked_mul(detail::checked_mul(w, g[cs]), f[s - cs]));
      }
      std::size_t i = 0;
      for (; i < d; ++i) {
        if (c[i] < b[i]) {
          ++c[i];
          break;
        }
        c[i] = (i == first) ? 1 : 0;
      }
      if (i == d) break;
    }
    g[s] = v;
  }
  return g[states - 1];
}

}  // namespace z2higgs
