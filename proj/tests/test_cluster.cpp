#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "gtest/gtest.h"
#include "z2higgs/cluster.hpp"

using namespace z2higgs;

namespace {

// Direct sum over all graphs on k labelled vertices.
std::int64_t graph_sum(const std::vector<std::vector<int>>& z) {
  const int k = static_cast<int>(z.size());
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) pairs.emplace_back(i, j);
  std::int64_t total = 0;
  for (std::uint64_t G = 0; G < (std::uint64_t{1} << pairs.size()); ++G) {
    std::int64_t w = 1;
    std::vector<int> comp(k);
    std::iota(comp.begin(), comp.end(), 0);
    std::function<int(int)> find = [&](int x) { return comp[x] == x ? x : comp[x] = find(comp[x]); };
    for (std::size_t b = 0; b < pairs.size(); ++b)
      if (G >> b & 1u) {
        auto [i, j] = pairs[b];
        w *= -z[i][j];
        comp[find(i)] = find(j);
      }
    if (w == 0) continue;
    bool connected = true;
    for (int i = 1; i < k; ++i) connected = connected && find(i) == find(0);
    if (connected) total += w;
  }
  return total;
}

std::vector<std::vector<int>> random_zeta(std::mt19937_64& rng, int k) {
  std::vector<std::vector<int>> z(k, std::vector<int>(k, 1));
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) z[i][j] = z[j][i] = static_cast<int>(rng() % 3);
  return z;
}

Index edge(const CellComplex& cx, Vec base, int axis) { return cx.index(Cell(std::move(base), 1u << axis)); }

PathPolymer loop(const CellComplex& cx, Vec base, int a, int b) {
  std::vector<Index> es;
  for (auto f : cx.faces(2, cx.index(Cell(base, (1u << a) | (1u << b))))) es.push_back(f.cell);
  return make_path(cx, es);
}

// m = 3 instance: x-line through (., 1, 1) and a detour around its middle edge
struct LineInstance {
  CellComplex cx{BoxSpec::sizes({3, 2, 2})};
  PathPolymer gn = straight_path(cx, {0, 1, 1}, 0, 3);
  PathPolymer detour = make_path(cx, {edge(cx, {0, 1, 1}, 0), edge(cx, {1, 1, 1}, 1), edge(cx, {1, 2, 1}, 0),
                                      edge(cx, {2, 1, 1}, 1), edge(cx, {2, 1, 1}, 0)});
};

}  // namespace

TEST(Ursell, SmallValues) {
  EXPECT_EQ(ursell({{1}}), 1);
  EXPECT_EQ(ursell({{1, 1}, {1, 1}}), -1);
  EXPECT_EQ(ursell({{1, 2}, {2, 1}}), -2);
  EXPECT_EQ(ursell({{1, 0}, {0, 1}}), 0);
  EXPECT_EQ(ursell({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}), 2);
  EXPECT_EQ(ursell_multiset({{1}}, {3}), 2);
  EXPECT_EQ(ursell_multiset({{1}}, {2}), -1);
}

TEST(Ursell, MatchesGraphEnumeration) {
  std::mt19937_64 rng(11);
  for (int k = 1; k <= 6; ++k)
    for (int trial = 0; trial < 40; ++trial) {
      auto z = random_zeta(rng, k);
      EXPECT_EQ(ursell(z), graph_sum(z));
    }
}

TEST(Ursell, MultisetMatchesExpandedList) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    int d = 1 + static_cast<int>(rng() % 4);
    auto z = random_zeta(rng, d);
    std::vector<int> mult(d);
    int total = 0;
    for (int i = 0; i < d; ++i) total += mult[i] = 1 + static_cast<int>(rng() % 3);
    if (total > 10) continue;
    std::vector<int> type;
    for (int i = 0; i < d; ++i) type.insert(type.end(), mult[i], i);
    std::vector<std::vector<int>> full(total, std::vector<int>(total));
    for (int i = 0; i < total; ++i)
      for (int j = 0; j < total; ++j) full[i][j] = z[type[i]][type[j]];
    EXPECT_EQ(ursell_multiset(z, mult), ursell(full, UrsellLimits{12}));
  }
}

TEST(Ursell, PermutationInvariance) {
  std::mt19937_64 rng(99);
  auto z = random_zeta(rng, 7);
  const std::int64_t ref = ursell(z);
  std::vector<int> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  for (int s = 0; s < 1000; ++s) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::vector<int>> p(7, std::vector<int>(7));
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) p[i][j] = z[perm[i]][perm[j]];
    ASSERT_EQ(ursell(p), ref);
  }
}

TEST(Ursell, Limits) {
  std::vector<std::vector<int>> z(9, std::vector<int>(9, 1));
  EXPECT_THROW(ursell(z), ResourceError);
  EXPECT_NO_THROW(ursell(z, UrsellLimits{9}));
  EXPECT_THROW(ursell(std::vector<std::vector<int>>{}), PreconditionError);
  EXPECT_THROW(ursell({{1, 3}, {3, 1}}), PreconditionError);
}

TEST(Ursell, PolymerPairs) {
  LineInstance in;
  const auto& cx = in.cx;
  SurfaceProvider sp(cx);
  Index e = edge(cx, {1, 1, 1}, 0);
  auto w = edge_vortex(cx, e);
  ASSERT_TRUE(w.minimal());
  auto g = loop(cx, {1, 1, 1}, 0, 1);  // contains e
  auto g2 = loop(cx, {1, 1, 1}, 0, 2);  // contains e
  auto far = loop(cx, {0, 0, 0}, 1, 2);
  EXPECT_EQ(ursell({Polymer{g}, Polymer{w}}, sp), -2);
  EXPECT_EQ(ursell({Polymer{g}, Polymer{g2}}, sp), -1);
  EXPECT_EQ(ursell({Polymer{far}, Polymer{w}}, sp), 0);
  Cluster c;
  c.add(g);
  c.add(w);
  EXPECT_EQ(ursell_minimal_factorization(c, sp), -2);
  c.add(g2);
  EXPECT_EQ(ursell_minimal_factorization(c, sp), 4);
  EXPECT_EQ(ursell(c, sp), graph_sum(zeta_matrix(c.expanded(), sp)));
  EXPECT_EQ(ursell(c, sp), 4);
  Cluster bad;
  bad.add(g);
  bad.add(w, 2);
  EXPECT_THROW(ursell_minimal_factorization(bad, sp), PreconditionError);
  Cluster nonmin;
  nonmin.add(g);
  nonmin.add(make_vortex(cx, {}));
  EXPECT_THROW(ursell_minimal_factorization(nonmin, sp), PreconditionError);
}

TEST(Ursell, FactorizationExhaustive) {
  auto start = std::chrono::steady_clock::now();
  LineInstance in;
  const auto& cx = in.cx;
  // 4-loops meeting the line and the minimal vortices of its three edges
  std::vector<PathPolymer> paths;
  Bits line_vertices(cx.vertices());
  for (Index v : in.gn.vertices) line_vertices.set(v);
  for (Index p = 0; p < cx.plaquettes(); ++p) {
    std::vector<Index> es;
    for (auto f : cx.faces(2, p)) es.push_back(f.cell);
    auto g = make_path(cx, es);
    if (std::any_of(g.vertices.begin(), g.vertices.end(), [&](Index v) { return line_vertices.test(v); })) paths.push_back(g);
  }
  std::vector<VortexPolymer> vs;
  for (Index e : in.gn.edges) vs.push_back(edge_vortex(cx, e));
  for (const auto& v : vs) ASSERT_TRUE(v.minimal());
  ASSERT_FALSE(vortex_adjacent(vs[0], vs[2]));
  PolymerPool pool(cx, paths, vs, 24, 12);
  ExpansionConfig cfg;
  cfg.max_norm1 = 24;
  cfg.max_norm2 = 12;
  cfg.max_cluster_size = 6;
  Activities act{1.0, 0.1, 3};
  SurfaceProvider sp(cx);
  std::size_t checked = 0, with_two = 0;
  enumerate_clusters(pool, std::vector<char>(pool.size(), 1), act, cfg, [&](const ClusterView& c) {
    Cluster cl;
    int vcount = 0;
    std::vector<Index> vitems;
    for (std::size_t i = 0; i < c.types.size(); ++i) {
      cl.add(pool.polymer(c.types[i]), c.mult[i]);
      if (!pool.is_path(c.types[i])) {
        vcount += c.mult[i];
        vitems.push_back(c.types[i]);
        if (c.mult[i] > 1) return;
      }
    }
    for (std::size_t i = 0; i < vitems.size(); ++i)
      for (std::size_t j = i + 1; j < vitems.size(); ++j)
        if (vortex_adjacent(pool.vortex(vitems[i]), pool.vortex(vitems[j]))) return;
    std::int64_t direct = ursell(cl.expanded(), sp, UrsellLimits{6});
    ASSERT_EQ(direct, c.U);
    ASSERT_EQ(ursell_minimal_factorization(cl, sp), direct);
    ++checked;
    if (vcount >= 2) ++with_two;
  });
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_GT(checked, 1000u);
  EXPECT_GT(with_two, 10u);
  EXPECT_LT(secs, 60.0);
}

TEST(Cluster, SingletonAndPairWeights) {
  LineInstance in;
  const auto& cx = in.cx;
  SurfaceProvider sp(cx);
  Activities act{0.7, 0.05, 3};
  const double t = std::tanh(0.1);
  Cluster one;
  one.add(loop(cx, {0, 0, 0}, 0, 1));
  EXPECT_NEAR(cluster_weight(one, act, sp), std::pow(t, 4), 1e-18);
  Cluster v;
  v.add(edge_vortex(cx, edge(cx, {1, 1, 1}, 0)));
  EXPECT_NEAR(cluster_weight(v, act, sp), act.xi(), 1e-15 * act.xi());
  EXPECT_NEAR(act.xi(), std::exp(-8.0 * 2 * 0.7), 1e-18);
  EXPECT_NEAR(act.xi_hat(), std::exp(-4.0 * 0.7 * 7), 1e-20);
  Cluster pair;
  pair.add(loop(cx, {0, 0, 0}, 0, 1));
  pair.add(loop(cx, {1, 0, 0}, 0, 1));
  EXPECT_NEAR(cluster_weight(pair, act, sp), -std::pow(t, 8), 1e-20);
  // a doubled loop: U = -1, weight carries 1/2!
  Cluster twice;
  twice.add(loop(cx, {0, 0, 0}, 0, 1), 2);
  EXPECT_NEAR(cluster_weight(twice, act, sp), -0.5 * std::pow(t, 8), 1e-20);
}

TEST(Cluster, PathClusterWeightsIndependentOfBeta) {
  ModelParams base{BoxSpec::sizes({3, 1}), 0.3, 0.07};
  CellComplex cx(base.box);
  PolymerPool pool(cx, 8, 0);
  ExpansionConfig cfg;
  cfg.max_norm2 = 0;
  std::vector<double> ref;
  for (double beta : {0.3, 1.0, 5.0, ModelParams::infinity}) {
    Activities act{beta, 0.07, 2};
    std::vector<double> psis;
    enumerate_clusters(pool, std::vector<char>(pool.size(), 1), act, cfg, [&](const ClusterView& c) { psis.push_back(c.psi); });
    if (ref.empty())
      ref = psis;
    else
      EXPECT_EQ(psis, ref);
  }
  EXPECT_FALSE(ref.empty());
}

TEST(Cluster, ZetaRange) {
  LineInstance in;
  PolymerPool pool(in.cx, 6, 4);
  ASSERT_GT(pool.vortex_count(), 0u);
  for (Index i = 0; i < pool.size(); ++i)
    for (Index j = i + 1; j < pool.size(); ++j) {
      int z = 1 - pool.iota(i, j);
      bool pi = pool.is_path(i), pj = pool.is_path(j);
      if (pi == pj) {
        ASSERT_TRUE(z == 0 || z == 1);
      } else {
        ASSERT_TRUE(z == 0 || z == 2);
      }
    }
}

TEST(Cluster, NeighbourListsMatchInteraction) {
  CellComplex cx(BoxSpec::sizes({2, 1, 1}));
  PolymerPool pool(cx, 6, 4);
  SurfaceProvider sp(cx);
  for (Index i = 0; i < pool.size(); ++i) {
    const auto& nb = pool.neighbours()[i];
    for (Index j = 0; j < pool.size(); ++j) {
      if (i == j) continue;
      int z = interaction_zeta(pool.polymer(i), pool.polymer(j), sp);
      ASSERT_EQ(z, 1 - pool.iota(i, j));
      bool fits = pool.norm1(i) + pool.norm1(j) <= 6 && pool.norm2(i) + pool.norm2(j) <= 4;
      bool listed = std::binary_search(nb.begin(), nb.end(), j);
      ASSERT_EQ(listed, z != 0 && fits) << i << ' ' << j;
    }
  }
}

TEST(Expansion, VanishingActivities) {
  ModelParams mp{BoxSpec::sizes({3, 1}), ModelParams::infinity, 0.0};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 0}, 0, 3);
  ExpansionConfig cfg;
  cfg.max_norm2 = 2;
  auto r = truncated_log_ratio(mp, gn, gn, cfg);
  EXPECT_EQ(r.value, 0.0);
  ClusterExpansion ce(mp, cfg);
  EXPECT_EQ(ce.z_ratio(gn, 10), 0.0);
}

TEST(Expansion, SingleVortexAtZeroKappa) {
  // kappa = 0: only vortex clusters; log ratio is the exact vortex-gas log ratio of V(A)/V(0)
  ModelParams mp{BoxSpec::sizes({2, 1}), 0.4, 0.0};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 0}, 0, 2);
  auto g0 = make_path(cx, {edge(cx, {0, 0}, 1), edge(cx, {0, 1}, 0), edge(cx, {1, 1}, 0), edge(cx, {2, 0}, 1)});
  ExpansionConfig cfg;
  cfg.max_norm2 = 8;
  cfg.max_cluster_size = 8;
  auto r = truncated_log_ratio(mp, gn, g0, cfg);
  // m = 2 plaquettes are independent: each flipped plaquette gives log tanh(B)
  double expect = 2 * std::log(std::tanh(0.8));
  EXPECT_NEAR(r.value, expect, 1e-6);
}

TEST(Expansion, ConvergesToHighTemperatureRatio) {
  ModelParams mp{BoxSpec::sizes({3, 1}), 2.0, 0.05};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 0}, 0, 3);
  double exact = exact_check_Z(mp, gn).ratio;
  ExpansionConfig cfg;
  cfg.max_norm1 = 10;
  cfg.max_norm2 = 6;
  cfg.max_cluster_size = 8;
  ClusterExpansion ce(mp, cfg);
  std::vector<double> err;
  for (int n1 : {4, 6, 8, 10}) {
    ExpansionConfig cut = cfg;
    cut.max_norm1 = n1;
    err.push_back(std::fabs(ce.z_ratio(gn, static_cast<int>(cx.edges()), cut) - exact));
  }
  for (std::size_t i = 1; i < err.size(); ++i) EXPECT_LT(err[i], err[i - 1]) << i;
  EXPECT_LE(err.back(), 1e-3);
  EXPECT_LE(err.back(), 1e-12);
  // single term, at a deeper cutoff
  double term = exact_check_Z_term(mp, gn, gn);
  ExpansionConfig deep = cfg;
  deep.max_norm1 = 14;
  ClusterExpansion ce14(mp, deep);
  double prev = 1;
  for (int n1 : {10, 12, 14}) {
    ExpansionConfig cut = deep;
    cut.max_norm1 = n1;
    double e = std::fabs(std::exp(ce14.log_ratio(gn, gn, cut).value) - term);
    EXPECT_LT(e, prev) << n1;
    prev = e;
  }
  EXPECT_LE(prev, 1e-14);
}

TEST(Expansion, TailReport) {
  ModelParams mp{BoxSpec::sizes({3, 1}), 2.0, 0.05};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 0}, 0, 3);
  ExpansionConfig cfg;
  cfg.max_norm1 = 8;
  cfg.max_norm2 = 2;
  auto r = truncated_log_ratio(mp, gn, gn, cfg);
  EXPECT_EQ(r.tail.cutoff1, 8);
  EXPECT_GT(r.tail.shells1.size(), 2u);
  EXPECT_GT(r.tail.last_shell, 0.0);
  EXPECT_LT(r.tail.last_shell, std::fabs(r.tail.shells1.at(4)));
  EXPECT_GT(r.tail.lemma_tail, 0.0);
  double s = 0;
  for (auto [k, v] : r.tail.shells1) s += v;
  EXPECT_NEAR(s, r.value, 1e-15);
  EXPECT_GT(r.contributing, 0u);
  EXPECT_GE(r.clusters, r.contributing);
}

TEST(Expansion, RejectsOpenSum) {
  ModelParams mp{BoxSpec::sizes({3, 1}), 2.0, 0.05};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 0}, 0, 3);
  auto g0 = straight_path(cx, {0, 0}, 0, 2);
  ExpansionConfig cfg;
  EXPECT_THROW(truncated_log_ratio(mp, gn, g0, cfg), PreconditionError);
  cfg.alpha = 1.5;
  EXPECT_THROW(truncated_log_ratio(mp, gn, gn, cfg), ConfigError);
}

TEST(Vartheta, TotalMassIsIsingCorrelation) {
  BoxSpec box = BoxSpec::sizes({3, 1});
  CellComplex cx(box);
  auto gn = straight_path(cx, {0, 0}, 0, 3);
  ExpansionConfig cfg;
  cfg.max_norm1 = 8;
  cfg.max_cluster_size = 6;
  VarthetaMeasure theta(box, 0.05, cfg);
  double total = theta.mass(gn, static_cast<int>(cx.edges()));
  double ising = exact_Z_ratio_ising(0.05, box, {0, 0}, {3, 0});
  EXPECT_NEAR(total, ising, 1e-6);
  EXPECT_GT(total, 0.0);
  EXPECT_LE(total, 1.0);
}

TEST(Vartheta, WeightsAndZeroKappa) {
  BoxSpec box = BoxSpec::sizes({3, 1});
  CellComplex cx(box);
  auto gn = straight_path(cx, {0, 0}, 0, 3);
  ExpansionConfig cfg;
  EXPECT_EQ(vartheta_weight(gn, gn, 0.0, box, cfg), 0.0);
  double w = vartheta_weight(gn, gn, 0.05, box, cfg);
  EXPECT_GT(w, 0.0);
  EXPECT_LT(w, std::pow(std::tanh(0.1), 3) * 1.01);
  EXPECT_THROW(vartheta_weight(straight_path(cx, {0, 0}, 0, 2), gn, 0.05, box, cfg), PreconditionError);
}

TEST(Decomposition, PiecesSumToTruncatedSum) {
  LineInstance in;
  ModelParams mp{in.cx.box(), 0.4, 0.05};
  ExpansionConfig cfg;
  cfg.max_norm1 = 8;
  cfg.max_norm2 = 4;
  cfg.max_cluster_size = 4;
  ClusterExpansion ce(mp, cfg);
  for (const auto& g : {in.gn, in.detour}) {
    auto d = minimal_vortex_decomposition(ce, in.gn, g);
    double direct = ce.log_ratio(in.gn, g).value;
    EXPECT_NEAR(d.total, direct, 1e-12 * std::max(1.0, std::fabs(direct)));
    EXPECT_NEAR(d.pieces(), d.total, 1e-12 * std::max(1.0, std::fabs(d.total)));
    EXPECT_NEAR(d.case3, d.norm_term + d.line_term + d.E3 + d.R3, 1e-14);
    double xi = ce.activities().xi();
    EXPECT_NEAR(d.E2_enumerated, d.E2, 1e-15 * std::max(1.0, xi));
    std::size_t shared = 0;
    for (Index e : g.edges) shared += std::binary_search(in.gn.edges.begin(), in.gn.edges.end(), e) ? 1 : 0;
    EXPECT_EQ(d.E2, 4.0 * xi * static_cast<double>(shared));
    EXPECT_NE(d.case2, 0.0);
    EXPECT_NE(d.E1, 0.0);
  }
}

TEST(Decomposition, ZeroKappaAndDisjointLine) {
  LineInstance in;
  ModelParams mp{in.cx.box(), 0.4, 0.0};
  ExpansionConfig cfg;
  cfg.max_norm1 = 6;
  cfg.max_norm2 = 4;
  cfg.max_cluster_size = 3;
  ClusterExpansion ce(mp, cfg);
  auto d = minimal_vortex_decomposition(ce, in.gn, in.detour);
  EXPECT_EQ(d.E3, 0.0);
  EXPECT_EQ(d.case2, 0.0);
  EXPECT_EQ(d.norm_term, 0.0);
  EXPECT_EQ(d.line_term, 0.0);
  EXPECT_NEAR(d.pieces(), d.total, 1e-14);
  // a path sharing no edge with gamma_n
  const auto& cx = in.cx;
  auto around = make_path(cx, {edge(cx, {0, 1, 1}, 1), edge(cx, {0, 2, 1}, 0), edge(cx, {1, 2, 1}, 0), edge(cx, {2, 2, 1}, 0),
                               edge(cx, {3, 1, 1}, 1)});
  auto d2 = minimal_vortex_decomposition(ce, in.gn, around);
  EXPECT_EQ(d2.E2, 0.0);
  EXPECT_NEAR(d2.E2_enumerated, 0.0, 1e-15);
}

namespace {

void check_bounds(const BoxSpec& box, const PathPolymer& gn, const ExpansionConfig& cfg) {
  std::vector<double> D1;
  for (double kappa : {0.05, 0.02, 0.01}) {
    ModelParams mp{box, 2.0, kappa};
    auto rep = bound_diagnostics(mp, cfg, gn);
    EXPECT_TRUE(rep.at("power_cluster").pass) << kappa;
    EXPECT_TRUE(rep.at("smallest_nonminimal").pass) << kappa;
    EXPECT_TRUE(rep.at("vartheta_total").pass) << kappa;
    EXPECT_TRUE(rep.at("large_gamma0").pass) << kappa;
    EXPECT_GT(rep.at("power_cluster").lhs, 0.0);
    EXPECT_GT(rep.at("smallest_nonminimal").lhs, 0.0);
    ASSERT_EQ(rep.D.size(), 3u);
    EXPECT_LT(rep.D[0], rep.D[1]);
    D1.push_back(rep.D[1]);
  }
  EXPECT_GT(D1[0], D1[1]);
  EXPECT_GT(D1[1], D1[2]);
}

}  // namespace

TEST(Bounds, LemmaChecksPlanar) {
  BoxSpec box = BoxSpec::sizes({4, 3});
  CellComplex cx(box);
  ExpansionConfig cfg;
  cfg.max_norm1 = 10;
  cfg.max_norm2 = 6;
  cfg.max_cluster_size = 4;
  check_bounds(box, straight_path(cx, {0, 1}, 0, 3), cfg);
}

TEST(Bounds, LemmaChecksCube) {
  BoxSpec box = BoxSpec::cube(3, 2);
  CellComplex cx(box);
  ExpansionConfig cfg;
  cfg.max_norm1 = 4;
  cfg.max_norm2 = 6;
  cfg.max_cluster_size = 2;
  check_bounds(box, straight_path(cx, {0, 1, 1}, 0, 2), cfg);
}

TEST(Bounds, PowerSeriesTail) {
  double x = 0.3;
  EXPECT_NEAR(power_series_tail(0, 0, x), 1 / (1 - x), 1e-14);
  EXPECT_NEAR(power_series_tail(1, 1, x), x / ((1 - x) * (1 - x)), 1e-14);
  EXPECT_TRUE(std::isinf(power_series_tail(4, 1, 1.0)));
}
