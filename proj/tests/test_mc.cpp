#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "z2higgs/fit.hpp"
#include "z2higgs/mc.hpp"

using namespace z2higgs;

namespace {

// three edges of a triangle bounding one 2-cell, plus a field on each edge
ParityModel triangle(double B, double K) {
  return ParityModel(3, {{0, 1, 2}, {0}, {1}, {2}}, {2 * B, 2 * K, 2 * K, 2 * K});
}

std::array<double, 8> gibbs(ParityModel m) {
  std::array<double, 8> p{};
  double z = 0;
  for (int s = 0; s < 8; ++s) {
    m.set_state({std::uint8_t(s & 1), std::uint8_t((s >> 1) & 1), std::uint8_t((s >> 2) & 1)});
    p[s] = std::exp(-m.energy());
    z += p[s];
  }
  for (auto& v : p) v /= z;
  return p;
}

int encode(const std::vector<std::uint8_t>& x) { return x[0] | (x[1] << 1) | (x[2] << 2); }

}  // namespace

TEST(HeatBath, KernelSatisfiesDetailedBalance) {
  auto m = triangle(0.7, 0.3);
  auto pi = gibbs(m);
  for (Index v = 0; v < 3; ++v)
    for (int s = 0; s < 8; ++s) {
      int t = s ^ (1 << v);
      m.set_state({std::uint8_t(s & 1), std::uint8_t((s >> 1) & 1), std::uint8_t((s >> 2) & 1)});
      double to_t = (t >> v) & 1 ? m.p1(v) : 1 - m.p1(v);
      m.set_state({std::uint8_t(t & 1), std::uint8_t((t >> 1) & 1), std::uint8_t((t >> 2) & 1)});
      double to_s = (s >> v) & 1 ? m.p1(v) : 1 - m.p1(v);
      EXPECT_NEAR(pi[s] * to_t, pi[t] * to_s, 1e-15) << v << ' ' << s;
    }
}

TEST(HeatBath, ToyChiSquare) {
  auto m = triangle(0.5, 0.3);
  auto pi = gibbs(m);
  auto g = make_engine({7, 0});
  for (int i = 0; i < 1000; ++i) m.sweep(g);
  std::array<double, 8> count{};
  const int N = 200000, thin = 5;
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < thin; ++k) m.sweep(g);
    count[encode(m.state())] += 1;
  }
  double chi2 = 0;
  for (int s = 0; s < 8; ++s) {
    double e = N * pi[s];
    chi2 += (count[s] - e) * (count[s] - e) / e;
    EXPECT_LE(std::fabs(count[s] - e), 3 * std::sqrt(e * (1 - pi[s]))) << s;
  }
  // 7 degrees of freedom, p = 0.001
  EXPECT_LT(chi2, 24.32);
}

TEST(HeatBath, JointMoveSatisfiesDetailedBalance) {
  auto m = triangle(0.4, 0.6);
  m.add_move({0, 1});
  EXPECT_THROW(m.add_move({4}), DimensionError);
  auto pi = gibbs(m);
  for (int s = 0; s < 8; ++s) {
    int t = s ^ 3;
    m.set_state({std::uint8_t(s & 1), std::uint8_t((s >> 1) & 1), std::uint8_t((s >> 2) & 1)});
    double to_t = 1 / (1 + std::exp(m.move_delta(0)));
    m.set_state({std::uint8_t(t & 1), std::uint8_t((t >> 1) & 1), std::uint8_t((t >> 2) & 1)});
    double to_s = 1 / (1 + std::exp(m.move_delta(0)));
    EXPECT_NEAR(pi[s] * to_t, pi[t] * to_s, 1e-15) << s;
  }
  // the move flips two edges of the triangle: the 2-cell parity is unchanged
  m.set_state({0, 0, 0});
  EXPECT_NEAR(m.move_delta(0), 2 * 2 * 0.6, 1e-15);
  m.apply_move(0, 0.0);
  EXPECT_EQ(encode(m.state()), 3);
  EXPECT_NEAR(m.energy(), 2 * 2 * 0.6, 1e-15);
}

TEST(HeatBath, ConditionalSignAndIndependence) {
  auto m = triangle(0.5, 0.3);
  m.set_state({1, 0, 1});
  for (Index v = 0; v < 3; ++v) EXPECT_NEAR(m.conditional_sign(v), 1 - 2 * m.p1(v), 1e-15);
  EXPECT_FALSE(m.independent({0, 1}));
  EXPECT_TRUE(m.independent({2}));
  EXPECT_EQ(m.sign({0, 2}), 1.0);
  EXPECT_EQ(m.sign({0}), -1.0);
  EXPECT_THROW(ParityModel(2, {{0, 5}}, {1.0}), DimensionError);
  EXPECT_THROW(ParityModel(2, {{0, 1}}, {NAN}), NumericError);
}

TEST(Statistics, AutocorrelationOfAr1) {
  std::mt19937_64 g(11);
  std::normal_distribution<double> n01;
  const double phi = 0.8;
  std::vector<double> x(400000);
  double v = 0;
  for (auto& s : x) s = v = phi * v + n01(g);
  double tau = integrated_autocorrelation(x);
  EXPECT_NEAR(tau, (1 + phi) / (2 * (1 - phi)), 0.3);
  std::vector<double> iid(100000);
  for (auto& s : iid) s = n01(g);
  EXPECT_NEAR(integrated_autocorrelation(iid), 0.5, 0.05);
  EXPECT_EQ(integrated_autocorrelation(std::vector<double>(50, 1.0)), 0.5);
}

TEST(Statistics, JackknifeOfMean) {
  std::vector<double> b{1.0, 2.0, 4.0, 3.0, 5.0};
  auto r = jackknife_mean(b);
  EXPECT_NEAR(r.value, 3.0, 1e-15);
  // for the mean the jackknife error is the usual standard error
  double s2 = 0;
  for (double v : b) s2 += (v - 3) * (v - 3);
  EXPECT_NEAR(r.stderr_, std::sqrt(s2 / 4 / 5), 1e-14);
  auto sq = jackknife(b, [](double m) { return m * m; });
  EXPECT_NEAR(sq.value, 9.0, 1e-14);
  EXPECT_THROW(jackknife_mean({1.0}), PreconditionError);
  EXPECT_EQ(block_means({1, 2, 3, 4, 5}, 2), (std::vector<double>{1.5, 3.5}));
}

TEST(Statistics, Stationarity) {
  std::vector<double> flat(60, 0.0), drift;
  std::mt19937_64 g(3);
  std::normal_distribution<double> n01;
  for (auto& v : flat) v = n01(g);
  EXPECT_TRUE(stationary(flat));
  for (int i = 0; i < 60; ++i) drift.push_back(0.2 * i + 0.1 * n01(g));
  EXPECT_FALSE(stationary(drift));
}

TEST(McWilson, MatchesExactOracle) {
  ModelParams mp{BoxSpec::sizes({2, 1}), 1.0, 0.1};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 0}, 0, 2);
  double exact = exact_Z_ratio(mp, gn).ratio;
  SamplingPlan plan;
  plan.sweeps = 1000000;
  auto est = mc_wilson(mp, gn, plan, {2024, 0});
  EXPECT_EQ(est.estimator, "conditional");
  EXPECT_LE(est.stderr_, 1e-3);
  EXPECT_LE(std::fabs(est.mean - exact), 3 * est.stderr_) << est.mean << " vs " << exact;
  EXPECT_TRUE(est.stationary);
  plan.improved = false;
  auto raw = mc_wilson(mp, gn, plan, {2024, 1});
  EXPECT_EQ(raw.estimator, "raw");
  EXPECT_LE(std::fabs(raw.mean - exact), 3 * raw.stderr_);
  EXPECT_GE(raw.stderr_, est.stderr_);
  plan.improved = true;
  plan.gauge_moves = false;
  auto local = mc_wilson(mp, gn, plan, {2024, 2});
  EXPECT_LE(std::fabs(local.mean - exact), 3 * local.stderr_);
}

TEST(McWilson, LargerBoxAndBentPath) {
  ModelParams mp{BoxSpec::sizes({3, 2}), 0.6, 0.3};
  CellComplex cx(mp.box);
  // an L-shaped path: the conditional estimator does not apply
  auto gn = make_path(cx, {cx.index(Cell({0, 0}, 1)), cx.index(Cell({1, 0}, 2))});
  double exact = exact_Z_ratio(mp, gn).ratio;
  SamplingPlan plan;
  plan.sweeps = 400000;
  auto est = mc_wilson(mp, gn, plan, {5, 0});
  EXPECT_EQ(est.estimator, "raw");
  EXPECT_LE(std::fabs(est.mean - exact), 3 * est.stderr_) << est.mean << " vs " << exact;
}

TEST(McWilson, ZeroKappaVanishes) {
  ModelParams mp{BoxSpec::sizes({3, 2}), 0.8, 0.0};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 1}, 0, 2);
  SamplingPlan plan;
  plan.sweeps = 50000;
  auto est = mc_wilson(mp, gn, plan, {1, 0});
  EXPECT_LE(std::fabs(est.mean), 3 * est.stderr_ + 1e-15);
}

TEST(McWilson, SeededRunsAreReproducible) {
  ModelParams mp{BoxSpec::sizes({3, 2}), 0.5, 0.2};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 1}, 0, 3);
  SamplingPlan plan;
  plan.sweeps = 20000;
  auto a = mc_wilson(mp, gn, plan, {99, 3});
  auto b = mc_wilson(mp, gn, plan, {99, 3});
  auto c = mc_wilson(mp, gn, plan, {99, 4});
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.stderr_, b.stderr_);
  EXPECT_EQ(a.n_therm, b.n_therm);
  EXPECT_EQ(a.block_len, b.block_len);
  EXPECT_NE(a.mean, c.mean);
  auto job = [&](RngSpec r) { return mc_wilson(mp, gn, plan, r); };
  auto s1 = run_streams({99, 0}, 3, 1, job);
  auto s3 = run_streams({99, 0}, 3, 3, job);
  EXPECT_EQ(s1.mean, s3.mean);
  EXPECT_EQ(s1.stderr_, s3.stderr_);
  EXPECT_EQ(s1.streams, 3);
  EXPECT_EQ(s1.n_sweeps, 3 * plan.sweeps);
}

TEST(McWilson, ConsistentAcrossSeeds) {
  ModelParams mp{BoxSpec::sizes({2, 1}), 0.7, 0.25};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 0}, 0, 2);
  double exact = exact_Z_ratio(mp, gn).ratio;
  SamplingPlan plan;
  plan.sweeps = 20000;
  int bad = 0;
  const int runs = 100;
  for (int s = 0; s < runs; ++s) {
    auto est = mc_wilson(mp, gn, plan, {static_cast<std::uint64_t>(s), 0});
    if (std::fabs(est.mean - exact) > 3 * est.stderr_) ++bad;
  }
  // binomial tolerance for a 99% coverage rate
  EXPECT_LE(bad, 3);
}

TEST(McWilson, Preconditions) {
  ModelParams mp{BoxSpec::sizes({2, 1}), ModelParams::infinity, 0.1};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 0}, 0, 2);
  EXPECT_THROW(mc_wilson(mp, gn, {}, {}), PreconditionError);
  mp.beta = 1.0;
  SamplingPlan bad;
  bad.sweeps = 0;
  EXPECT_THROW(mc_wilson(mp, gn, bad, {}), PreconditionError);
  bad = {};
  bad.therm = 0;
  EXPECT_THROW(mc_wilson(mp, gn, bad, {}), PreconditionError);
  bad = {};
  bad.block_len = -3;
  EXPECT_THROW(mc_wilson(mp, gn, bad, {}), PreconditionError);
  SamplingPlan tiny;
  tiny.sweeps = 10;
  tiny.block_len = 5;
  EXPECT_THROW(mc_wilson(mp, gn, tiny, {}), ResourceError);
  EXPECT_EQ(mc_wilson(mp, PathPolymer{}, {}, {}).mean, 1.0);
}

TEST(McIsing, SamePointAndChain) {
  BoxSpec chain(std::vector<Interval>{{0, 6}, {0, 0}});
  SamplingPlan plan;
  plan.sweeps = 200000;
  auto same = mc_ising_correlation(0.3, chain, {2, 0}, {2, 0}, plan, {});
  EXPECT_EQ(same.mean, 1.0);
  EXPECT_EQ(same.stderr_, 0.0);
  const double kappa = 0.3;
  double tm = std::pow(std::tanh(2 * kappa), 4);
  auto est = mc_ising_correlation(kappa, chain, {1, 0}, {5, 0}, plan, {8, 0});
  EXPECT_EQ(est.mode, "ising-inf");
  EXPECT_EQ(est.estimator, "conditional");
  EXPECT_LE(std::fabs(est.mean - tm), 3 * est.stderr_) << est.mean << " vs " << tm;
  auto pos = mc_ising_correlation(kappa, chain, {1, 0}, {5, 0}, plan, {8, 1}, Convention::PositiveOnly);
  EXPECT_LE(std::fabs(pos.mean - std::pow(std::tanh(kappa), 4)), 3 * pos.stderr_);
}

TEST(McIsing, MatchesExactOnPlanarBox) {
  BoxSpec box = BoxSpec::sizes({3, 3});
  SamplingPlan plan;
  plan.sweeps = 300000;
  for (Vec y : {Vec{3, 1}, Vec{1, 1}}) {
    double exact = exact_Z_ratio_ising(0.2, box, {0, 1}, y);
    auto est = mc_ising_correlation(0.2, box, {0, 1}, y, plan, {4, 0});
    EXPECT_LE(std::fabs(est.mean - exact), 3 * est.stderr_) << est.mean << " vs " << exact;
  }
}

TEST(DecayScan, ScalingSchedule) {
  BetaSchedule s = BetaSchedule::scaling(1.0);
  for (int n = 4; n <= 16; ++n) EXPECT_NEAR(n * std::exp(-8 * s.at(n, 2)), 1.0, 1e-12);
  EXPECT_NEAR(s.at(16, 3), std::log(16.0) / 16, 1e-15);
  EXPECT_EQ(BetaSchedule::fixed(0.4).at(7, 2), 0.4);
  EXPECT_TRUE(std::isinf(BetaSchedule::infinite().at(7, 2)));
  EXPECT_THROW(BetaSchedule::scaling(0.0).at(3, 2), PreconditionError);
  // lambda proportional to n makes beta constant
  for (int n : {4, 8}) EXPECT_NEAR(BetaSchedule::scaling(n / 3.0).at(n, 2), std::log(3.0) / 8, 1e-15);
}

TEST(DecayScan, RowsAndLines) {
  BoxSpec box = strip_box(2, 6, 3, 1);
  EXPECT_EQ(box.extents[0].length(), 8);
  EXPECT_EQ(box.extents[1].length(), 3);
  auto [a, b] = centred_line(box, 0, 4);
  EXPECT_EQ(a, (Vec{2, 1}));
  EXPECT_EQ(b, (Vec{6, 1}));
  EXPECT_THROW(centred_line(box, 0, 9), DimensionError);
  ScanSpec spec{box, {2, 4, 6}, 0.2, BetaSchedule::scaling(1.0)};
  SamplingPlan plan;
  plan.sweeps = 5000;
  auto rows = decay_scan(spec, plan, {1, 0});
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.realized_lambda, 1.0, 1e-12);
    EXPECT_EQ(r.est.mode, "finite-beta");
    EXPECT_GE(r.est.stderr_, 0.0);
    EXPECT_LE(std::fabs(r.est.mean), 1.0);
  }
  spec.schedule = BetaSchedule::infinite();
  auto ising = decay_scan(spec, plan, {1, 0});
  EXPECT_EQ(ising[0].est.mode, "ising-inf");
  EXPECT_EQ(ising[0].realized_lambda, 0.0);
  auto again = decay_scan(spec, plan, {1, 0});
  EXPECT_EQ(ising[2].est.mean, again[2].est.mean);
}

namespace {

// transfer-matrix spin-spin correlations on the 25 x 9 vertex strip, K = 0.4, centred pairs, n = 6..16
const std::vector<double> kStrip8 = {0.09843,  0.073766, 0.05545,  0.041749,  0.031465, 0.023723,
                                     0.017892, 0.013489, 0.010171, 0.0076588, 0.0057674};

// 41 x 9 vertex strip, n = 6..20
const std::vector<double> kStrip8Long = {0.098443,  0.0737825,  0.0554664,  0.0417698,  0.0314874,
                                         0.0237503, 0.0179206,  0.0135247,  0.0102084,  0.00770574,
                                         0.00581691, 0.00439116, 0.00331492, 0.00250245, 0.00188913};

}  // namespace

TEST(McIsing, StripMatchesTransferMatrix) {
  ScanSpec spec{strip_box(2, 16, 8, 4), {}, 0.2, BetaSchedule::infinite()};
  for (int n = 6; n <= 16; ++n) spec.ns.push_back(n);
  SamplingPlan plan;
  plan.sweeps = 200000;
  plan.ising_update = SamplingPlan::IsingUpdate::SwendsenWang;
  auto sw = decay_scan(spec, plan, {17, 0});
  plan.sweeps = 100000;
  plan.ising_update = SamplingPlan::IsingUpdate::HeatBath;
  auto hb = decay_scan(spec, plan, {17, 0});
  for (std::size_t i = 0; i < kStrip8.size(); ++i) {
    EXPECT_EQ(sw[i].est.estimator, "cluster");
    EXPECT_LE(std::fabs(sw[i].est.mean - kStrip8[i]), 3 * sw[i].est.stderr_) << sw[i].n;
    EXPECT_LE(std::fabs(hb[i].est.mean - kStrip8[i]), 3 * hb[i].est.stderr_) << hb[i].n;
    EXPECT_LT(sw[i].est.stderr_, hb[i].est.stderr_);
  }
}

TEST(McIsing, SwendsenWangMatchesExactAndRawEstimator) {
  BoxSpec box = BoxSpec::sizes({3, 3});
  double exact = exact_Z_ratio_ising(0.25, box, {0, 0}, {3, 2});
  SamplingPlan plan;
  plan.sweeps = 200000;
  plan.ising_update = SamplingPlan::IsingUpdate::SwendsenWang;
  auto est = mc_ising_correlation(0.25, box, {0, 0}, {3, 2}, plan, {3, 0});
  EXPECT_LE(std::fabs(est.mean - exact), 3 * est.stderr_) << est.mean << " vs " << exact;
  plan.improved = false;
  auto raw = mc_ising_correlation(0.25, box, {0, 0}, {3, 2}, plan, {3, 0});
  EXPECT_EQ(raw.estimator, "raw");
  EXPECT_LE(std::fabs(raw.mean - exact), 3 * raw.stderr_);
  auto again = mc_ising_correlation(0.25, box, {0, 0}, {3, 2}, plan, {3, 0});
  EXPECT_EQ(raw.mean, again.mean);
}

TEST(McIsing, StripFitFromSampledData) {
  ScanSpec spec{strip_box(2, 20, 8, 10), {}, 0.2, BetaSchedule::infinite()};
  for (int n = 6; n <= 20; ++n) spec.ns.push_back(n);
  SamplingPlan plan;
  plan.sweeps = 400000;
  plan.ising_update = SamplingPlan::IsingUpdate::SwendsenWang;
  auto rows = decay_scan(spec, plan, {1, 0});
  std::vector<DecayPoint> d;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_LE(std::fabs(rows[i].est.mean - kStrip8Long[i]), 3 * rows[i].est.stderr_) << rows[i].n;
    d.push_back({double(rows[i].n), rows[i].est.mean, rows[i].est.stderr_});
  }
  // rows share one chain, so only per-point errors are calibrated
  auto f = fit_decay(d);
  EXPECT_EQ(f.points, 15);
  EXPECT_GT(f.p + 2 * f.sigma_p(), 0.0);
}
