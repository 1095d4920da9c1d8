// Z[gamma]/Z[0] for a short line three ways: brute force, cluster expansion, Monte Carlo.
#include <cstdio>

#include "z2higgs/cluster.hpp"
#include "z2higgs/exact.hpp"
#include "z2higgs/mc.hpp"

using namespace z2higgs;

int main() {
  ModelParams mp{BoxSpec::sizes({3, 2}), 1.5, 0.1};
  CellComplex cx(mp.box);
  auto gn = straight_path(cx, {0, 1}, 0, 2);

  double exact = exact_Z_ratio(mp, gn).ratio;

  ExpansionConfig cfg;
  cfg.max_norm1 = 10;
  cfg.max_norm2 = 6;
  cfg.max_cluster_size = 6;
  ClusterExpansion ce(mp, cfg);
  double expanded = ce.z_ratio(gn, 8);

  SamplingPlan plan;
  plan.sweeps = 200000;
  auto est = mc_wilson(mp, gn, plan, {2024, 0});

  std::printf("exact      %.10f\n", exact);
  std::printf("expansion  %.10f  (diff %.2e)\n", expanded, expanded - exact);
  std::printf("monte carlo %.6f +- %.6f  (tau_int %.1f)\n", est.mean, est.stderr_, est.tau_int);
}
