#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "z2higgs/errors.hpp"

namespace z2higgs {

struct DecayPoint {
  double n = 0.0;
  double y = 0.0;
  double sigma = 0.0;
};

struct FitOptions {
  double n_min = -std::numeric_limits<double>::infinity();
  double n_max = std::numeric_limits<double>::infinity();
  double snr_min = 2.0;      // points with y <= snr_min * sigma are dropped
  double cond_max = 1e10;    // condition number of the weighted design
};

// Weighted least squares of log y on (1, -n, -log n) or (1, -n).
struct ModelFit {
  bool has_p = true;
  double C = 0.0, c = 0.0, p = 0.0;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // over (C, c, p); p row/col zero for the pure exponential
  double chi2 = 0.0;
  int dof = 0;
  double aic = 0.0;
  double condition = 0.0;
};

struct FitResult {
  double C = 0.0, c = 0.0, p = 0.0;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  double n_min = 0.0, n_max = 0.0;
  double residual_norm = 0.0;  // weighted, full model
  std::string method = "wls-log";
  double condition = 0.0;
  int points = 0;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  ModelFit full;
  ModelFit pure;
  std::vector<std::string> warnings;

  double sigma_c() const { return std::sqrt(covariance(1, 1)); }
  double sigma_p() const { return std::sqrt(covariance(2, 2)); }
  // Akaike difference; positive means the pure exponential is worse
  double delta_aic() const { return pure.aic - full.aic; }
  bool prefers_power() const { return pure.aic > full.aic; }
};

namespace detail {

inline ModelFit wls_fit(const std::vector<DecayPoint>& pts, bool with_p, double cond_max) {
  const int k = with_p ? 3 : 2;
  const Eigen::Index m = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd X(m, k);
  Eigen::VectorXd b(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& q = pts[static_cast<std::size_t>(i)];
    double w = q.y / q.sigma;  // 1 / sigma_log
    X(i, 0) = w;
    X(i, 1) = -q.n * w;
    if (with_p) X(i, 2) = -std::log(q.n) * w;
    b(i) = std::log(q.y) * w;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
  const auto& sv = svd.singularValues();
  ModelFit f;
  f.has_p = with_p;
  f.condition = sv(k - 1) > 0 ? sv(0) / sv(k - 1) : std::numeric_limits<double>::infinity();
  if (!(f.condition <= cond_max))
    throw NumericError("decay fit design is rank deficient or ill-conditioned (condition " + std::to_string(f.condition) + ")");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  Eigen::VectorXd theta = qr.solve(b);
  Eigen::VectorXd r = X * theta - b;
  f.chi2 = r.squaredNorm();
  f.dof = static_cast<int>(m) - k;
  f.aic = f.chi2 + 2.0 * k;
  Eigen::MatrixXd XtX = X.transpose() * X;
  Eigen::MatrixXd cov = XtX.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  cov = 0.5 * (cov + cov.transpose());
  f.C = std::exp(theta(0));
  f.c = theta(1);
  f.p = with_p ? theta(2) : 0.0;
  // (log C, c, p) -> (C, c, p)
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(k, k);
  J(0, 0) = f.C;
  Eigen::MatrixXd covC = J * cov * J.transpose();
  f.covariance.setZero();
  f.covariance.topLeftCorner(k, k) = covC;
  return f;
}

}  // namespace detail

// y ~ C exp(-c n) / n^p, weights from sigma_log = sigma / y; the pure exponential is fitted alongside.
inline FitResult fit_decay(const std::vector<DecayPoint>& data, const FitOptions& opt = {}) {
  FitResult res;
  std::vector<DecayPoint> pts;
  for (const auto& q : data) {
    if (q.n < opt.n_min || q.n > opt.n_max) continue;
    if (!(q.sigma > 0) || !std::isfinite(q.sigma)) throw PreconditionError("sigma must be positive and finite");
    if (!(q.n > 0)) throw PreconditionError("n must be positive");
    if (!(q.y > 0)) {
      res.warnings.push_back("dropped n=" + std::to_string(q.n) + ": nonpositive y");
      continue;
    }
    if (q.y <= opt.snr_min * q.sigma) {
      res.warnings.push_back("dropped n=" + std::to_string(q.n) + ": y below signal threshold");
      continue;
    }
    pts.push_back(q);
  }
  if (pts.size() < 4) throw PreconditionError("decay fit needs at least 4 usable points, got " + std::to_string(pts.size()));
  res.full = detail::wls_fit(pts, true, opt.cond_max);
  res.pure = detail::wls_fit(pts, false, opt.cond_max);
  res.C = res.full.C;
  res.c = res.full.c;
  res.p = res.full.p;
  res.covariance = res.full.covariance;
  res.condition = res.full.condition;
  res.residual_norm = std::sqrt(res.full.chi2);
  res.points = static_cast<int>(pts.size());
  res.n_min = pts.front().n;
  res.n_max = pts.front().n;
  for (const auto& q : pts) {
    res.n_min = std::min(res.n_min, q.n);
    res.n_max = std::max(res.n_max, q.n);
  }
  return res;
}

struct CompareReport {
  double c_gauge = 0.0, c_ising = 0.0;
  double delta = 0.0;
  double sigma = 0.0;      // pooled
  double tolerance = 0.0;  // max(rel_tol |c_ising|, n_sigma sigma)
  bool pass = false;
};

inline CompareReport compare_c(const FitResult& gauge, const FitResult& ising, double rel_tol = 0.10, double n_sigma = 2.0) {
  if (!(gauge.kappa == ising.kappa)) throw PreconditionError("compare_c needs fits at the same kappa");
  if (gauge.n_max < ising.n_min || ising.n_max < gauge.n_min) throw PreconditionError("fit ranges do not overlap");
  CompareReport r;
  r.c_gauge = gauge.c;
  r.c_ising = ising.c;
  r.delta = gauge.c - ising.c;
  r.sigma = std::sqrt(gauge.covariance(1, 1) + ising.covariance(1, 1));
  r.tolerance = std::max(rel_tol * std::fabs(ising.c), n_sigma * r.sigma);
  r.pass = std::fabs(r.delta) <= r.tolerance;
  return r;
}

}  // namespace z2higgs
