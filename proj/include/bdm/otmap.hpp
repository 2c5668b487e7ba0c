#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bdm/snmatch.hpp"

namespace bdm {

// Transport map from a fitted skew-normal to the standard normal, composed of
// a rotation aligning the skew direction with coordinate 1, a univariate
// Gaussianization of that coordinate, and an affine standardization.
struct OtMap {
  Mat Q;                  // orthogonal; first column along the skew direction
  double omega1_sq = 0.0; // scale of rotated coordinate 1, [Q' Omega Q]_11
  double shape1 = 0.0;    // scalar skewness of rotated coordinate 1
  Vec mu;                 // mean of the rotated vector after Gaussianization
  Mat V;                  // its covariance (exact, by 1-D quadrature)
  Mat V_inv_sqrt;         // inverse lower Cholesky factor of V
};

namespace detail {

// The SN CDF is evaluated as Phi(z) - 2 T(z, alpha); in the tail the skew
// factor pushes mass away from, the two terms cancel and the difference drops
// below the round-off noise floor around 1e-17. Saturate the quantile at the
// last resolvable probability instead of transporting noise.
constexpr double kSnCdfFloor = 1e-13;
constexpr double kSnCdfCeil = 1.0 - 1e-13;

// Gaussianizer of the first rotated coordinate: z -> Phi^-1(F_SN(z)),
// saturating (with a flag) where the CDF is numerically unresolvable.
inline double ot_gaussianize(const OtMap& map, double z, bool* saturated) {
  double f = sn_cdf(z, 0.0, map.omega1_sq, map.shape1);
  if (f < kSnCdfFloor || f > kSnCdfCeil) {
    if (saturated != nullptr) *saturated = true;
    f = std::clamp(f, kSnCdfFloor, kSnCdfCeil);
  }
  return norm_quantile(f);
}

}  // namespace detail

inline OtMap build_ot(const SnParams& params) {
  detail::check_sn_params(params, "build_ot");
  const int d = static_cast<int>(params.xi.size());
  const Vec eta = detail::sn_eta(params);
  const double a = eta.norm();

  OtMap map;
  if (a < 1e-14) {
    map.Q = Mat::Identity(d, d);
  } else {
    // Householder reflection exchanging e1 and the unit skew direction, so
    // the first column of Q is the skew direction itself.
    Vec v = eta / a;
    v[0] -= 1.0;
    const double vn2 = v.squaredNorm();
    map.Q = vn2 < 1e-28 ? Mat::Identity(d, d)
                        : Mat(Mat::Identity(d, d) - (2.0 / vn2) * (v * v.transpose()));
  }

  const Mat sigma = map.Q.transpose() * params.Omega * map.Q;
  map.omega1_sq = sigma(0, 0);
  map.shape1 = a * std::sqrt(map.omega1_sq);

  // Rotated skewness vector and the moments of the rotated SN: the Phi factor
  // depends only on coordinate 1, so coordinates 2..d stay jointly normal
  // given it and only their covariance against coordinate 1 changes when it
  // is replaced by its Gaussianized version.
  const double q = a * a * map.omega1_sq;
  const Vec delta_rot = sigma.col(0) * (a / std::sqrt(1.0 + q));
  map.mu = std::sqrt(2.0 / detail::kPi) * delta_rot;
  map.mu[0] = 0.0;

  double c1;
  if (a < 1e-14) {
    c1 = std::sqrt(map.omega1_sq);  // linear Gaussianizer: E[(z/omega1) z]
  } else {
    c1 = integrate_1d(
        [&](double z) {
          return detail::ot_gaussianize(map, z, nullptr) * z *
                 sn_pdf1(z, 0.0, map.omega1_sq, map.shape1);
        },
        -std::numeric_limits<double>::infinity(),
        std::numeric_limits<double>::infinity(), 1e-11);
  }

  map.V = sigma - (2.0 / detail::kPi) * (delta_rot * delta_rot.transpose());
  map.V(0, 0) = 1.0;
  for (int j = 1; j < d; ++j) {
    const double cross = sigma(j, 0) / map.omega1_sq * c1;
    map.V(0, j) = cross;
    map.V(j, 0) = cross;
  }

  Eigen::LLT<Mat> llt(map.V);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("build_ot: standardization covariance not positive definite");
  map.V_inv_sqrt =
      Mat(llt.matrixL()).triangularView<Eigen::Lower>().solve(Mat::Identity(d, d));
  return map;
}

// Apply the transport map: rotate, Gaussianize coordinate 1, standardize.
inline Vec ot_apply(const OtMap& map, const SnParams& params, const Vec& x,
                    bool* saturated = nullptr) {
  const int d = static_cast<int>(params.xi.size());
  if (x.size() != d) throw DimensionError("ot_apply: point dimension mismatch");
  if (map.Q.rows() != d) throw DimensionError("ot_apply: map/parameter dimension mismatch");
  Vec z = map.Q.transpose() * (x - params.xi);
  z[0] = detail::ot_gaussianize(map, z[0], saturated);
  return map.V_inv_sqrt * (z - map.mu);
}

// The unique point the map sends to the origin, found by Newton on the
// squared norm of the map (equivalently a Newton solve of T(x) = 0 with a
// finite-difference Jacobian), seeded by inverting the map analytically.
inline Vec ot_center(const OtMap& map, const SnParams& params) {
  const int d = static_cast<int>(params.xi.size());

  // Analytic seed: coordinate 1 at the SN median, others at their means.
  auto f_centered = [&](double z) { return sn_cdf(z, 0.0, map.omega1_sq, map.shape1) - 0.5; };
  const double w1 = std::sqrt(map.omega1_sq);
  double z1 = 0.0;
  if (map.shape1 != 0.0) {
    z1 = detail::brent_root(f_centered, -10.0 * w1, 10.0 * w1, f_centered(-10.0 * w1),
                            f_centered(10.0 * w1), 1e-14);
  }
  Vec z = map.mu;
  z[0] = z1;
  Vec x = params.xi + map.Q * z;

  for (int iter = 0; iter < 20; ++iter) {
    const Vec t0 = ot_apply(map, params, x);
    if (t0.squaredNorm() <= 1e-20) break;
    Mat jac(d, d);
    const double h = 1e-6;
    for (int j = 0; j < d; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      jac.col(j) = (ot_apply(map, params, xp) - ot_apply(map, params, xm)) / (2.0 * h);
    }
    x -= jac.partialPivLu().solve(t0);
  }
  return x;
}

// Multivariate skew-normal BDM: the chi-squared fold of the squared norm of
// the transported point. For d = 1 this reduces exactly to the univariate
// CDF fold, which also fixes the squared-norm convention.
inline BdmResult bdm_sn_multi(const SnParams& params, const Vec& theta0) {
  detail::check_sn_params(params, "bdm_sn_multi");
  const int d = static_cast<int>(params.xi.size());
  if (theta0.size() != d) throw DimensionError("bdm_sn_multi: theta0 dimension mismatch");

  const OtMap map = build_ot(params);
  bool saturated = false;
  const Vec u = ot_apply(map, params, theta0, &saturated);
  const double w = u.squaredNorm();

  BdmResult res;
  res.method = "sn";
  res.delta = chi2_cdf(w, d);
  if (d == 1) res.tail_low = norm_cdf(u[0]);
  res.diagnostics["t_norm_sq"] = w;
  res.diagnostics["df"] = static_cast<double>(d);
  for (int i = 0; i < d; ++i) res.diagnostics["u" + std::to_string(i)] = u[i];
  if (saturated) res.diagnostics["saturated"] = 1.0;
  return res;
}

// Seeded Monte Carlo check that the map pushes the skew-normal forward to the
// standard normal: moment diagnostics plus a chi-squared QQ correlation.
struct PushforwardReport {
  double max_abs_mean = 0.0;
  double max_cov_dev = 0.0;   // sup-norm of (sample covariance - identity)
  double max_abs_skew = 0.0;  // largest |coordinate skewness|
  double qq_corr = 0.0;       // Pearson corr of sorted |U|^2 vs chi2 quantiles
  int n_draws = 0;
  bool saturated = false;
};

inline PushforwardReport pushforward_diagnostic(const SnParams& params, int n_draws,
                                                std::uint64_t seed) {
  detail::check_sn_params(params, "pushforward_diagnostic");
  if (n_draws < 10000)
    throw DomainError("pushforward_diagnostic: need at least 10^4 draws");
  const int d = static_cast<int>(params.xi.size());

  const OtMap map = build_ot(params);
  const Mat draws = sn_sample(params, n_draws, seed);

  PushforwardReport rep;
  rep.n_draws = n_draws;
  Mat u(n_draws, d);
  std::vector<double> norms(static_cast<size_t>(n_draws));
  for (int r = 0; r < n_draws; ++r) {
    const Vec ur = ot_apply(map, params, draws.row(r).transpose(), &rep.saturated);
    u.row(r) = ur.transpose();
    norms[static_cast<size_t>(r)] = ur.squaredNorm();
  }

  const Vec mean = u.colwise().mean();
  rep.max_abs_mean = mean.lpNorm<Eigen::Infinity>();
  const Mat centered = u.rowwise() - mean.transpose();
  const Mat cov = centered.transpose() * centered / static_cast<double>(n_draws - 1);
  rep.max_cov_dev = (cov - Mat::Identity(d, d)).lpNorm<Eigen::Infinity>();
  for (int j = 0; j < d; ++j) {
    const double m2 = centered.col(j).array().square().mean();
    const double m3 = centered.col(j).array().cube().mean();
    rep.max_abs_skew = std::max(rep.max_abs_skew, std::abs(m3 / std::pow(m2, 1.5)));
  }

  std::sort(norms.begin(), norms.end());
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int i = 0; i < n_draws; ++i) {
    const double x = chi2_quantile((i + 0.5) / n_draws, d);
    const double y = norms[static_cast<size_t>(i)];
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double n = n_draws;
  rep.qq_corr = (n * sxy - sx * sy) /
                std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return rep;
}

}  // namespace bdm
