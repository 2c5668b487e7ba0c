#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdm/model.hpp"
#include "bdm/special.hpp"

namespace bdm {

// Standardization used inside the tail-area correction term q: "general"
// takes the prior ratio straight from the model's log-prior; "jeffreys"
// substitutes the square-root expected-information ratio (falling back to
// observed information when the model has no expected-information function).
enum class PriorMode { general, jeffreys };

namespace detail {

inline Vec loglik_gradient(const ModelSpec& m, const Dataset& d, const Vec& x) {
  if (m.loglik_grad) return m.loglik_grad(x, d);
  RealFunction f = [&](const Vec& t) { return m.loglik(t, d); };
  return fd_derivatives(f, x, 1).gradient;
}

inline double logprior_or_flat(const ModelSpec& m, const Vec& x) {
  if (!m.logprior) return 0.0;
  const double v = m.logprior(x);
  if (std::isnan(v)) throw EvaluationError("log-prior evaluated to NaN");
  return v;
}

// Signed likelihood-root statistic r(v) = sign(hat - v) sqrt(2(l(hat) - l(v)))
// where l is a scalar profile of the log-likelihood (identity profile when
// d = 1). Tiny negative radicands from optimizer slack are clamped.
inline double signed_root(double l_hat, double l_at, double center, double value) {
  if (!std::isfinite(l_at))
    throw EvaluationError("likelihood root: non-finite log-likelihood at the hypothesis");
  double two = 2.0 * (l_hat - l_at);
  if (two < 0.0) {
    if (two < -1e-7 * (1.0 + std::abs(l_hat)))
      throw EvaluationError("likelihood root: log-likelihood exceeds its fitted maximum");
    two = 0.0;
  }
  const double s = center > value ? 1.0 : (center < value ? -1.0 : 0.0);
  return s * std::sqrt(two);
}

inline double rstar_from_parts(double r, double q) {
  const double ratio = q / r;
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw EvaluationError("rstar: correction ratio q/r is not positive and finite");
  return r + std::log(ratio) / r;
}

inline double lagrange4(const double* x, const double* y, double t) {
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    double li = 1.0;
    for (int j = 0; j < 4; ++j) {
      if (j == i) continue;
      li *= (t - x[j]) / (x[i] - x[j]);
    }
    acc += y[i] * li;
  }
  return acc;
}

constexpr double kRootGuard = 1e-4;   // |r| below this is the removable singularity band
constexpr double kBridgeStep = 1e-2;  // bridge abscissae at r ~ {+-1, +-2} * this

struct RstarEval {
  double r = 0.0;
  double q = 0.0;
  double rstar = 0.0;
  bool bridged = false;
};

inline double q_general_or_jeffreys(const ModelSpec& m, const Dataset& d,
                                    const PosteriorGeometry& g, double theta0, PriorMode mode,
                                    bool* used_observed_fallback) {
  Vec t0(1);
  t0 << theta0;
  const double l1 = loglik_gradient(m, d, t0)[0];
  const double j_hat = g.obs_info_mle(0, 0);
  if (!(j_hat > 0.0))
    throw LinearAlgebraError("rstar: observed information at the MLE is not positive");
  double ratio;
  if (mode == PriorMode::jeffreys) {
    double i_hat, i_0;
    if (m.expected_info) {
      i_hat = m.expected_info(g.mle)(0, 0);
      i_0 = m.expected_info(t0)(0, 0);
    } else {
      i_hat = j_hat;
      i_0 = neg_loglik_hessian(m, d, t0)(0, 0);
      if (used_observed_fallback) *used_observed_fallback = true;
    }
    if (!(i_hat > 0.0) || !(i_0 > 0.0))
      throw EvaluationError("rstar: nonpositive information in the Jeffreys standardization");
    ratio = std::sqrt(i_hat / i_0);
  } else {
    const double lp_hat = logprior_or_flat(m, g.mle);
    const double lp_0 = logprior_or_flat(m, t0);
    if (!std::isfinite(lp_hat) || !std::isfinite(lp_0))
      throw EvaluationError("rstar: log-prior is not finite at an evaluation point");
    ratio = std::exp(lp_hat - lp_0);
  }
  return l1 / std::sqrt(j_hat) * ratio;
}

inline RstarEval rstar_eval(const ModelSpec& m, const Dataset& d, const PosteriorGeometry& g,
                            double theta0, PriorMode mode, bool* fallback_note = nullptr) {
  const double l_hat = m.loglik(g.mle, d);
  Vec t0(1);
  t0 << theta0;
  const double theta_hat = g.mle[0];

  auto root_at = [&](double th) {
    Vec tv(1);
    tv << th;
    return signed_root(l_hat, m.loglik(tv, d), theta_hat, th);
  };

  RstarEval e;
  e.r = root_at(theta0);
  e.q = q_general_or_jeffreys(m, d, g, theta0, mode, fallback_note);
  if (std::abs(e.r) >= kRootGuard) {
    e.rstar = rstar_from_parts(e.r, e.q);
    return e;
  }
  // Removable singularity at the MLE: interpolate r*(theta) with a cubic
  // through four points safely outside the guard band (r ~ +-0.01, +-0.02).
  const double sd = 1.0 / std::sqrt(g.obs_info_mle(0, 0));
  const double cs[4] = {-2.0 * kBridgeStep, -kBridgeStep, kBridgeStep, 2.0 * kBridgeStep};
  double xs[4], ys[4];
  for (int k = 0; k < 4; ++k) {
    xs[k] = theta_hat - cs[k] * sd;
    const double rk = root_at(xs[k]);
    const double qk = q_general_or_jeffreys(m, d, g, xs[k], mode, nullptr);
    ys[k] = rstar_from_parts(rk, qk);
  }
  e.rstar = lagrange4(xs, ys, theta0);
  e.bridged = true;
  return e;
}

}  // namespace detail

// First-order approximation: fold the normal tail of the Wald pivot
// z = (theta0 - mle) sqrt(j(mle)). Scalar parameters only.
inline BdmResult bdm_io(const PosteriorGeometry& geom, double theta0) {
  if (geom.mle.size() != 1)
    throw DimensionError("bdm_io: scalar-parameter operation (d = 1); use the profile variant");
  const double j = geom.obs_info_mle(0, 0);
  if (!(j > 0.0)) throw LinearAlgebraError("bdm_io: observed information is not positive");
  const double z = (theta0 - geom.mle[0]) * std::sqrt(j);
  BdmResult res = fold_tail("io", norm_cdf(z));
  res.diagnostics["z"] = z;
  res.diagnostics["j_mle"] = j;
  return res;
}

// First-order approximation for one coordinate of a multi-parameter model,
// standardized by the profile information 1/[j(mle)^-1]_{psi,psi}. An FD
// second difference of the profile log-likelihood is exposed alongside as an
// independent cross-check of that curvature.
inline BdmResult bdm_io_profile(const ModelSpec& model, const Dataset& data,
                                const PosteriorGeometry& geom, int psi_index, double psi0) {
  const int d = model.dim;
  if (d < 2) throw DimensionError("bdm_io_profile: requires d >= 2 (use bdm_io for scalars)");
  if (psi_index < 0 || psi_index >= d)
    throw DimensionError("bdm_io_profile: psi_index out of range");
  Eigen::LLT<Mat> llt(geom.obs_info_mle);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("bdm_io_profile: observed information is singular");
  const Mat inv = llt.solve(Mat::Identity(d, d));
  const double var_psi = inv(psi_index, psi_index);
  if (!(var_psi > 0.0))
    throw LinearAlgebraError("bdm_io_profile: nonpositive profile variance");
  const double j_p = 1.0 / var_psi;
  const double psi_hat = geom.mle[psi_index];

  RealFunction ll = [&](const Vec& t) { return model.loglik(t, data); };
  auto lprof = [&](double pv) {
    Vec lam = detail::drop_index(geom.mle, psi_index);
    lam = profile_maximize(ll, psi_index, pv, lam);
    return model.loglik(detail::embed_slice(psi_index, pv, lam), data);
  };
  const double l_max = model.loglik(geom.mle, data);
  auto second_diff = [&](double hh) {
    return -(lprof(psi_hat + hh) - 2.0 * l_max + lprof(psi_hat - hh)) / (hh * hh);
  };
  // Richardson-extrapolated second difference (base step 0.05 se) so the
  // O(h^2) truncation term cancels out of the cross-check.
  const double h = 0.05 / std::sqrt(j_p);
  const double j_p_fd = (4.0 * second_diff(0.5 * h) - second_diff(h)) / 3.0;

  const double z = (psi0 - psi_hat) * std::sqrt(j_p);
  BdmResult res = fold_tail("io-profile", norm_cdf(z));
  res.diagnostics["z"] = z;
  res.diagnostics["j_profile"] = j_p;
  res.diagnostics["j_profile_fd"] = j_p_fd;
  return res;
}

// Third-order tail statistic r*(theta0) for a scalar parameter. Inside the
// guard band around the MLE the removable singularity is bridged by cubic
// interpolation (the returned value is the bridge value).
inline double rstar(const ModelSpec& model, const Dataset& data, const PosteriorGeometry& geom,
                    double theta0, PriorMode prior_mode = PriorMode::general) {
  if (model.dim != 1 || geom.mle.size() != 1)
    throw DimensionError("rstar: scalar-parameter operation (d = 1)");
  return detail::rstar_eval(model, data, geom, theta0, prior_mode).rstar;
}

// Third-order BDM: tail_low = Phi(-r*). Inside the guard band the reported
// delta follows the raw statistic r (so the value at the MLE prints as 0)
// while the bridged r* remains available in the diagnostics.
inline BdmResult bdm_ho(const ModelSpec& model, const Dataset& data,
                        const PosteriorGeometry& geom, double theta0,
                        PriorMode prior_mode = PriorMode::general) {
  if (model.dim != 1 || geom.mle.size() != 1)
    throw DimensionError("bdm_ho: scalar-parameter operation (d = 1)");
  bool fallback = false;
  const detail::RstarEval e = detail::rstar_eval(model, data, geom, theta0, prior_mode, &fallback);
  const double stat = e.bridged ? e.r : e.rstar;
  BdmResult res = fold_tail("ho", norm_cdf(-stat));
  res.diagnostics["r"] = e.r;
  res.diagnostics["q"] = e.q;
  res.diagnostics["rstar"] = e.rstar;
  res.diagnostics["bridged"] = e.bridged ? 1.0 : 0.0;
  if (fallback) res.diagnostics["jeffreys_fallback_observed"] = 1.0;
  return res;
}

namespace detail {

struct RstarProfileEval {
  double r = 0.0;
  double q = 0.0;
  double rstar = 0.0;
  bool bridged = false;
  Vec lam_hat_psi0;
};

inline RstarProfileEval rstar_profile_eval(const ModelSpec& m, const Dataset& d,
                                           const PosteriorGeometry& g, int psi_index,
                                           double psi0) {
  const int dim = m.dim;
  if (dim < 2) throw DimensionError("rstar_profile: requires d >= 2 (use rstar for scalars)");
  if (psi_index < 0 || psi_index >= dim)
    throw DimensionError("rstar_profile: psi_index out of range");

  RealFunction ll = [&](const Vec& t) { return m.loglik(t, d); };
  const double l_hat = m.loglik(g.mle, d);
  const double psi_hat = g.mle[psi_index];

  Eigen::LLT<Mat> llt(g.obs_info_mle);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("rstar_profile: observed information is singular");
  const Mat inv = llt.solve(Mat::Identity(dim, dim));
  const double var_psi = inv(psi_index, psi_index);
  if (!(var_psi > 0.0)) throw LinearAlgebraError("rstar_profile: nonpositive profile variance");
  const double j_p = 1.0 / var_psi;

  Mat j_ll_hat(dim - 1, dim - 1);
  {
    int a = 0;
    for (int r = 0; r < dim; ++r) {
      if (r == psi_index) continue;
      int b = 0;
      for (int c = 0; c < dim; ++c) {
        if (c == psi_index) continue;
        j_ll_hat(a, b++) = g.obs_info_mle(r, c);
      }
      ++a;
    }
  }
  const double det_hat = j_ll_hat.determinant();
  if (!(det_hat > 0.0))
    throw LinearAlgebraError("rstar_profile: nuisance information at the MLE is not positive");

  struct Parts {
    double r, q;
    Vec lam;
  };
  auto parts_at = [&](double pv) -> Parts {
    Vec lam = drop_index(g.mle, psi_index);
    lam = profile_maximize(ll, psi_index, pv, lam);
    const Vec full = embed_slice(psi_index, pv, lam);
    const double r = signed_root(l_hat, m.loglik(full, d), psi_hat, pv);

    const double lp1 = loglik_gradient(m, d, full)[psi_index];  // envelope derivative
    Mat h_full = neg_loglik_hessian(m, d, full);
    Mat j_ll0(dim - 1, dim - 1);
    int a = 0;
    for (int rr = 0; rr < dim; ++rr) {
      if (rr == psi_index) continue;
      int b = 0;
      for (int cc = 0; cc < dim; ++cc) {
        if (cc == psi_index) continue;
        j_ll0(a, b++) = h_full(rr, cc);
      }
      ++a;
    }
    const double det0 = j_ll0.determinant();
    if (!(det0 > 0.0))
      throw LinearAlgebraError(
          "rstar_profile: nuisance information at the constrained fit is not positive");
    const double prior_ratio =
        std::exp(logprior_or_flat(m, g.mle) - logprior_or_flat(m, full));
    if (!std::isfinite(prior_ratio))
      throw EvaluationError("rstar_profile: prior ratio is not finite");
    const double q = lp1 / std::sqrt(j_p) * std::sqrt(det0 / det_hat) * prior_ratio;
    return {r, q, lam};
  };

  RstarProfileEval e;
  const Parts p0 = parts_at(psi0);
  e.r = p0.r;
  e.q = p0.q;
  e.lam_hat_psi0 = p0.lam;
  if (std::abs(e.r) >= kRootGuard) {
    e.rstar = rstar_from_parts(e.r, e.q);
    return e;
  }
  const double sd = 1.0 / std::sqrt(j_p);
  const double cs[4] = {-2.0 * kBridgeStep, -kBridgeStep, kBridgeStep, 2.0 * kBridgeStep};
  double xs[4], ys[4];
  for (int k = 0; k < 4; ++k) {
    xs[k] = psi_hat - cs[k] * sd;
    const Parts pk = parts_at(xs[k]);
    ys[k] = rstar_from_parts(pk.r, pk.q);
  }
  e.rstar = lagrange4(xs, ys, psi0);
  e.bridged = true;
  return e;
}

}  // namespace detail

// Profile third-order statistic r*_B(psi0) for one coordinate of a
// multi-parameter model; nuisance parameters are maximized out of the
// likelihood and the correction carries the nuisance-information determinant
// ratio and the prior ratio between the two fits.
inline double rstar_profile(const ModelSpec& model, const Dataset& data,
                            const PosteriorGeometry& geom, int psi_index, double psi0) {
  return detail::rstar_profile_eval(model, data, geom, psi_index, psi0).rstar;
}

inline BdmResult bdm_ho_profile(const ModelSpec& model, const Dataset& data,
                                const PosteriorGeometry& geom, int psi_index, double psi0) {
  const detail::RstarProfileEval e =
      detail::rstar_profile_eval(model, data, geom, psi_index, psi0);
  const double stat = e.bridged ? e.r : e.rstar;
  BdmResult res = fold_tail("ho-profile", norm_cdf(-stat));
  res.diagnostics["r"] = e.r;
  res.diagnostics["q"] = e.q;
  res.diagnostics["rstar"] = e.rstar;
  res.diagnostics["bridged"] = e.bridged ? 1.0 : 0.0;
  return res;
}

namespace detail {

// Expand a bracket from `center` in direction `dir` until f changes to the
// requested sign (r*-style functions decrease in theta, so the left side
// seeks positive values and the right side negative ones). Steps that leave
// the support (errors / non-finite values) shrink instead of expanding.
template <typename F>
std::pair<double, double> seek_sign(const F& f, double center, double scale, double dir,
                                    bool want_positive, const char* who) {
  double step = scale;
  for (int k = 0; k < 50; ++k) {
    const double x = center + dir * step;
    bool ok = true;
    double fx = std::numeric_limits<double>::quiet_NaN();
    try {
      fx = f(x);
      if (!std::isfinite(fx)) ok = false;
    } catch (const Error&) {
      ok = false;
    }
    if (ok && (want_positive ? fx > 0.0 : fx < 0.0)) return {x, fx};
    step *= ok ? 2.0 : 0.5;
  }
  throw BracketingError(std::string(who) + ": no sign change within 50 bracket expansions");
}

}  // namespace detail

// Implied posterior median: the root of r*(theta) = 0 (or r*_B(psi) = 0 when
// a coordinate index is given for a multi-parameter model).
inline double posterior_median_rstar(const ModelSpec& model, const Dataset& data,
                                     const PosteriorGeometry& geom,
                                     std::optional<int> psi_index = std::nullopt,
                                     PriorMode prior_mode = PriorMode::general) {
  const int d = model.dim;
  int pi = 0;
  if (d == 1) {
    if (psi_index.has_value() && *psi_index != 0)
      throw DimensionError("posterior_median_rstar: psi_index out of range for d = 1");
  } else {
    if (!psi_index.has_value())
      throw DimensionError("posterior_median_rstar: psi_index required when d > 1");
    pi = *psi_index;
    if (pi < 0 || pi >= d)
      throw DimensionError("posterior_median_rstar: psi_index out of range");
  }
  const double center = geom.mle[pi];
  Eigen::LLT<Mat> llt(geom.obs_info_mle);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("posterior_median_rstar: observed information is singular");
  const Mat inv = llt.solve(Mat::Identity(d, d));
  const double sd = std::sqrt(inv(pi, pi));

  auto f = [&](double t) {
    return d == 1 ? rstar(model, data, geom, t, prior_mode)
                  : rstar_profile(model, data, geom, pi, t);
  };
  const auto [a, fa] = detail::seek_sign(f, center, sd, -1.0, true, "posterior_median_rstar");
  const auto [b, fb] = detail::seek_sign(f, center, sd, +1.0, false, "posterior_median_rstar");
  return detail::brent_root(f, a, b, fa, fb, 1e-10 * std::max(1.0, std::abs(center)));
}

// Equi-tailed credible interval from the r* tail approximation: endpoints
// solve |r*(theta)| = z_{1-alpha/2}. Scalar parameters only.
inline std::pair<double, double> credible_interval_rstar(const ModelSpec& model,
                                                         const Dataset& data,
                                                         const PosteriorGeometry& geom,
                                                         double alpha,
                                                         PriorMode prior_mode = PriorMode::general) {
  if (model.dim != 1) throw DimensionError("credible_interval_rstar: scalar-parameter operation");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("credible_interval_rstar: alpha must lie in (0, 1)");
  const double z = norm_quantile(1.0 - alpha / 2.0);
  const double med = posterior_median_rstar(model, data, geom, std::nullopt, prior_mode);
  const double sd = 1.0 / std::sqrt(geom.obs_info_mle(0, 0));

  auto f = [&](double t) { return rstar(model, data, geom, t, prior_mode); };
  auto lower_g = [&](double t) { return f(t) - z; };
  auto upper_g = [&](double t) { return f(t) + z; };
  const auto [la, lfa] =
      detail::seek_sign(lower_g, med, sd, -1.0, true, "credible_interval_rstar");
  const double lower = detail::brent_root(lower_g, la, med, lfa, f(med) - z,
                                          1e-10 * std::max(1.0, std::abs(med)));
  const auto [ub, ufb] =
      detail::seek_sign(upper_g, med, sd, +1.0, false, "credible_interval_rstar");
  const double upper = detail::brent_root(upper_g, med, ub, f(med) + z, ufb,
                                          1e-10 * std::max(1.0, std::abs(med)));
  return {lower, upper};
}

// Multivariate first-order measure: chi-squared fold of either the quadratic
// Wald form (theta0 - mle)' j(mle) (theta0 - mle) or the log-likelihood-ratio
// statistic 2(l(mle) - l(theta0)). tail_low stays unset: a two-sided
// statistic has no lower-tail reading.
inline BdmResult bdm_wald_multi(const PosteriorGeometry& geom, const Vec& theta0,
                                bool use_loglik_ratio = false) {
  const int d = static_cast<int>(geom.mle.size());
  if (theta0.size() != d) throw DimensionError("bdm_wald_multi: theta0 dimension mismatch");
  double w;
  if (use_loglik_ratio) {
    const double l_hat = geom.model.loglik(geom.mle, geom.data);
    const double l0 = geom.model.loglik(theta0, geom.data);
    if (!std::isfinite(l0))
      throw EvaluationError("bdm_wald_multi: non-finite log-likelihood at theta0");
    w = 2.0 * (l_hat - l0);
    if (w < 0.0) {
      if (w < -1e-7 * (1.0 + std::abs(l_hat)))
        throw EvaluationError("bdm_wald_multi: log-likelihood exceeds its fitted maximum");
      w = 0.0;
    }
  } else {
    const Vec delta = theta0 - geom.mle;
    w = delta.dot(geom.obs_info_mle * delta);
  }
  BdmResult res;
  res.method = "wald";
  res.delta = chi2_cdf(w, d);
  res.diagnostics["w"] = w;
  res.diagnostics["df"] = d;
  res.diagnostics["chi2_upper"] = 1.0 - res.delta;
  return res;
}

// Convenience sub-block Wald: the quadratic form for a subset of coordinates
// standardized by the inverse of the corresponding block of j(mle)^-1.
inline BdmResult bdm_wald_subblock(const PosteriorGeometry& geom, const std::vector<int>& idx,
                                   const Vec& theta0_sub) {
  const int d = static_cast<int>(geom.mle.size());
  const int k = static_cast<int>(idx.size());
  if (k < 1 || k > d) throw DimensionError("bdm_wald_subblock: empty or oversized index set");
  if (theta0_sub.size() != k)
    throw DimensionError("bdm_wald_subblock: theta0 dimension mismatch");
  for (int a = 0; a < k; ++a) {
    if (idx[a] < 0 || idx[a] >= d) throw DimensionError("bdm_wald_subblock: index out of range");
    for (int b = a + 1; b < k; ++b)
      if (idx[a] == idx[b]) throw DimensionError("bdm_wald_subblock: repeated index");
  }
  Eigen::LLT<Mat> llt(geom.obs_info_mle);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("bdm_wald_subblock: observed information is singular");
  const Mat inv = llt.solve(Mat::Identity(d, d));
  Mat inv_ss(k, k);
  Vec delta(k);
  for (int a = 0; a < k; ++a) {
    delta[a] = theta0_sub[a] - geom.mle[idx[a]];
    for (int b = 0; b < k; ++b) inv_ss(a, b) = inv(idx[a], idx[b]);
  }
  Eigen::LLT<Mat> llt_s(inv_ss);
  if (llt_s.info() != Eigen::Success)
    throw LinearAlgebraError("bdm_wald_subblock: sub-block covariance is not positive definite");
  const double w = delta.dot(llt_s.solve(delta));
  BdmResult res;
  res.method = "wald-subblock";
  res.delta = chi2_cdf(w, k);
  res.diagnostics["w"] = w;
  res.diagnostics["df"] = k;
  res.diagnostics["chi2_upper"] = 1.0 - res.delta;
  return res;
}

}  // namespace bdm
