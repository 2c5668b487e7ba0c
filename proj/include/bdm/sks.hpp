#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bdm/model.hpp"
#include "bdm/special.hpp"

namespace bdm {

// Where the skew-modal fit reads its local derivative information: the
// log-posterior at the MAP (default) or the log-likelihood at the MLE.
enum class SksSource { posterior_at_map, likelihood_at_mle };

// Coefficient convention for the cubic inside Phi: "matched" uses
// sqrt(2*pi)/12 (consistent with the closed-form tail linearization);
// "quarter" uses 1/4. The reference table's numeric row follows "quarter".
enum class SksSlope { matched, quarter };

struct SkewModalFit {
  double center = 0.0;       // expansion point (MAP or MLE)
  double omega_tilde = 0.0;  // n / j(center), variance of the rescaled h
  double ell3 = 0.0;         // third derivative of the chosen objective at center
  int n = 0;
};

inline SkewModalFit sks_fit(const PosteriorGeometry& geom,
                            SksSource source = SksSource::posterior_at_map) {
  if (geom.mle.size() != 1)
    throw DimensionError("sks_fit: scalar-parameter operation (d = 1)");
  SkewModalFit fit;
  fit.n = geom.n;
  if (source == SksSource::posterior_at_map) {
    if (geom.third_at_map.empty())
      throw CapabilityError("sks_fit: third-derivative information unavailable");
    fit.center = geom.map_point[0];
    fit.omega_tilde = geom.n / geom.obs_info_map(0, 0);
    fit.ell3 = geom.third_at_map(0, 0, 0);
  } else {
    if (geom.third_lik_at_mle.empty())
      throw CapabilityError("sks_fit: third-derivative information unavailable");
    fit.center = geom.mle[0];
    fit.omega_tilde = geom.n / geom.obs_info_mle(0, 0);
    fit.ell3 = geom.third_lik_at_mle(0, 0, 0);
  }
  if (!(fit.omega_tilde > 0.0))
    throw LinearAlgebraError("sks_fit: nonpositive curvature at the expansion point");
  return fit;
}

namespace detail {

inline double sks_cubic_coeff(const SkewModalFit& fit, SksSlope slope) {
  const double n32 = std::pow(static_cast<double>(fit.n), 1.5);
  return slope == SksSlope::matched
             ? fit.ell3 * std::sqrt(2.0 * detail::kPi) / (12.0 * n32)
             : fit.ell3 / (4.0 * n32);
}

inline double normal_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * detail::kPi * var);
}

}  // namespace detail

// Skew-modal density in the rescaled variable h = sqrt(n) (theta - center):
// 2 phi(h; 0, omega) Phi(c h^3). Integrates to one exactly (odd cubic).
inline double sks_density(const SkewModalFit& fit, double h,
                          SksSlope slope = SksSlope::matched) {
  const double c = detail::sks_cubic_coeff(fit, slope);
  return 2.0 * detail::normal_pdf(h, fit.omega_tilde) * norm_cdf(c * h * h * h);
}

// Closed-form linearized upper tail P(theta >= theta0). May step outside
// [0, 1]; the raw value is returned and any clamping is left to the BDM fold.
inline double sks_tail_closed(const SkewModalFit& fit, double theta0) {
  const double rn = std::sqrt(static_cast<double>(fit.n));
  const double h0 = rn * (theta0 - fit.center);
  const double z0 = h0 / std::sqrt(fit.omega_tilde);
  const double corr = fit.ell3 / (6.0 * std::pow(static_cast<double>(fit.n), 1.5)) *
                      std::pow(fit.omega_tilde, 1.5) * norm_pdf(z0) * (z0 * z0 + 2.0);
  return (1.0 - norm_cdf(z0)) + corr;
}

// Numeric upper tail of the skew-modal density; always within [0, 1].
inline double sks_tail_numeric(const SkewModalFit& fit, double theta0,
                               SksSlope slope = SksSlope::matched) {
  const double h0 = std::sqrt(static_cast<double>(fit.n)) * (theta0 - fit.center);
  const double p = integrate_1d(
      [&](double h) { return sks_density(fit, h, slope); }, h0,
      std::numeric_limits<double>::infinity(), 1e-10);
  return std::clamp(p, 0.0, 1.0);
}

// Closed-form skew-modal BDM:
//   delta = 2 Phi(|z0|) - 2 sign(h0) corr - 1      (sign(0) := 0)
// clamped into [0, 1] with the raw value kept in the diagnostics. tail_low is
// populated only when folding the closed tail reproduces the same delta;
// otherwise the raw lower tail is reported as a diagnostic instead.
inline BdmResult bdm_sks(const SkewModalFit& fit, double theta0) {
  const double rn = std::sqrt(static_cast<double>(fit.n));
  const double h0 = rn * (theta0 - fit.center);
  const double z0 = h0 / std::sqrt(fit.omega_tilde);
  const double corr = fit.ell3 / (6.0 * std::pow(static_cast<double>(fit.n), 1.5)) *
                      std::pow(fit.omega_tilde, 1.5) * norm_pdf(z0) * (z0 * z0 + 2.0);
  const double sgn = h0 > 0.0 ? 1.0 : (h0 < 0.0 ? -1.0 : 0.0);
  const double raw = 2.0 * norm_cdf(std::abs(z0)) - 2.0 * sgn * corr - 1.0;

  BdmResult res;
  res.method = "sks";
  res.delta = detail::clamp01(raw);
  res.clamped = raw != res.delta;
  res.diagnostics["delta_raw"] = raw;
  res.diagnostics["z0"] = z0;
  res.diagnostics["corr"] = corr;

  const double p_up = sks_tail_closed(fit, theta0);
  const double tl = 1.0 - p_up;
  const double fold = 1.0 - 2.0 * std::min(tl, 1.0 - tl);
  if (p_up >= 0.0 && p_up <= 1.0 && std::abs(detail::clamp01(fold) - res.delta) <= 1e-12) {
    res.tail_low = tl;
  } else {
    res.diagnostics["tail_low_raw"] = tl;
  }
  return res;
}

// Numeric-tail skew-modal BDM (the reference table's "numeric" row uses the
// quarter-coefficient convention).
inline BdmResult bdm_sks_numeric(const SkewModalFit& fit, double theta0,
                                 SksSlope slope = SksSlope::matched) {
  const double p_up = sks_tail_numeric(fit, theta0, slope);
  BdmResult res = fold_tail("sks-num", 1.0 - p_up);
  res.diagnostics["h0"] = std::sqrt(static_cast<double>(fit.n)) * (theta0 - fit.center);
  return res;
}

// ---------------------------------------------------------------------------
// Marginal skew-modal approximation for one coordinate of a multi-parameter
// posterior.
// ---------------------------------------------------------------------------

// The linear/cubic coefficients of the marginal skewness term can be built
// two ways: "derived" contracts the third-derivative tensor with the
// conditional moments of the Gaussian factor (the marginalization of the
// joint skew-modal form); "printed" follows the reference summation formulas
// literally. They disagree; "derived" is the default because it passes the
// marginalization cross-check (see tests).
enum class VFormulaVariant { derived, printed };

struct MarginalSksFit {
  Mat Omega;            // (j(center)/n)^-1, coordinate of interest first
  double Omega11 = 0.0; // leading diagonal entry of Omega
  double v11 = 0.0;     // linear skewness coefficient
  double v3111 = 0.0;   // cubic skewness coefficient
  int n = 0;
};

inline MarginalSksFit marginal_sks_fit(const PosteriorGeometry& geom, int psi_index,
                                       SksSource source = SksSource::posterior_at_map,
                                       VFormulaVariant variant = VFormulaVariant::derived) {
  const int d = static_cast<int>(geom.mle.size());
  if (d < 2) throw DimensionError("marginal_sks_fit: requires d >= 2 (use sks_fit for scalars)");
  if (psi_index < 0 || psi_index >= d)
    throw DimensionError("marginal_sks_fit: psi_index out of range");

  const bool post = source == SksSource::posterior_at_map;
  const Tensor3& tensor = post ? geom.third_at_map : geom.third_lik_at_mle;
  if (tensor.empty())
    throw CapabilityError("marginal_sks_fit: third-derivative tensor unavailable");
  const Mat& info = post ? geom.obs_info_map : geom.obs_info_mle;

  Eigen::LLT<Mat> llt(info / static_cast<double>(geom.n));
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("marginal_sks_fit: scaled information is not positive definite");
  const Mat omega_full = llt.solve(Mat::Identity(d, d));

  // Permute so the coordinate of interest is first.
  std::vector<int> perm(d);
  perm[0] = psi_index;
  for (int i = 0, k = 1; i < d; ++i)
    if (i != psi_index) perm[k++] = i;
  Mat Om(d, d);
  Tensor3 T(d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      Om(a, b) = omega_full(perm[a], perm[b]);
      for (int c = 0; c < d; ++c) T(a, b, c) = tensor(perm[a], perm[b], perm[c]);
    }

  MarginalSksFit fit;
  fit.Omega = Om;
  fit.Omega11 = Om(0, 0);
  fit.n = geom.n;
  if (!(fit.Omega11 > 0.0))
    throw LinearAlgebraError("marginal_sks_fit: nonpositive marginal variance");

  if (variant == VFormulaVariant::derived) {
    // Conditional moments of the Gaussian factor given the first coordinate:
    // E[h | h1] = b h1, Cov[h | h1] = C. Contracting the cubic with them gives
    // the exact marginal coefficients of the odd skewness polynomial.
    const Vec b = Om.col(0) / fit.Omega11;
    const Mat C = Om - Om.col(0) * Om.row(0) / fit.Omega11;
    double v3 = 0.0, v1 = 0.0;
    for (int s = 0; s < d; ++s)
      for (int t = 0; t < d; ++t)
        for (int l = 0; l < d; ++l) {
          v3 += T(s, t, l) * b[s] * b[t] * b[l];
          v1 += 3.0 * T(s, t, l) * b[s] * C(t, l);
        }
    fit.v3111 = v3;
    fit.v11 = v1;
  } else {
    // Literal summation formulas, indices exactly as printed.
    double v1 = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        v1 += 3.0 * T(0, i, j) * Om(i, j);
        for (int k = 0; k < d; ++k) v1 += 3.0 * T(i, j, k) * Om(i, j) * Om(k, 0);
      }
    double v3 = T(0, 0, 0);
    for (int i = 0; i < d; ++i) {
      v3 += 3.0 * T(0, 0, i) * Om(i, 0);
      for (int j = 0; j < d; ++j) {
        v3 += 3.0 * T(0, i, j) * Om(i, j) * Om(j, 0);
        for (int k = 0; k < d; ++k) v3 += T(i, j, k) * Om(i, j) * Om(k, 0) * Om(0, 0);
      }
    }
    fit.v11 = v1;
    fit.v3111 = v3;
  }
  return fit;
}

// Marginal skew-modal density in h = sqrt(n) (psi - psi_tilde):
// 2 phi(h; 0, Omega11) Phi(sqrt(2 pi)/(12 n^{3/2}) (v11 h + v3111 h^3)).
inline double marginal_sks_density(const MarginalSksFit& fit, double h) {
  const double a = std::sqrt(2.0 * detail::kPi) / (12.0 * std::pow(static_cast<double>(fit.n), 1.5));
  return 2.0 * detail::normal_pdf(h, fit.Omega11) * norm_cdf(a * (fit.v11 * h + fit.v3111 * h * h * h));
}

// Marginal skew-modal BDM: numeric fold of the upper tail of the marginal
// density (normalized by its own numeric mass to absorb quadrature error).
inline BdmResult bdm_marginal_sks(const MarginalSksFit& fit, double psi_tilde, double psi0) {
  const double inf = std::numeric_limits<double>::infinity();
  const double h0 = std::sqrt(static_cast<double>(fit.n)) * (psi0 - psi_tilde);
  auto dens = [&](double h) { return marginal_sks_density(fit, h); };
  const double up = integrate_1d(dens, h0, inf, 1e-10);
  const double total = integrate_1d(dens, -inf, inf, 1e-10);
  if (!(total > 0.0))
    throw AccuracyError("bdm_marginal_sks: vanishing marginal skew-modal mass");
  const double p_up = std::clamp(up / total, 0.0, 1.0);
  BdmResult res = fold_tail("sks-marginal", 1.0 - p_up);
  res.diagnostics["h0"] = h0;
  res.diagnostics["omega11"] = fit.Omega11;
  res.diagnostics["v11"] = fit.v11;
  res.diagnostics["v3111"] = fit.v3111;
  return res;
}

}  // namespace bdm
