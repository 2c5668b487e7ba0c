#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "bdm/errors.hpp"

// Self-contained special-function substrate: normal pdf/cdf/quantile,
// regularized incomplete gamma and chi-squared CDF/quantile, Owen's T,
// univariate skew-normal density/CDF, and the derivatives of log Phi.

namespace bdm {

namespace detail {

inline constexpr double kPi = 3.14159265358979323846264338328;
inline constexpr double kSqrt2 = 1.41421356237309504880168872421;
inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

// 64-point Gauss-Legendre nodes/weights on [-1, 1], built once via Newton
// iteration on the Legendre three-term recurrence.
inline const std::pair<std::vector<double>, std::vector<double>>&
gauss_legendre_64() {
  static const auto table = [] {
    const int n = 64;
    std::vector<double> x(n), w(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
      for (int it = 0; it < 100; ++it) {
        double p1 = 1.0, p2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
        }
        const double pp = n * (z * p1 - p2) / (z * z - 1.0);
        const double step = p1 / pp;
        z -= step;
        if (std::abs(step) < 1e-15) break;
      }
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
      }
      const double pp = n * (z * p1 - p2) / (z * z - 1.0);
      x[i] = -z;
      x[n - 1 - i] = z;
      w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
      w[n - 1 - i] = w[i];
    }
    return std::make_pair(x, w);
  }();
  return table;
}

}  // namespace detail

inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x - detail::kLogSqrt2Pi);
}

inline double norm_logpdf(double x) {
  return -0.5 * x * x - detail::kLogSqrt2Pi;
}

inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x / detail::kSqrt2);
}

// log Phi(x), stable through the deep left tail where Phi underflows.
inline double norm_logcdf(double x) {
  if (x > -35.0) {
    return std::log(0.5 * std::erfc(-x / detail::kSqrt2));
  }
  // Mills-ratio asymptotic: Phi(x) = phi(x)/t * (1 - 1/t^2 + 3/t^4 - ...),
  // t = -x.
  const double t = -x;
  const double t2 = t * t;
  const double series =
      1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2);
  return norm_logpdf(x) - std::log(t) + std::log(series);
}

// Inverse standard-normal CDF: Acklam's rational approximation refined by one
// Halley step against the erfc-based CDF.
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("norm_quantile: p must lie strictly inside (0, 1)");
  }
  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement; the exponential stays finite for |x| < ~37.6.
  const double e = norm_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * detail::kPi) * std::exp(0.5 * x * x);
  if (std::isfinite(u)) {
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

namespace detail {

// Continued-fraction evaluation of the upper regularized gamma Q(a, x),
// valid for x >= a + 1 (modified Lentz).
inline double gamma_q_contfrac(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double dd = 1.0 / b;
  double h = dd;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    dd = an * dd + b;
    if (std::abs(dd) < tiny) dd = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    dd = 1.0 / dd;
    const double del = dd * c;
    h *= del;
    if (std::abs(del - 1.0) < 3e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Series evaluation of the lower regularized gamma P(a, x), for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw DomainError("gamma_p: shape must be positive");
  if (x < 0.0) throw DomainError("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_contfrac(a, x);
}

// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0)) throw DomainError("gamma_q: shape must be positive");
  if (x < 0.0) throw DomainError("gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_contfrac(a, x);
}

// Inverse of gamma_q in x: returns x with Q(a, x) = q. Wilson-Hilferty
// initial guess, then bracket-safeguarded Newton.
inline double gamma_q_inv(double a, double q) {
  if (!(a > 0.0)) throw DomainError("gamma_q_inv: shape must be positive");
  if (!(q > 0.0 && q < 1.0)) {
    throw DomainError("gamma_q_inv: q must lie strictly inside (0, 1)");
  }
  const double z = norm_quantile(1.0 - q);
  const double wh = 1.0 - 1.0 / (9.0 * a) + z * std::sqrt(1.0 / (9.0 * a));
  double x = a * wh * wh * wh;
  if (!(x > 0.0)) x = 1e-8 * a;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  const double lg = std::lgamma(a);
  for (int it = 0; it < 200; ++it) {
    const double f = gamma_q(a, x) - q;
    if (f > 0.0) {
      lo = x;  // Q decreasing: root lies above
    } else {
      hi = x;
    }
    const double logpdf = (a - 1.0) * std::log(x) - x - lg;
    const double fprime = -std::exp(logpdf);
    double xn = x - f / fprime;
    if (!(xn > lo && xn < hi) || !std::isfinite(xn)) {
      xn = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * x;
    }
    if (std::abs(xn - x) <= 1e-14 * (1.0 + std::abs(xn))) {
      return xn;
    }
    x = xn;
  }
  return x;
}

// Chi-squared CDF with d degrees of freedom.
inline double chi2_cdf(double x, int d) {
  if (d < 1) throw DomainError("chi2_cdf: degrees of freedom must be >= 1");
  if (x < 0.0) throw DomainError("chi2_cdf: x must be nonnegative");
  return gamma_p(0.5 * d, 0.5 * x);
}

inline double chi2_quantile(double p, int d) {
  if (d < 1) {
    throw DomainError("chi2_quantile: degrees of freedom must be >= 1");
  }
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("chi2_quantile: p must lie strictly inside (0, 1)");
  }
  return 2.0 * gamma_q_inv(0.5 * d, 1.0 - p);
}

namespace detail {

// Gauss-Legendre evaluation of the defining Owen integral over [0, a], a <= 1.
inline double owens_t_integral(double h, double a) {
  const auto& [nodes, weights] = gauss_legendre_64();
  const double half = 0.5 * a;
  double sum = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double x = half * (nodes[i] + 1.0);
    sum += weights[i] * std::exp(-0.5 * h * h * (1.0 + x * x)) / (1.0 + x * x);
  }
  return sum * half / (2.0 * kPi);
}

}  // namespace detail

// Owen's T function T(h, a); even in h, odd in a, |T| <= 1/4. Arguments with
// |a| > 1 are reduced through T(h,a) + T(ah, 1/a) = (Phi(h) + Phi(ah))/2
// - Phi(h)Phi(ah)  (h >= 0, a >= 0).
inline double owens_t(double h, double a) {
  if (a == 0.0) return 0.0;
  double sign = 1.0;
  if (a < 0.0) {
    a = -a;
    sign = -1.0;
  }
  h = std::abs(h);
  if (a <= 1.0) {
    return sign * detail::owens_t_integral(h, a);
  }
  const double ph = norm_cdf(h);
  const double pah = norm_cdf(a * h);
  const double reduced =
      0.5 * (ph + pah) - ph * pah - detail::owens_t_integral(a * h, 1.0 / a);
  return sign * reduced;
}

// k-th derivative of log Phi(kappa), k in {1, 2, 3}. For kappa <= -30 the
// ratio phi/Phi and kappa + zeta1 are evaluated by the Mills asymptotic
// series to avoid 0/0 underflow and catastrophic cancellation.
inline double zeta(int k, double kappa) {
  if (k < 1 || k > 3) throw DomainError("zeta: order must be 1, 2, or 3");
  double z1, s;
  if (kappa < -30.0) {
    const double k2 = kappa * kappa;
    z1 = -kappa * (1.0 + 1.0 / k2 - 2.0 / (k2 * k2) + 10.0 / (k2 * k2 * k2));
    s = (-1.0 / kappa) * (1.0 - 2.0 / k2 + 10.0 / (k2 * k2));
  } else {
    z1 = std::exp(norm_logpdf(kappa) - norm_logcdf(kappa));
    s = kappa + z1;
  }
  if (k == 1) return z1;
  const double z2 = -z1 * s;
  if (k == 2) return z2;
  return -z2 * s - z1 * (1.0 + z2);
}

// Univariate skew-normal with location xi, scale^2 omega2, shape alpha.
inline double sn_logpdf1(double x, double xi, double omega2, double alpha) {
  if (!(omega2 > 0.0)) throw DomainError("sn_logpdf1: omega2 must be positive");
  const double omega = std::sqrt(omega2);
  const double z = (x - xi) / omega;
  return std::log(2.0) + norm_logpdf(z) + norm_logcdf(alpha * z) -
         std::log(omega);
}

inline double sn_pdf1(double x, double xi, double omega2, double alpha) {
  return std::exp(sn_logpdf1(x, xi, omega2, alpha));
}

inline double sn_cdf(double x, double xi, double omega2, double alpha) {
  if (!(omega2 > 0.0)) throw DomainError("sn_cdf: omega2 must be positive");
  const double z = (x - xi) / std::sqrt(omega2);
  const double v = norm_cdf(z) - 2.0 * owens_t(z, alpha);
  return std::min(1.0, std::max(0.0, v));
}

}  // namespace bdm
