#pragma once

// Numerical workhorses: central finite differences up to third order,
// Newton-type maximization with backtracking, profile (constrained-slice)
// maximization, adaptive 1-D quadrature, and tensor-product Gauss-Hermite
// integration against a Gaussian weight (dimension <= 3).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "bdm/errors.hpp"
#include "bdm/types.hpp"

namespace bdm {

struct DiffReport {
  Vec gradient;
  Mat hessian;
  Vec third_unmixed;
  std::optional<Tensor3> third_full;
  double step = 0.0;
};

namespace detail {

inline std::string point_to_string(const Vec& x) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

inline double eval_checked(const RealFunction& f, const Vec& x) {
  const double v = f(x);
  if (!std::isfinite(v))
    throw EvaluationError("function value not finite at " + point_to_string(x));
  return v;
}

// Evaluation that tolerates -inf (log-density zero); still rejects nan/+inf.
inline double eval_log_ok(const RealFunction& f, const Vec& x) {
  const double v = f(x);
  if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
    throw EvaluationError("function value not finite at " + point_to_string(x));
  return v;
}

}  // namespace detail

// Central finite differences. Steps scale as eps^(1/3) per coordinate for
// first/second order and eps^(1/5) for third order. `order` in {1, 2, 3};
// the full third tensor is filled only when requested (d <= 3).
inline DiffReport fd_derivatives(const RealFunction& f, const Vec& x, int order,
                                 bool want_full_tensor = false) {
  if (order < 1 || order > 3) throw DomainError("fd_derivatives: order must be 1, 2, or 3");
  const int d = static_cast<int>(x.size());
  if (d < 1) throw DimensionError("fd_derivatives: empty point");

  const double eps = std::numeric_limits<double>::epsilon();
  const double rel2 = std::cbrt(eps);
  const double rel3 = std::pow(eps, 0.2);
  Vec h(d), h3(d);
  for (int i = 0; i < d; ++i) {
    const double s = std::max(1.0, std::abs(x[i]));
    h[i] = rel2 * s;
    h3[i] = rel3 * s;
  }

  auto fv = [&](const Vec& p) { return detail::eval_checked(f, p); };
  const double f0 = fv(x);

  DiffReport rep;
  rep.step = rel2;
  rep.gradient = Vec::Zero(d);
  rep.hessian = Mat::Zero(d, d);

  std::vector<double> fp(d), fm(d);
  for (int i = 0; i < d; ++i) {
    Vec xp = x, xm = x;
    xp[i] += h[i];
    xm[i] -= h[i];
    fp[i] = fv(xp);
    fm[i] = fv(xm);
    rep.gradient[i] = (fp[i] - fm[i]) / (2.0 * h[i]);
  }
  if (order >= 2) {
    for (int i = 0; i < d; ++i)
      rep.hessian(i, i) = (fp[i] - 2.0 * f0 + fm[i]) / (h[i] * h[i]);
    for (int i = 0; i < d; ++i) {
      for (int j = i + 1; j < d; ++j) {
        Vec xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[i] += h[i]; xpp[j] += h[j];
        xpm[i] += h[i]; xpm[j] -= h[j];
        xmp[i] -= h[i]; xmp[j] += h[j];
        xmm[i] -= h[i]; xmm[j] -= h[j];
        const double v = (fv(xpp) - fv(xpm) - fv(xmp) + fv(xmm)) / (4.0 * h[i] * h[j]);
        rep.hessian(i, j) = v;
        rep.hessian(j, i) = v;
      }
    }
  }
  if (order >= 3) {
    rep.third_unmixed = Vec::Zero(d);
    auto third_axis = [&](int i) {
      Vec a = x, b = x, c = x, e = x;
      a[i] -= 2.0 * h3[i];
      b[i] -= h3[i];
      c[i] += h3[i];
      e[i] += 2.0 * h3[i];
      return (-0.5 * fv(a) + fv(b) - fv(c) + 0.5 * fv(e)) / (h3[i] * h3[i] * h3[i]);
    };
    for (int i = 0; i < d; ++i) rep.third_unmixed[i] = third_axis(i);

    if (want_full_tensor) {
      if (d > 3) throw CapabilityError("fd_derivatives: full third tensor limited to dimension 3");
      Tensor3 t(d);
      for (int i = 0; i < d; ++i) t(i, i, i) = rep.third_unmixed[i];
      // d/dx_j of the pure second difference along axis i  ->  T_iij.
      auto second_along = [&](int i, const Vec& p) {
        Vec a = p, b = p;
        a[i] += h3[i];
        b[i] -= h3[i];
        return (fv(a) - 2.0 * fv(p) + fv(b)) / (h3[i] * h3[i]);
      };
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          if (i == j) continue;
          Vec pj = x, mj = x;
          pj[j] += h3[j];
          mj[j] -= h3[j];
          const double v = (second_along(i, pj) - second_along(i, mj)) / (2.0 * h3[j]);
          t(i, i, j) = v;
          t(i, j, i) = v;
          t(j, i, i) = v;
        }
      }
      if (d == 3) {
        double s = 0.0;
        for (int s1 : {-1, 1})
          for (int s2 : {-1, 1})
            for (int s3 : {-1, 1}) {
              Vec p = x;
              p[0] += s1 * h3[0];
              p[1] += s2 * h3[1];
              p[2] += s3 * h3[2];
              s += s1 * s2 * s3 * fv(p);
            }
        const double v = s / (8.0 * h3[0] * h3[1] * h3[2]);
        t(0, 1, 2) = t(0, 2, 1) = t(1, 0, 2) = t(1, 2, 0) = t(2, 0, 1) = t(2, 1, 0) = v;
      }
      rep.third_full = std::move(t);
    }
  }
  return rep;
}

// Newton maximization with an Armijo backtracking line search; falls back to
// the gradient direction when the Hessian is not negative definite. Stops
// when the sup-norm of the gradient is <= tol.
inline Vec maximize(const RealFunction& f, Vec x, double tol = 1e-9) {
  if (x.size() < 1) throw DimensionError("maximize: empty start point");
  double fx = detail::eval_log_ok(f, x);
  if (!std::isfinite(fx)) throw EvaluationError("maximize: start point has non-finite value");

  const int max_iter = 200;
  const double c1 = 1e-4;
  // FD gradients bottom out near eps-scale noise proportional to |f|; treat a
  // point as converged once steps stop moving the objective and the gradient
  // sits at that floor, instead of spinning on sub-noise "improvements".
  auto at_noise_floor = [&](double gnorm) { return gnorm <= 1e-6 * (1.0 + std::abs(fx)); };
  int stalled = 0;
  for (int iter = 0; iter < max_iter; ++iter) {
    const DiffReport rep = fd_derivatives(f, x, 2);
    const Vec& g = rep.gradient;
    if (g.lpNorm<Eigen::Infinity>() <= tol) return x;
    if (stalled >= 3 && at_noise_floor(g.lpNorm<Eigen::Infinity>())) return x;

    Vec dir;
    Eigen::LLT<Mat> llt(-rep.hessian);
    if (llt.info() == Eigen::Success) {
      dir = llt.solve(g);
    } else {
      dir = g;  // gradient ascent fallback
      const double gn = dir.norm();
      if (gn > 1.0) dir /= gn;
    }

    const double slope = g.dot(dir);
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      const Vec cand = x + t * dir;
      const double fc = f(cand);
      if (std::isfinite(fc) && fc >= fx + c1 * t * slope) {
        stalled = (fc - fx <= 1e-13 * (1.0 + std::abs(fc))) ? stalled + 1 : 0;
        x = cand;
        fx = fc;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Retry along the raw gradient before giving up.
      Vec gd = g;
      const double gn = gd.norm();
      if (gn > 0.0) gd /= gn;
      t = 1.0;
      for (int half = 0; half < 40; ++half) {
        const Vec cand = x + t * gd;
        const double fc = f(cand);
        if (std::isfinite(fc) && fc > fx) {
          x = cand;
          fx = fc;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        if (at_noise_floor(g.lpNorm<Eigen::Infinity>())) return x;
        std::ostringstream os;
        os << "maximize: line search stalled at iteration " << iter << " near "
           << detail::point_to_string(x) << " with gradient sup-norm "
           << g.lpNorm<Eigen::Infinity>();
        throw ConvergenceError(os.str());
      }
    }
  }
  const DiffReport rep = fd_derivatives(f, x, 1);
  std::ostringstream os;
  os << "maximize: no convergence in " << max_iter << " iterations; last point "
     << detail::point_to_string(x) << ", gradient sup-norm "
     << rep.gradient.lpNorm<Eigen::Infinity>();
  throw ConvergenceError(os.str());
}

namespace detail {

inline Vec embed_slice(int psi_index, double psi_value, const Vec& lambda) {
  Vec full(lambda.size() + 1);
  int k = 0;
  for (int i = 0; i < full.size(); ++i)
    full[i] = (i == psi_index) ? psi_value : lambda[k++];
  return full;
}

inline Vec drop_index(const Vec& full, int psi_index) {
  Vec out(full.size() - 1);
  int k = 0;
  for (int i = 0; i < full.size(); ++i)
    if (i != psi_index) out[k++] = full[i];
  return out;
}

}  // namespace detail

// Maximize f over all coordinates except `psi_index`, which is pinned at
// `psi_value`. Returns the maximizing nuisance vector (empty when d = 1).
inline Vec profile_maximize(const RealFunction& f, int psi_index, double psi_value,
                            const Vec& lambda0) {
  if (lambda0.size() == 0) return Vec();
  if (psi_index < 0 || psi_index > lambda0.size())
    throw DimensionError("profile_maximize: psi_index out of range");
  RealFunction slice = [&f, psi_index, psi_value](const Vec& lam) {
    return f(detail::embed_slice(psi_index, psi_value, lam));
  };
  return maximize(slice, lambda0);
}

namespace detail {

// Gauss-Kronrod 7-15 nodes and weights on [-1, 1].
inline const double kGk15Nodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0};
inline const double kGk15Weights[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728};
inline const double kG7Weights[4] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469};

struct GkCell {
  double a, b, value, error;
};

inline GkCell gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), hw = 0.5 * (b - a);
  double kron = 0.0, gauss = 0.0;
  // The embedded 7-point Gauss rule uses the odd-index Kronrod nodes
  // (including the center node at i == 7).
  for (int i = 0; i < 8; ++i) {
    const double xs = kGk15Nodes[i] * hw;
    const double fsum = (i == 7) ? f(c) : (f(c - xs) + f(c + xs));
    if (!std::isfinite(fsum))
      throw EvaluationError("integrate_1d: non-finite integrand in [" +
                            std::to_string(a) + ", " + std::to_string(b) + "]");
    kron += kGk15Weights[i] * fsum;
    if (i % 2 == 1) gauss += kG7Weights[i / 2] * fsum;
  }
  kron *= hw;
  gauss *= hw;
  GkCell cell;
  cell.a = a;
  cell.b = b;
  cell.value = kron;
  cell.error = std::abs(kron - gauss);
  return cell;
}

}  // namespace detail

// Adaptive Gauss-Kronrod integration. Infinite endpoints are mapped through
// a tangent substitution first. Throws AccuracyError (with the achieved
// estimate in the message) if the subdivision budget is exhausted.
inline double integrate_1d(const std::function<double(double)>& f, double lo, double hi,
                           double tol = 1e-10) {
  if (std::isnan(lo) || std::isnan(hi)) throw DomainError("integrate_1d: nan endpoint");
  if (lo == hi) return 0.0;
  if (lo > hi) return -integrate_1d(f, hi, lo, tol);

  const bool lo_inf = std::isinf(lo), hi_inf = std::isinf(hi);
  std::function<double(double)> g;
  double a, b;
  const double half_pi = 1.57079632679489661923;
  if (!lo_inf && !hi_inf) {
    g = f;
    a = lo;
    b = hi;
  } else if (lo_inf && hi_inf) {
    g = [&f](double u) {
      const double t = std::tan(u);
      const double sec2 = 1.0 + t * t;
      return f(t) * sec2;
    };
    a = -half_pi;
    b = half_pi;
  } else if (!lo_inf && hi_inf) {
    g = [&f, lo](double u) {
      const double t = std::tan(u);
      return f(lo + t) * (1.0 + t * t);
    };
    a = 0.0;
    b = half_pi;
  } else {
    g = [&f, hi](double u) {
      const double t = std::tan(u);
      return f(hi + t) * (1.0 + t * t);
    };
    a = -half_pi;
    b = 0.0;
  }

  // Global adaptive strategy over a worklist keyed by interval error.
  std::multimap<double, detail::GkCell> work;
  double total = 0.0, err = 0.0;
  auto push = [&](double x0, double x1) {
    detail::GkCell cell = detail::gk15(g, x0, x1);
    total += cell.value;
    err += cell.error;
    work.emplace(cell.error, cell);
  };
  // Seed with a few panels so sharply localized mass is not missed.
  const int seed_panels = 8;
  for (int i = 0; i < seed_panels; ++i)
    push(a + (b - a) * i / seed_panels, a + (b - a) * (i + 1) / seed_panels);

  const int max_cells = 4000;
  while (err > tol && static_cast<int>(work.size()) < max_cells) {
    auto worst = std::prev(work.end());
    const detail::GkCell cell = worst->second;
    work.erase(worst);
    total -= cell.value;
    err -= cell.error;
    const double mid = 0.5 * (cell.a + cell.b);
    if (mid <= cell.a || mid >= cell.b) {  // interval at floating-point resolution
      total += cell.value;
      err += cell.error;
      break;
    }
    push(cell.a, mid);
    push(mid, cell.b);
  }
  if (err > tol) {
    std::ostringstream os;
    os << "integrate_1d: subdivision limit reached; estimate " << total
       << " with error estimate " << err << " exceeds tolerance " << tol;
    throw AccuracyError(os.str());
  }
  return total;
}

namespace detail {

// Gauss-Hermite nodes/weights (physicists' weight exp(-u^2)); cached per
// node count. Nodes come from the symmetric tridiagonal Jacobi matrix and
// are polished by Newton on the orthonormal Hermite recurrence. Weights use
// the Christoffel form 1/sum_k p_k(x)^2: eigenvector-based weights lose all
// accuracy at extreme nodes (true values ~exp(-x^2) sit below the
// eigensolver's absolute noise), and overstated tail weights poison any
// integrand reweighted by exp(+x^2).
inline void gauss_hermite(int m, Vec& nodes, Vec& weights) {
  static std::map<int, std::pair<Vec, Vec>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(m);
  if (it == cache.end()) {
    if (m < 1) throw DomainError("gauss_hermite: need at least one node");
    if (m > 200) throw DomainError("gauss_hermite: node count above 200 would overflow");
    Mat J = Mat::Zero(m, m);
    for (int k = 1; k < m; ++k) {
      const double off = std::sqrt(0.5 * k);
      J(k - 1, k) = off;
      J(k, k - 1) = off;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(J, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
      throw LinearAlgebraError("gauss_hermite: eigen decomposition failed");
    Vec n = es.eigenvalues();
    Vec w(m);
    const double pi_qtr = 0.75112554446494248286;  // pi^(-1/4)
    // Orthonormal recurrence: p_{k+1} = (x p_k - sqrt(k/2) p_{k-1}) / sqrt((k+1)/2),
    // with p_n'(x) = sqrt(2n) p_{n-1}(x) for the Newton step.
    auto eval = [&](double x, double& pn, double& pn1, double& sumsq) {
      double pm = 0.0, pk = pi_qtr;
      sumsq = pk * pk;
      for (int k = 0; k < m; ++k) {
        const double pj = (x * pk - std::sqrt(0.5 * k) * pm) / std::sqrt(0.5 * (k + 1));
        pm = pk;
        pk = pj;
        if (k + 1 < m) sumsq += pk * pk;
      }
      pn = pk;
      pn1 = pm;
    };
    for (int i = 0; i < m; ++i) {
      double x = n[i], pn, pn1, sumsq;
      for (int step = 0; step < 3; ++step) {
        eval(x, pn, pn1, sumsq);
        const double dpn = std::sqrt(2.0 * m) * pn1;
        if (dpn == 0.0) break;
        x -= pn / dpn;
      }
      eval(x, pn, pn1, sumsq);
      n[i] = x;
      w[i] = 1.0 / sumsq;
    }
    it = cache.emplace(m, std::make_pair(std::move(n), std::move(w))).first;
  }
  nodes = it->second.first;
  weights = it->second.second;
}

inline Eigen::LLT<Mat> chol_pd(const Mat& s, const char* who) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError(std::string(who) + ": matrix not positive definite");
  return llt;
}

// Brent's method on a bracketing interval [a, b] with f(a), f(b) supplied.
inline double brent_root(const std::function<double(double)>& f, double a, double b, double fa,
                         double fb, double tol = 1e-12, int max_iter = 200) {
  if (!std::isfinite(fa) || !std::isfinite(fb))
    throw BracketingError("brent_root: non-finite value at a bracket endpoint");
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if (fa * fb > 0.0) throw BracketingError("brent_root: endpoints do not bracket a root");
  double c = a, fc = fa, d = b - a, e = d;
  for (int iter = 0; iter < max_iter; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * tol;
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      // Inverse quadratic interpolation (secant when a == c).
      const double s = fb / fa;
      double p, q;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc, rr = fb / fc;
        p = s * (2.0 * xm * qq * (qq - rr) - (b - a) * (rr - 1.0));
        q = (qq - 1.0) * (rr - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol1) ? d : (xm > 0.0 ? tol1 : -tol1);
    fb = f(b);
    if (!std::isfinite(fb)) throw EvaluationError("brent_root: non-finite value during iteration");
  }
  throw ConvergenceError("brent_root: no convergence");
}

}  // namespace detail

// Expectation of f under N(center, scale) by tensor-product Gauss-Hermite
// quadrature (normalized weights, so f == 1 integrates to exactly 1).
inline double integrate_gh(const RealFunction& f, const Vec& center, const Mat& scale,
                           int nodes = 64) {
  const int d = static_cast<int>(center.size());
  if (d < 1) throw DimensionError("integrate_gh: empty center");
  if (d > 3) throw CapabilityError("integrate_gh: unsupported dimension (limit 3)");
  if (scale.rows() != d || scale.cols() != d)
    throw DimensionError("integrate_gh: scale shape mismatch");
  Vec u, w;
  detail::gauss_hermite(nodes, u, w);
  const double wsum = w.sum();  // = sqrt(pi)^1, normalize per axis
  Mat L = detail::chol_pd(scale, "integrate_gh").matrixL();
  const double rt2 = std::sqrt(2.0);

  double acc = 0.0;
  std::vector<int> idx(d, 0);
  while (true) {
    double wt = 1.0;
    Vec z(d);
    for (int k = 0; k < d; ++k) {
      wt *= w[idx[k]] / wsum;
      z[k] = u[idx[k]];
    }
    const Vec x = center + rt2 * (L * z);
    const double fx = f(x);
    if (!std::isfinite(fx))
      throw EvaluationError("integrate_gh: non-finite integrand at " + detail::point_to_string(x));
    acc += wt * fx;
    int k = 0;
    for (; k < d; ++k) {
      if (++idx[k] < nodes) break;
      idx[k] = 0;
    }
    if (k == d) break;
  }
  return acc;
}

// log of the Lebesgue integral  ∫ exp(logf(x)) dx  over R^d computed by
// Gauss-Hermite quadrature matched to N(center, scale), assembled in
// log-sum-exp form so badly scaled log-densities cannot overflow.
// logf may return -inf (treated as zero mass).
inline double integrate_gh_log(const RealFunction& logf, const Vec& center, const Mat& scale,
                               int nodes = 64) {
  const int d = static_cast<int>(center.size());
  if (d < 1) throw DimensionError("integrate_gh_log: empty center");
  if (d > 3) throw CapabilityError("integrate_gh_log: unsupported dimension (limit 3)");
  Vec u, w;
  detail::gauss_hermite(nodes, u, w);
  Mat L = detail::chol_pd(scale, "integrate_gh_log").matrixL();
  double log_det_l = 0.0;
  for (int i = 0; i < d; ++i) log_det_l += std::log(L(i, i));
  const double rt2 = std::sqrt(2.0);

  std::vector<double> terms;
  terms.reserve(64);
  std::vector<int> idx(d, 0);
  while (true) {
    double logw = 0.0, quad = 0.0;
    Vec z(d);
    for (int k = 0; k < d; ++k) {
      logw += std::log(w[idx[k]]);
      quad += u[idx[k]] * u[idx[k]];
      z[k] = u[idx[k]];
    }
    const Vec x = center + rt2 * (L * z);
    const double lf = detail::eval_log_ok(logf, x);
    if (lf != -std::numeric_limits<double>::infinity())
      terms.push_back(logw + lf + quad);
    int k = 0;
    for (; k < d; ++k) {
      if (++idx[k] < nodes) break;
      idx[k] = 0;
    }
    if (k == d) break;
  }
  if (terms.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s) + 0.5 * d * std::log(2.0) + log_det_l;
}

}  // namespace bdm
