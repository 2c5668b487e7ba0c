#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "bdm/sks.hpp"

namespace bdm {

// d-dimensional skew-normal SN(xi, Omega, alpha) with density
//   2 phi_d(x - xi; Omega) Phi(alpha' omega^-1 (x - xi)),
// omega = sqrt(diag(Omega)). alpha = 0 reduces to N(xi, Omega).
struct SnParams {
  Vec xi;
  Mat Omega;
  Vec alpha;
};

// Local derivative information the fit matches: mode m, negative Hessian H at
// the mode, and the vector t of unmixed third derivatives.
struct MatchInputs {
  Vec m;
  Mat H;
  Vec t;
};

// Fit result plus the root-finding trace (the residual curve's bracket and
// the final residual), which the property tests sample for uniqueness.
struct SnFitReport {
  SnParams params;
  double kappa = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double g_residual = 0.0;
};

namespace detail {

inline void check_match_inputs(const MatchInputs& in) {
  const auto d = in.m.size();
  if (d < 1) throw DimensionError("sn_fit: empty mode vector");
  if (in.H.rows() != d || in.H.cols() != d)
    throw DimensionError("sn_fit: Hessian dimensions do not match the mode");
  if (in.t.size() != d)
    throw DimensionError("sn_fit: third-derivative vector length does not match the mode");
  Eigen::LLT<Mat> llt(in.H);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("sn_fit: negative Hessian at the mode must be positive definite");
}

// State of the matching system at a candidate kappa. The slope in the
// unstandardized variable is eta = omega^-1 alpha; the system solved is
//   eta = cbrt(t / zeta3),  Omega^-1 = H + zeta2 eta eta',
//   xi = m - zeta1 Omega eta,  g = kappa - zeta1 eta' Omega eta.
// feasible == false marks kappa where Omega^-1 loses positive definiteness.
struct SnKappaState {
  Vec eta;
  Mat Omega;
  double g = std::numeric_limits<double>::quiet_NaN();
  bool feasible = false;
};

inline SnKappaState sn_kappa_state(const MatchInputs& in, double kappa) {
  const int d = static_cast<int>(in.m.size());
  SnKappaState st;
  const double z3 = zeta(3, kappa);
  if (!(z3 > 0.0)) return st;
  st.eta = Vec(d);
  for (int i = 0; i < d; ++i) st.eta[i] = std::cbrt(in.t[i] / z3);
  const Mat oinv = in.H + zeta(2, kappa) * (st.eta * st.eta.transpose());
  Eigen::LLT<Mat> llt(oinv);
  if (llt.info() != Eigen::Success) return st;
  st.Omega = llt.solve(Mat::Identity(d, d));
  st.g = kappa - zeta(1, kappa) * st.eta.dot(st.Omega * st.eta);
  st.feasible = std::isfinite(st.g);
  return st;
}

inline void check_sn_params(const SnParams& p, const char* who) {
  const auto d = p.xi.size();
  if (d < 1) throw DimensionError(std::string(who) + ": empty location vector");
  if (p.Omega.rows() != d || p.Omega.cols() != d || p.alpha.size() != d)
    throw DimensionError(std::string(who) + ": parameter dimensions disagree");
  Eigen::LLT<Mat> llt(p.Omega);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError(std::string(who) + ": scale matrix must be positive definite");
}

// Unstandardized slope eta = omega^-1 alpha of the Phi argument.
inline Vec sn_eta(const SnParams& p) {
  Vec eta(p.alpha.size());
  for (int i = 0; i < eta.size(); ++i) eta[i] = p.alpha[i] / std::sqrt(p.Omega(i, i));
  return eta;
}

// Uniform in (0, 1) from the top 53 bits of a 64-bit draw; paired with
// norm_quantile this gives a platform-stable normal sampler.
inline double uniform01(std::mt19937_64& gen) {
  return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

// Residual g(kappa) of the one-dimensional matching equation. Throws when the
// implied scale matrix is not positive definite at this kappa.
inline double sn_match_g(const MatchInputs& in, double kappa) {
  detail::check_match_inputs(in);
  const detail::SnKappaState st = detail::sn_kappa_state(in, kappa);
  if (!st.feasible) {
    std::ostringstream os;
    os << "sn_match_g: implied scale matrix not positive definite at kappa = " << kappa;
    throw InfeasibleMatchError(os.str());
  }
  return st.g;
}

// Fit the skew-normal by matching (m, H, t). The system reduces to a root of
// g(kappa); the bracket grows symmetrically from [-1, 1], doubling up to
// [-50, 50], scanning a fixed grid per level and skipping infeasible kappa.
inline SnFitReport sn_fit_report(const MatchInputs& inputs) {
  detail::check_match_inputs(inputs);
  const int d = static_cast<int>(inputs.m.size());

  SnFitReport rep;
  if (inputs.t.lpNorm<Eigen::Infinity>() == 0.0) {
    // Symmetric case: no skewness to match.
    Eigen::LLT<Mat> llt(inputs.H);
    rep.params.Omega = llt.solve(Mat::Identity(d, d));
    rep.params.xi = inputs.m;
    rep.params.alpha = Vec::Zero(d);
    return rep;
  }

  constexpr int kGrid = 257;
  double lo = 0.0, hi = 0.0, glo = 0.0, ghi = 0.0;
  bool found = false;
  double first_kappa = 0.0, first_g = 0.0, last_kappa = 0.0, last_g = 0.0;
  bool any_feasible = false;

  for (double level : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 50.0}) {
    bool have_prev = false;
    double prev_kappa = 0.0, prev_g = 0.0;
    for (int i = 0; i < kGrid; ++i) {
      const double kappa = -level + 2.0 * level * i / (kGrid - 1);
      const detail::SnKappaState st = detail::sn_kappa_state(inputs, kappa);
      if (!st.feasible) {
        have_prev = false;
        continue;
      }
      if (!any_feasible || kappa < first_kappa) first_kappa = kappa, first_g = st.g;
      if (!any_feasible || kappa > last_kappa) last_kappa = kappa, last_g = st.g;
      any_feasible = true;
      if (have_prev && ((prev_g <= 0.0 && st.g >= 0.0) || (prev_g >= 0.0 && st.g <= 0.0))) {
        lo = prev_kappa;
        hi = kappa;
        glo = prev_g;
        ghi = st.g;
        found = true;
        break;
      }
      have_prev = true;
      prev_kappa = kappa;
      prev_g = st.g;
    }
    if (found) break;
  }

  if (!found) {
    std::ostringstream os;
    os << "sn_fit: no sign change of the matching residual for kappa in [-50, 50]";
    if (any_feasible) {
      os << "; residual sign " << (first_g >= 0.0 ? '+' : '-') << " at kappa = " << first_kappa
         << " and " << (last_g >= 0.0 ? '+' : '-') << " at kappa = " << last_kappa;
    } else {
      os << "; no feasible kappa (implied scale matrix never positive definite)";
    }
    throw NoSolutionError(os.str());
  }

  auto g_of = [&](double kappa) {
    const detail::SnKappaState st = detail::sn_kappa_state(inputs, kappa);
    if (!st.feasible) {
      std::ostringstream os;
      os << "sn_fit: implied scale matrix lost positive definiteness at kappa = " << kappa;
      throw InfeasibleMatchError(os.str());
    }
    return st.g;
  };
  const double kappa = detail::brent_root(g_of, lo, hi, glo, ghi, 1e-13);
  const detail::SnKappaState st = detail::sn_kappa_state(inputs, kappa);
  if (!st.feasible)
    throw InfeasibleMatchError("sn_fit: implied scale matrix not positive definite at the root");
  rep.kappa = kappa;
  rep.bracket_lo = lo;
  rep.bracket_hi = hi;
  rep.g_residual = std::abs(st.g);
  if (rep.g_residual > 1e-8 * (1.0 + std::abs(kappa)))
    throw ConvergenceError("sn_fit: matching residual did not reach tolerance at the root");

  rep.params.Omega = st.Omega;
  rep.params.xi = inputs.m - zeta(1, kappa) * (st.Omega * st.eta);
  rep.params.alpha = Vec(d);
  for (int i = 0; i < d; ++i)
    rep.params.alpha[i] = st.eta[i] * std::sqrt(st.Omega(i, i));
  return rep;
}

inline SnParams sn_fit(const MatchInputs& inputs) { return sn_fit_report(inputs).params; }

// Matching inputs read off a fitted posterior geometry.
inline MatchInputs sn_match_inputs(const PosteriorGeometry& geom,
                                   SksSource source = SksSource::posterior_at_map) {
  MatchInputs in;
  if (source == SksSource::posterior_at_map) {
    if (geom.third_at_map.empty())
      throw CapabilityError("sn_match_inputs: third-derivative information unavailable");
    in.m = geom.map_point;
    in.H = geom.obs_info_map;
    in.t = geom.third_at_map.unmixed();
  } else {
    if (geom.third_lik_at_mle.empty())
      throw CapabilityError("sn_match_inputs: third-derivative information unavailable");
    in.m = geom.mle;
    in.H = geom.obs_info_mle;
    in.t = geom.third_lik_at_mle.unmixed();
  }
  return in;
}

inline double sn_logpdf(const SnParams& p, const Vec& x) {
  detail::check_sn_params(p, "sn_logpdf");
  const int d = static_cast<int>(p.xi.size());
  if (x.size() != d) throw DimensionError("sn_logpdf: point dimension mismatch");
  Eigen::LLT<Mat> llt(p.Omega);
  const Vec z = x - p.xi;
  const Vec sol = llt.solve(z);
  double logdet = 0.0;
  const Mat L = llt.matrixL();
  for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(L(i, i));
  const double w = detail::sn_eta(p).dot(z);
  return std::log(2.0) - 0.5 * (d * std::log(2.0 * detail::kPi) + logdet + z.dot(sol)) +
         norm_logcdf(w);
}

// The x-scale skewness vector delta = Omega eta / sqrt(1 + eta' Omega eta);
// E[X] = xi + sqrt(2/pi) delta, and delta restricts to sub-vectors under
// marginalization.
inline Vec sn_delta(const SnParams& p) {
  detail::check_sn_params(p, "sn_delta");
  const Vec eta = detail::sn_eta(p);
  return (p.Omega * eta) / std::sqrt(1.0 + eta.dot(p.Omega * eta));
}

// Marginal of the coordinates in `keep` (order preserved): the scale is the
// corresponding block of Omega and the skewness vector restricts, from which
// the marginal shape is recovered.
inline SnParams sn_marginal(const SnParams& p, const std::vector<int>& keep) {
  detail::check_sn_params(p, "sn_marginal");
  const int d = static_cast<int>(p.xi.size());
  if (keep.empty()) throw DimensionError("sn_marginal: empty index set");
  std::vector<bool> seen(d, false);
  for (int idx : keep) {
    if (idx < 0 || idx >= d) throw DimensionError("sn_marginal: index out of range");
    if (seen[idx]) throw DimensionError("sn_marginal: repeated index");
    seen[idx] = true;
  }
  if (static_cast<int>(keep.size()) == d) {
    bool identity = true;
    for (int i = 0; i < d; ++i) identity = identity && keep[i] == i;
    if (identity) return p;
  }

  const int k = static_cast<int>(keep.size());
  const Vec delta = sn_delta(p);
  SnParams out;
  out.xi = Vec(k);
  out.Omega = Mat(k, k);
  Vec delta_b(k);
  for (int a = 0; a < k; ++a) {
    out.xi[a] = p.xi[keep[a]];
    delta_b[a] = delta[keep[a]];
    for (int b = 0; b < k; ++b) out.Omega(a, b) = p.Omega(keep[a], keep[b]);
  }
  Eigen::LLT<Mat> llt(out.Omega);
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("sn_marginal: scale block not positive definite");
  const Vec u = llt.solve(delta_b);
  const double rem = 1.0 - delta_b.dot(u);
  if (!(rem > 0.0))
    throw LinearAlgebraError("sn_marginal: degenerate skewness in the retained block");
  out.alpha = Vec(k);
  for (int a = 0; a < k; ++a) out.alpha[a] = u[a] / std::sqrt(rem) * std::sqrt(out.Omega(a, a));
  return out;
}

// Seeded draws via the stochastic representation
//   X = xi + delta |T0| + W,  T0 ~ N(0,1),  W ~ N(0, Omega - delta delta'),
// using an inverse-CDF normal sampler for cross-platform determinism.
inline Mat sn_sample(const SnParams& p, int n_draws, std::uint64_t seed) {
  detail::check_sn_params(p, "sn_sample");
  if (n_draws < 1) throw DomainError("sn_sample: need at least one draw");
  const int d = static_cast<int>(p.xi.size());
  const Vec delta = sn_delta(p);
  Eigen::LLT<Mat> llt(p.Omega - delta * delta.transpose());
  if (llt.info() != Eigen::Success)
    throw LinearAlgebraError("sn_sample: residual covariance not positive definite");
  const Mat L = llt.matrixL();

  std::mt19937_64 gen(seed);
  auto normal = [&]() { return norm_quantile(detail::uniform01(gen)); };
  Mat draws(n_draws, d);
  Vec w(d);
  for (int r = 0; r < n_draws; ++r) {
    const double t0 = std::abs(normal());
    for (int i = 0; i < d; ++i) w[i] = normal();
    draws.row(r) = (p.xi + delta * t0 + L * w).transpose();
  }
  return draws;
}

// Univariate skew-normal BDM: fold of the SN CDF at theta0.
inline BdmResult bdm_sn_univariate(const SnParams& p, double theta0) {
  detail::check_sn_params(p, "bdm_sn_univariate");
  if (p.xi.size() != 1)
    throw DimensionError("bdm_sn_univariate: scalar operation; marginalize first");
  const double f0 = sn_cdf(theta0, p.xi[0], p.Omega(0, 0), p.alpha[0]);
  return fold_tail("sn", f0);
}

}  // namespace bdm
