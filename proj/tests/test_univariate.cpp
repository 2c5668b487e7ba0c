#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bdm/model.hpp"
#include "bdm/univariate.hpp"

#ifndef BDM_REPO_ROOT
#define BDM_REPO_ROOT "."
#endif

namespace {

const std::string kCushings = std::string(BDM_REPO_ROOT) + "/data/cushings.csv";

const double kTheta0[8] = {0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.1, 2.4};
const int kNs[4] = {6, 12, 20, 40};

// Published two-decimal reference rows for the exponential study
// (theta0 = 0.3 ... 2.4), used with the +-0.015 reproduction tolerance.
const double kIoRow6[8] = {0.93, 0.78, 0.46, 0.00, 0.46, 0.78, 0.93, 0.99};
const double kHoRows[4][8] = {
    {1.00, 0.96, 0.62, 0.00, 0.30, 0.57, 0.73, 0.83},
    {1.00, 0.99, 0.75, 0.00, 0.48, 0.78, 0.91, 0.96},
    {1.00, 1.00, 0.85, 0.00, 0.62, 0.90, 0.97, 0.99},
    {1.00, 1.00, 0.95, 0.00, 0.81, 0.98, 1.00, 1.00}};

// Log-parameterization of the exponential likelihood (phi = log theta) with a
// flat log-prior, which is the pushforward of the 1/theta prior. Expected
// information is constant in phi.
std::pair<bdm::ModelSpec, bdm::Dataset> log_exponential_model(int n, double mle) {
  bdm::Dataset data;
  data.observations = bdm::Mat::Constant(1, 1, n * mle);
  data.n = n;
  bdm::ModelSpec m;
  m.dim = 1;
  m.name = "exponential-log";
  m.loglik = [](const bdm::Vec& phi, const bdm::Dataset& d) {
    const double t = d.observations(0, 0);
    return -d.n * phi[0] - t * std::exp(-phi[0]);
  };
  m.logprior = [](const bdm::Vec&) { return 0.0; };
  m.expected_info = [n](const bdm::Vec&) { return bdm::Mat::Constant(1, 1, double(n)); };
  m.init = bdm::Vec::Constant(1, std::log(mle));
  return {std::move(m), std::move(data)};
}

}  // namespace

TEST_CASE("first-order measure on the exponential model", "[univariate]") {
  auto [model, data] = bdm::exponential_model(6, 1.2);
  const bdm::PosteriorGeometry g = bdm::fit_geometry(model, data);

  bdm::BdmResult r = bdm::bdm_io(g, 0.9);
  REQUIRE(r.method == "io");
  REQUIRE(r.tail_low == Catch::Approx(0.270137).margin(2e-5));
  REQUIRE(r.delta == Catch::Approx(0.459727).margin(5e-5));
  REQUIRE(r.diagnostics.at("j_mle") == Catch::Approx(6.0 / 1.44).epsilon(1e-6));
  REQUIRE_FALSE(r.clamped);

  // Exactly zero at the sample value of the statistic.
  REQUIRE(bdm::bdm_io(g, 1.2).delta == Catch::Approx(0.0).margin(1e-12));

  // delta is the folded tail measure at every point.
  for (int j = 0; j < 8; ++j) {
    const bdm::BdmResult c = bdm::bdm_io(g, kTheta0[j]);
    const double fold = 1.0 - 2.0 * std::min(c.tail_low, 1.0 - c.tail_low);
    REQUIRE(c.delta == Catch::Approx(std::clamp(fold, 0.0, 1.0)).margin(1e-12));
    REQUIRE(std::abs(c.delta - kIoRow6[j]) <= 0.015);
  }

  // Scalar operation: a three-parameter geometry is rejected.
  const bdm::Dataset cd = bdm::load_csv(kCushings);
  const bdm::ModelSpec cm = bdm::logistic_model(cd, 5.0);
  const bdm::PosteriorGeometry cg = bdm::fit_geometry(cm, cd);
  REQUIRE_THROWS_AS(bdm::bdm_io(cg, 0.0), bdm::DimensionError);
}

TEST_CASE("first-order profile measure on the logistic model", "[univariate]") {
  const bdm::Dataset data = bdm::load_csv(kCushings);
  const bdm::ModelSpec model = bdm::logistic_model(data, 5.0);
  const bdm::PosteriorGeometry g = bdm::fit_geometry(model, data);

  const bdm::BdmResult b1 = bdm::bdm_io_profile(model, data, g, 1, 0.0);
  REQUIRE(b1.method == "io-profile");
  REQUIRE(b1.delta == Catch::Approx(0.475360).margin(1e-3));
  // The analytic profile curvature and its FD second-difference cross-check.
  REQUIRE(b1.diagnostics.at("j_profile") ==
          Catch::Approx(b1.diagnostics.at("j_profile_fd")).epsilon(1e-4));

  const bdm::BdmResult b2 = bdm::bdm_io_profile(model, data, g, 2, 0.0);
  REQUIRE(b2.delta == Catch::Approx(0.801760).margin(1e-3));
  REQUIRE(b2.diagnostics.at("j_profile") ==
          Catch::Approx(b2.diagnostics.at("j_profile_fd")).epsilon(1e-4));

  // Vanishes at the coordinate MLE.
  REQUIRE(bdm::bdm_io_profile(model, data, g, 1, g.mle[1]).delta ==
          Catch::Approx(0.0).margin(1e-12));

  REQUIRE_THROWS_AS(bdm::bdm_io_profile(model, data, g, 3, 0.0), bdm::DimensionError);
  REQUIRE_THROWS_AS(bdm::bdm_io_profile(model, data, g, -1, 0.0), bdm::DimensionError);
  auto [em, ed] = bdm::exponential_model(6, 1.2);
  const bdm::PosteriorGeometry eg = bdm::fit_geometry(em, ed);
  REQUIRE_THROWS_AS(bdm::bdm_io_profile(em, ed, eg, 0, 1.0), bdm::DimensionError);
}

TEST_CASE("r* statistic: values, bridge, and continuity", "[univariate]") {
  // Interpolated value at the singular point for each sample size.
  const double want_bridge[4] = {0.13608276, 0.09622504, 0.07453560, 0.05270463};
  for (int k = 0; k < 4; ++k) {
    auto [m, d] = bdm::exponential_model(kNs[k], 1.2);
    const bdm::PosteriorGeometry g = bdm::fit_geometry(m, d);
    const double general = bdm::rstar(m, d, g, 1.2, bdm::PriorMode::general);
    const double jeffreys = bdm::rstar(m, d, g, 1.2, bdm::PriorMode::jeffreys);
    REQUIRE(general == Catch::Approx(want_bridge[k]).margin(1e-6));
    // The model's prior is the square-root expected information, so the two
    // standardizations coincide.
    REQUIRE(general == Catch::Approx(jeffreys).margin(1e-10));
  }

  auto [m, d] = bdm::exponential_model(6, 1.2);
  const bdm::PosteriorGeometry g = bdm::fit_geometry(m, d);

  // Strictly decreasing through the guard band: no seam where the bridge
  // hands over to the closed form.
  const double sd = 1.2 * 1.2 / std::sqrt(6.0 * 1.44);  // 1/sqrt(j(mle))
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 24; ++i) {
    const double th = 1.2 + (-0.03 + 0.0025 * i) * sd;
    const double v = bdm::rstar(m, d, g, th);
    REQUIRE(v < prev);
    prev = v;
  }

  // Signs agree with the side of the MLE.
  REQUIRE(bdm::rstar(m, d, g, 0.9) > 0.0);
  REQUIRE(bdm::rstar(m, d, g, 1.8) < 0.0);

  REQUIRE_THROWS_AS(
      [&] {
        const bdm::Dataset cd = bdm::load_csv(kCushings);
        const bdm::ModelSpec cm = bdm::logistic_model(cd, 5.0);
        const bdm::PosteriorGeometry cg = bdm::fit_geometry(cm, cd);
        return bdm::rstar(cm, cd, cg, 0.0);
      }(),
      bdm::DimensionError);
}

TEST_CASE("third-order measure on the exponential model", "[univariate]") {
  auto [m6, d6] = bdm::exponential_model(6, 1.2);
  const bdm::PosteriorGeometry g6 = bdm::fit_geometry(m6, d6);

  // At the MLE the reported statistic follows r (prints as zero) while the
  // bridged r* stays available in the diagnostics.
  const bdm::BdmResult at_mle = bdm::bdm_ho(m6, d6, g6, 1.2, bdm::PriorMode::jeffreys);
  REQUIRE(at_mle.method == "ho");
  REQUIRE(at_mle.delta == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(at_mle.diagnostics.at("bridged") == 1.0);
  REQUIRE(at_mle.diagnostics.at("rstar") == Catch::Approx(0.13608276).margin(1e-6));

  // Tail orientation: mass below theta0 = 0.9 is small.
  const bdm::BdmResult low = bdm::bdm_ho(m6, d6, g6, 0.9, bdm::PriorMode::jeffreys);
  REQUIRE(low.tail_low < 0.5);
  REQUIRE(low.tail_low ==
          Catch::Approx(bdm::norm_cdf(-bdm::rstar(m6, d6, g6, 0.9))).margin(1e-12));

  // Whole-grid agreement with the exact posterior (theta0 != mle), and
  // reproduction of the published rows to +-0.015.
  double max_dev = 0.0;
  for (int k = 0; k < 4; ++k) {
    auto [m, d] = bdm::exponential_model(kNs[k], 1.2);
    const bdm::PosteriorGeometry g = bdm::fit_geometry(m, d);
    for (int j = 0; j < 8; ++j) {
      const bdm::BdmResult r = bdm::bdm_ho(m, d, g, kTheta0[j], bdm::PriorMode::jeffreys);
      REQUIRE(std::abs(r.delta - kHoRows[k][j]) <= 0.015);
      if (kTheta0[j] != 1.2) {
        const double ex = bdm::exact_bdm_exponential(kNs[k], 1.2, kTheta0[j]);
        max_dev = std::max(max_dev, std::abs(r.delta - ex));
      } else {
        REQUIRE(r.delta == Catch::Approx(0.0).margin(1e-12));
      }
    }
  }
  INFO("max |ho - exact| over the grid: " << max_dev);
  REQUIRE(max_dev <= 0.005);

  // Jeffreys standardization without an expected-information function falls
  // back to observed information and says so.
  bdm::ModelSpec no_ei = m6;
  no_ei.expected_info = nullptr;
  const bdm::BdmResult fb = bdm::bdm_ho(no_ei, d6, g6, 0.9, bdm::PriorMode::jeffreys);
  REQUIRE(fb.diagnostics.at("jeffreys_fallback_observed") == 1.0);
  REQUIRE(fb.delta > 0.0);
  // ... and reports failure where the observed curvature is not positive.
  REQUIRE_THROWS_AS(bdm::bdm_ho(no_ei, d6, g6, 3.0, bdm::PriorMode::jeffreys),
                    bdm::EvaluationError);

  // The two standardizations coincide for this model/prior pair but separate
  // once the prior is replaced by a flat one.
  REQUIRE(bdm::bdm_ho(m6, d6, g6, 0.6, bdm::PriorMode::general).delta ==
          Catch::Approx(bdm::bdm_ho(m6, d6, g6, 0.6, bdm::PriorMode::jeffreys).delta)
              .margin(1e-10));
  bdm::ModelSpec flat = m6;
  flat.logprior = [](const bdm::Vec&) { return 0.0; };
  flat.logprior_grad = nullptr;
  flat.logprior_hess = nullptr;
  flat.logprior_third = nullptr;
  const double d_gen = bdm::bdm_ho(flat, d6, g6, 0.9, bdm::PriorMode::general).delta;
  const double d_jef = bdm::bdm_ho(flat, d6, g6, 0.9, bdm::PriorMode::jeffreys).delta;
  REQUIRE(std::abs(d_gen - d_jef) > 0.05);
}

TEST_CASE("reparameterization behaviour of the tail approximations", "[univariate]") {
  for (int n : {6, 20}) {
    auto [m, d] = bdm::exponential_model(n, 1.2);
    auto [lm, ld] = log_exponential_model(n, 1.2);
    const bdm::PosteriorGeometry g = bdm::fit_geometry(m, d);
    const bdm::PosteriorGeometry lg = bdm::fit_geometry(lm, ld);
    for (double t0 : kTheta0) {
      if (t0 == 1.2) continue;
      const double direct = bdm::bdm_ho(m, d, g, t0, bdm::PriorMode::jeffreys).delta;
      const double logged =
          bdm::bdm_ho(lm, ld, lg, std::log(t0), bdm::PriorMode::jeffreys).delta;
      REQUIRE(direct == Catch::Approx(logged).margin(1e-6));
      // The general standardization with the pushforward prior agrees too.
      const double logged_gen =
          bdm::bdm_ho(lm, ld, lg, std::log(t0), bdm::PriorMode::general).delta;
      REQUIRE(direct == Catch::Approx(logged_gen).margin(1e-6));
    }
  }

  // The first-order measure is not invariant: the same hypothesis moves by
  // more than 0.01 under the log reparameterization.
  auto [m, d] = bdm::exponential_model(6, 1.2);
  auto [lm, ld] = log_exponential_model(6, 1.2);
  const bdm::PosteriorGeometry g = bdm::fit_geometry(m, d);
  const bdm::PosteriorGeometry lg = bdm::fit_geometry(lm, ld);
  const double io_direct = bdm::bdm_io(g, 0.6).delta;
  const double io_logged = bdm::bdm_io(lg, std::log(0.6)).delta;
  REQUIRE(io_direct == Catch::Approx(0.7793).margin(2e-3));
  REQUIRE(io_logged == Catch::Approx(0.9104).margin(2e-3));
  REQUIRE(std::abs(io_logged - io_direct) >= 0.01);
}

TEST_CASE("both measures grow away from their centers", "[univariate]") {
  auto [m, d] = bdm::exponential_model(6, 1.2);
  const bdm::PosteriorGeometry g = bdm::fit_geometry(m, d);

  // First-order: center is the MLE.
  double prev = 1.0;
  for (double t = 0.3; t < 1.2 - 1e-9; t += 0.05) {  // approaching from the left
    const double v = bdm::bdm_io(g, t).delta;
    REQUIRE(v <= prev + 1e-12);
    prev = v;
  }
  prev = 0.0;
  for (double t = 1.25; t < 3.0; t += 0.05) {  // receding to the right
    const double v = bdm::bdm_io(g, t).delta;
    REQUIRE(v + 1e-12 >= prev);
    prev = v;
  }

  // Third-order: center is the implied median (the r* zero).
  const double med = bdm::posterior_median_rstar(m, d, g);
  prev = 1.0;
  for (int i = 0; i < 20; ++i) {
    const double t = 0.3 + (med - 0.31) * i / 19.0;
    const double v = bdm::bdm_ho(m, d, g, t, bdm::PriorMode::jeffreys).delta;
    REQUIRE(v <= prev + 1e-12);
    prev = v;
  }
  prev = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double t = med + 0.01 + 0.15 * i;
    const double v = bdm::bdm_ho(m, d, g, t, bdm::PriorMode::jeffreys).delta;
    REQUIRE(v + 1e-12 >= prev);
    prev = v;
  }
}

TEST_CASE("implied median and credible interval from r*", "[univariate]") {
  const double want_med[4] = {1.269546, 1.234040, 1.220253, 1.210063};
  for (int k = 0; k < 4; ++k) {
    auto [m, d] = bdm::exponential_model(kNs[k], 1.2);
    const bdm::PosteriorGeometry g = bdm::fit_geometry(m, d);
    const double med = bdm::posterior_median_rstar(m, d, g);
    REQUIRE(med == Catch::Approx(want_med[k]).margin(1e-5));
    REQUIRE(std::abs(med - bdm::exact_quantile_exponential(kNs[k], 1.2, 0.5)) <= 1e-3);
  }

  auto [m, d] = bdm::exponential_model(6, 1.2);
  const bdm::PosteriorGeometry g = bdm::fit_geometry(m, d);
  const auto [lo, hi] = bdm::credible_interval_rstar(m, d, g, 0.05);
  REQUIRE(lo == Catch::Approx(0.616931).margin(5e-4));
  REQUIRE(hi == Catch::Approx(3.269499).margin(5e-4));
  REQUIRE(std::abs(lo - bdm::exact_quantile_exponential(6, 1.2, 0.025)) <= 5e-3);
  REQUIRE(std::abs(hi - bdm::exact_quantile_exponential(6, 1.2, 0.975)) <= 5e-3);
  // Exact coverage of the approximate interval.
  const double cover =
      bdm::exact_cdf_exponential(6, 1.2, hi) - bdm::exact_cdf_exponential(6, 1.2, lo);
  REQUIRE(cover == Catch::Approx(0.95).margin(5e-3));
  // Ordering and collapse onto the median as alpha -> 1.
  const double med = bdm::posterior_median_rstar(m, d, g);
  REQUIRE(lo < med);
  REQUIRE(med < hi);
  const auto [l2, h2] = bdm::credible_interval_rstar(m, d, g, 0.9999);
  REQUIRE(h2 - l2 < 1e-3);
  REQUIRE(l2 <= med);
  REQUIRE(med <= h2);

  REQUIRE_THROWS_AS(bdm::credible_interval_rstar(m, d, g, 0.0), bdm::DomainError);
  REQUIRE_THROWS_AS(bdm::credible_interval_rstar(m, d, g, 1.0), bdm::DomainError);
  REQUIRE_THROWS_AS(bdm::posterior_median_rstar(m, d, g, 2), bdm::DimensionError);

  const bdm::Dataset cd = bdm::load_csv(kCushings);
  const bdm::ModelSpec cm = bdm::logistic_model(cd, 5.0);
  const bdm::PosteriorGeometry cg = bdm::fit_geometry(cm, cd);
  REQUIRE_THROWS_AS(bdm::credible_interval_rstar(cm, cd, cg, 0.05), bdm::DimensionError);
  REQUIRE_THROWS_AS(bdm::posterior_median_rstar(cm, cd, cg), bdm::DimensionError);
  REQUIRE_THROWS_AS(bdm::posterior_median_rstar(cm, cd, cg, 7), bdm::DimensionError);
}

TEST_CASE("profile r* measure on the logistic model", "[univariate]") {
  const bdm::Dataset data = bdm::load_csv(kCushings);
  const bdm::ModelSpec model = bdm::logistic_model(data, 5.0);
  const bdm::PosteriorGeometry g = bdm::fit_geometry(model, data);

  const bdm::BdmResult b1 = bdm::bdm_ho_profile(model, data, g, 1, 0.0);
  REQUIRE(b1.method == "ho-profile");
  REQUIRE(b1.diagnostics.at("r") == Catch::Approx(-0.69428088).margin(5e-4));
  REQUIRE(b1.diagnostics.at("q") == Catch::Approx(-0.77773020).margin(5e-4));
  REQUIRE(b1.diagnostics.at("rstar") == Catch::Approx(-0.85776380).margin(5e-4));
  REQUIRE(b1.delta == Catch::Approx(0.608977).margin(5e-4));
  REQUIRE(b1.tail_low == Catch::Approx(0.804489).margin(5e-4));
  // Reference two-decimal value for this coordinate.
  REQUIRE(std::abs(b1.delta - 0.611) <= 0.01);

  const bdm::BdmResult b2 = bdm::bdm_ho_profile(model, data, g, 2, 0.0);
  REQUIRE(b2.diagnostics.at("r") == Catch::Approx(-1.60085063).margin(5e-4));
  REQUIRE(b2.diagnostics.at("q") == Catch::Approx(-2.29932915).margin(1e-3));
  REQUIRE(b2.diagnostics.at("rstar") == Catch::Approx(-1.82703180).margin(5e-4));
  REQUIRE(b2.delta == Catch::Approx(0.932305).margin(5e-4));
  REQUIRE(b2.tail_low == Catch::Approx(0.966153).margin(5e-4));

  // Vanishes (as printed) at the coordinate MLE, with the bridge flagged.
  const bdm::BdmResult at_hat = bdm::bdm_ho_profile(model, data, g, 1, g.mle[1]);
  REQUIRE(at_hat.delta == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(at_hat.diagnostics.at("bridged") == 1.0);

  // Implied profile median is the zero of the profile statistic.
  const double med = bdm::posterior_median_rstar(model, data, g, 1);
  REQUIRE(med < g.mle[1]);  // tail mass P(psi <= psi-hat) < 1/2 here
  REQUIRE(std::abs(bdm::rstar_profile(model, data, g, 1, med)) < 1e-7);

  REQUIRE_THROWS_AS(bdm::rstar_profile(model, data, g, 5, 0.0), bdm::DimensionError);
}

TEST_CASE("chi-squared fold of the Wald and likelihood-ratio statistics", "[univariate]") {
  const bdm::Dataset data = bdm::load_csv(kCushings);
  const bdm::ModelSpec model = bdm::logistic_model(data, 5.0);
  const bdm::PosteriorGeometry g = bdm::fit_geometry(model, data);

  // Sub-block quadratic form for the two covariate coefficients.
  const bdm::BdmResult sub = bdm::bdm_wald_subblock(g, {1, 2}, bdm::Vec::Zero(2));
  REQUIRE(sub.method == "wald-subblock");
  REQUIRE(sub.diagnostics.at("w") == Catch::Approx(2.422995).margin(2e-3));
  REQUIRE(sub.delta == Catch::Approx(0.702249).margin(1e-3));
  REQUIRE(sub.diagnostics.at("chi2_upper") == Catch::Approx(0.297751).margin(1e-3));
  REQUIRE(std::isnan(sub.tail_low));

  // Full-vector likelihood-ratio form with the intercept held at its MLE and
  // the covariate block at zero.
  bdm::Vec t0 = bdm::Vec::Zero(3);
  t0[0] = g.mle[0];
  const bdm::BdmResult lr = bdm::bdm_wald_multi(g, t0, true);
  REQUIRE(lr.method == "wald");
  REQUIRE(lr.diagnostics.at("w") == Catch::Approx(7.952505).margin(1e-4));
  REQUIRE(lr.delta == Catch::Approx(0.952996).margin(1e-4));
  REQUIRE(std::isnan(lr.tail_low));

  // Quadratic form vanishes at the MLE; dimension mismatches are rejected.
  REQUIRE(bdm::bdm_wald_multi(g, g.mle, false).delta == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(bdm::bdm_wald_multi(g, g.mle, true).delta == Catch::Approx(0.0).margin(1e-9));
  REQUIRE_THROWS_AS(bdm::bdm_wald_multi(g, bdm::Vec::Zero(2), false), bdm::DimensionError);
  REQUIRE_THROWS_AS(bdm::bdm_wald_subblock(g, {0, 3}, bdm::Vec::Zero(2)),
                    bdm::DimensionError);
  REQUIRE_THROWS_AS(bdm::bdm_wald_subblock(g, {1, 1}, bdm::Vec::Zero(2)),
                    bdm::DimensionError);
  REQUIRE_THROWS_AS(bdm::bdm_wald_subblock(g, {}, bdm::Vec::Zero(0)), bdm::DimensionError);

  // In one dimension the quadratic form reproduces the first-order measure.
  auto [em, ed] = bdm::exponential_model(6, 1.2);
  const bdm::PosteriorGeometry eg = bdm::fit_geometry(em, ed);
  for (double t0 : kTheta0) {
    const double via_wald = bdm::bdm_wald_multi(eg, bdm::Vec::Constant(1, t0), false).delta;
    const double via_io = bdm::bdm_io(eg, t0).delta;
    REQUIRE(via_wald == Catch::Approx(via_io).margin(1e-12));
  }
}
