#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "bdm/model.hpp"
#include "bdm/special.hpp"

#ifndef BDM_REPO_ROOT
#define BDM_REPO_ROOT "."
#endif

namespace {

const std::string kCushings = std::string(BDM_REPO_ROOT) + "/data/cushings.csv";

double round2(double x) { return std::round(x * 100.0) / 100.0; }

std::string write_temp_csv(const char* name, const std::string& body) {
  const std::string path = std::string("/tmp/") + name;
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("exponential model definition and geometry", "[model]") {
  auto [model, data] = bdm::exponential_model(6, 1.2);
  REQUIRE(data.observations(0, 0) == Catch::Approx(7.2));
  REQUIRE(data.n == 6);

  const bdm::PosteriorGeometry g = bdm::fit_geometry(model, data);
  REQUIRE(g.mle[0] == Catch::Approx(1.2).margin(1e-8));
  REQUIRE(g.map_point[0] == Catch::Approx(7.2 / 7.0).margin(1e-7));
  REQUIRE(g.obs_info_mle(0, 0) == Catch::Approx(6.0 / 1.44).margin(1e-4));
  // information at the MAP from the analytic posterior curvature
  const double tm = 7.2 / 7.0;
  const double j_map = -(6.0 / (tm * tm) - 2.0 * 7.2 / (tm * tm * tm)) - 1.0 / (tm * tm);
  REQUIRE(g.obs_info_map(0, 0) == Catch::Approx(j_map).epsilon(1e-8));
  // ... which collapses to (n + 1) / map^2 for this model
  REQUIRE(g.obs_info_map(0, 0) == Catch::Approx(7.0 / (tm * tm)).epsilon(1e-8));

  // MAP values across the sample-size ladder at print precision.
  const double want_map[] = {1.03, 1.11, 1.14, 1.17};
  const int ns[] = {6, 12, 20, 40};
  for (int k = 0; k < 4; ++k) {
    auto [mk, dk] = bdm::exponential_model(ns[k], 1.2);
    const bdm::PosteriorGeometry gk = bdm::fit_geometry(mk, dk);
    REQUIRE(round2(gk.map_point[0]) == Catch::Approx(want_map[k]));
    REQUIRE(gk.mle[0] == Catch::Approx(1.2).margin(1e-8));
  }

  // MLE equals the requested value for any admissible pair.
  auto [m2, d2] = bdm::exponential_model(9, 2.7);
  REQUIRE(bdm::fit_geometry(m2, d2).mle[0] == Catch::Approx(2.7).margin(1e-8));

  // Raw-data constructor reduces to (n, mean).
  bdm::Vec sample(4);
  sample << 0.5, 1.5, 2.0, 4.0;
  auto [m3, d3] = bdm::exponential_model_from_data(sample);
  REQUIRE(d3.n == 4);
  REQUIRE(d3.observations(0, 0) == Catch::Approx(8.0));

  REQUIRE_THROWS_AS(bdm::exponential_model(6, -1.0), bdm::DomainError);
  REQUIRE_THROWS_AS(bdm::exponential_model(0, 1.0), bdm::DomainError);

  // Analytic and FD derivatives agree on a 20-point grid.
  bdm::RealFunction ll = [&](const bdm::Vec& t) { return model.loglik(t, data); };
  for (int i = 0; i < 20; ++i) {
    bdm::Vec t(1);
    t << 0.5 + 0.15 * i;
    const bdm::DiffReport rep = bdm::fd_derivatives(ll, t, 2);
    REQUIRE(model.loglik_grad(t, data)[0] ==
            Catch::Approx(rep.gradient[0]).epsilon(1e-5).margin(1e-8));
    REQUIRE(model.loglik_hess(t, data)(0, 0) ==
            Catch::Approx(rep.hessian(0, 0)).epsilon(1e-4).margin(1e-4));
  }
}

TEST_CASE("csv ingestion", "[model]") {
  const bdm::Dataset d = bdm::load_csv(kCushings);
  REQUIRE(d.n == 27);
  REQUIRE(d.observations.cols() == 2);
  REQUIRE(d.response.has_value());
  double ysum = d.response->sum();
  REQUIRE(ysum == Catch::Approx(10.0));
  REQUIRE(d.observations(0, 0) == Catch::Approx(3.1));
  REQUIRE(d.observations(26, 1) == Catch::Approx(0.8));

  const std::string head_only = write_temp_csv("bdm_head.csv", "a,b,y\n");
  REQUIRE_THROWS_AS(bdm::load_csv(head_only), bdm::SchemaError);

  const std::string ragged = write_temp_csv("bdm_ragged.csv", "a,b\n1,2\n3\n");
  try {
    bdm::load_csv(ragged);
    FAIL("expected ParseError");
  } catch (const bdm::ParseError& e) {
    REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
  }

  const std::string bad = write_temp_csv("bdm_bad.csv", "a,b\n1,2\n3,zebra\n");
  try {
    bdm::load_csv(bad);
    FAIL("expected ParseError");
  } catch (const bdm::ParseError& e) {
    REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
  }

  const std::string noy = write_temp_csv("bdm_noy.csv", "a,b\n1,2\n");
  REQUIRE_FALSE(bdm::load_csv(noy).response.has_value());
  REQUIRE_THROWS_AS(bdm::load_csv("/tmp/definitely_missing_file.csv"), bdm::ParseError);
}

TEST_CASE("logistic model and geometry", "[model]") {
  const bdm::Dataset data = bdm::load_csv(kCushings);
  const bdm::ModelSpec model = bdm::logistic_model(data, 5.0);
  REQUIRE(model.dim == 3);

  const bdm::PosteriorGeometry g = bdm::fit_geometry(model, data);
  REQUIRE(g.map_point[0] == Catch::Approx(0.29370442).margin(1e-5));
  REQUIRE(g.map_point[1] == Catch::Approx(-0.0310781362).margin(1e-6));
  REQUIRE(g.map_point[2] == Catch::Approx(-0.2850850233).margin(1e-6));
  REQUIRE(g.mle[0] == Catch::Approx(0.2993816551).margin(1e-5));
  REQUIRE(g.mle[1] == Catch::Approx(-0.0312889273).margin(1e-6));
  REQUIRE(g.mle[2] == Catch::Approx(-0.2862518361).margin(1e-6));
  REQUIRE(model.loglik(g.mle, data) == Catch::Approx(-16.087933079997292).margin(1e-8));

  // frozen posterior information at the MAP
  const double j_want[3][3] = {{5.635542554, 51.5568599047, 7.8493423547},
                               {51.5568599047, 903.101520463, 88.9520834539},
                               {7.8493423547, 88.9520834539, 31.9772626629}};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      REQUIRE(g.obs_info_map(a, b) == Catch::Approx(j_want[a][b]).epsilon(1e-6));

  // First-order conditions verified by independent finite differences.
  bdm::RealFunction lp = [&](const bdm::Vec& t) {
    return model.loglik(t, data) + model.logprior(t);
  };
  REQUIRE(bdm::fd_derivatives(lp, g.map_point, 1).gradient.lpNorm<Eigen::Infinity>() < 1e-6);

  // Analytic vs FD derivatives on a 20-point cloud around the MAP.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-0.2, 0.2);
  for (int rep = 0; rep < 20; ++rep) {
    bdm::Vec t = g.map_point;
    for (int j = 0; j < 3; ++j) t[j] += unif(rng);
    bdm::RealFunction ll = [&](const bdm::Vec& b) { return model.loglik(b, data); };
    const bdm::DiffReport fd = bdm::fd_derivatives(ll, t, 2);
    const bdm::Vec ag = model.loglik_grad(t, data);
    const bdm::Mat ah = model.loglik_hess(t, data);
    for (int j = 0; j < 3; ++j)
      REQUIRE(ag[j] == Catch::Approx(fd.gradient[j]).epsilon(1e-5).margin(1e-6));
    // Entrywise second differences carry a roundoff floor of about
    // eps*|f|/h^2 ~ 1e-4 absolute at |f| ~ 16, so the margin sits above it.
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        REQUIRE(ah(a, b) == Catch::Approx(fd.hessian(a, b)).epsilon(1e-4).margin(1e-3));
  }

  // Start invariance: random starts in a unit ball around the MAP agree.
  for (int rep = 0; rep < 5; ++rep) {
    bdm::Vec s0 = g.map_point;
    for (int j = 0; j < 3; ++j) s0[j] += unif(rng) * 2.5;
    const bdm::Vec m2 = bdm::maximize(lp, s0);
    REQUIRE((m2 - g.map_point).lpNorm<Eigen::Infinity>() < 1e-6);
  }

  // Prior washout: a nearly flat prior pulls the MAP onto the MLE.
  const bdm::ModelSpec flat = bdm::logistic_model(data, 1e6);
  const bdm::PosteriorGeometry gf = bdm::fit_geometry(flat, data);
  REQUIRE((gf.map_point - gf.mle).lpNorm<Eigen::Infinity>() < 1e-3);

  // All-zero responses: the likelihood maximum escapes to the boundary.
  bdm::Dataset sep;
  sep.n = 3;
  sep.observations = bdm::Mat(3, 1);
  sep.observations << 1.0, 2.0, 3.0;
  sep.response = bdm::Vec::Zero(3);
  const bdm::ModelSpec sep_model = bdm::logistic_model(sep, 5.0);
  REQUIRE_THROWS_AS(bdm::fit_geometry(sep_model, sep), bdm::ConvergenceError);

  // Schema violations.
  bdm::Dataset no_resp = sep;
  no_resp.response.reset();
  REQUIRE_THROWS_AS(bdm::logistic_model(no_resp, 5.0), bdm::SchemaError);
  bdm::Dataset bad_resp = sep;
  (*bad_resp.response)[0] = 0.5;
  REQUIRE_THROWS_AS(bdm::logistic_model(bad_resp, 5.0), bdm::SchemaError);
  REQUIRE_THROWS_AS(bdm::logistic_model(sep, -1.0), bdm::DomainError);
}

TEST_CASE("exact exponential oracle", "[model]") {
  REQUIRE(bdm::exact_bdm_exponential(6, 1.2, 1.2) == Catch::Approx(0.1086).margin(5e-4));
  REQUIRE(round2(bdm::exact_bdm_exponential(6, 1.2, 0.9)) == Catch::Approx(0.62));
  REQUIRE(round2(bdm::exact_bdm_exponential(40, 1.2, 1.5)) == Catch::Approx(0.81));

  // Independent quadrature second opinion on the lower-tail probability.
  const double f09 = bdm::exact_cdf_exponential(6, 1.2, 0.9);
  const double t = 7.2;
  const double q = bdm::integrate_1d(
      [&](double th) {
        return std::exp(6.0 * std::log(t) - std::lgamma(6.0) - 7.0 * std::log(th) - t / th);
      },
      1e-8, 0.9, 1e-12);
  REQUIRE(f09 == Catch::Approx(q).margin(1e-9));

  // The posterior median folds to zero, and quantiles invert the CDF.
  const double med = bdm::exact_quantile_exponential(6, 1.2, 0.5);
  REQUIRE(med == Catch::Approx(1.2698051714).margin(1e-8));
  REQUIRE(bdm::exact_bdm_exponential(6, 1.2, med) == Catch::Approx(0.0).margin(1e-10));
  for (double p : {0.025, 0.25, 0.75, 0.975})
    REQUIRE(bdm::exact_cdf_exponential(6, 1.2, bdm::exact_quantile_exponential(6, 1.2, p)) ==
            Catch::Approx(p).margin(1e-12));

  // In [0, 1) and monotone away from the median on both sides.
  double prev_up = -1.0, prev_dn = -1.0;
  for (int k = 1; k <= 30; ++k) {
    const double up = bdm::exact_bdm_exponential(6, 1.2, med + 0.15 * k);
    const double dn = bdm::exact_bdm_exponential(6, 1.2, med / (1.0 + 0.2 * k));
    REQUIRE(up >= prev_up - 1e-14);
    REQUIRE(dn >= prev_dn - 1e-14);
    REQUIRE(up >= 0.0);
    REQUIRE(up < 1.0);
    REQUIRE(dn >= 0.0);
    REQUIRE(dn < 1.0);
    prev_up = up;
    prev_dn = dn;
  }

  REQUIRE_THROWS_AS(bdm::exact_bdm_exponential(6, 1.2, -0.3), bdm::DomainError);
}

TEST_CASE("marginal quadrature oracle", "[model][oracle]") {
  // d = 1: no nuisance block; must agree with the conjugate closed form.
  auto [em, ed] = bdm::exponential_model(6, 1.2);
  const bdm::MarginalExactReport r1 = bdm::exact_marginal_bdm_detail(em, ed, 0, 0.9);
  REQUIRE(r1.tail_low == Catch::Approx(bdm::exact_cdf_exponential(6, 1.2, 0.9)).margin(1e-6));
  REQUIRE(r1.delta == Catch::Approx(bdm::exact_bdm_exponential(6, 1.2, 0.9)).margin(1e-6));
  REQUIRE(r1.error_estimate <= 5e-3);

  const bdm::Dataset data = bdm::load_csv(kCushings);
  const bdm::ModelSpec model = bdm::logistic_model(data, 5.0);

  const bdm::MarginalExactReport rb1 = bdm::exact_marginal_bdm_detail(model, data, 1, 0.0);
  REQUIRE(rb1.tail_low == Catch::Approx(0.793759).margin(2e-3));
  REQUIRE(rb1.delta == Catch::Approx(0.587519).margin(2e-3));
  REQUIRE(rb1.error_estimate <= 5e-3);

  const bdm::MarginalExactReport rb2 = bdm::exact_marginal_bdm_detail(model, data, 2, 0.0);
  REQUIRE(rb2.tail_low == Catch::Approx(0.965034).margin(2e-3));
  REQUIRE(rb2.delta == Catch::Approx(0.930068).margin(2e-3));
  REQUIRE(rb2.error_estimate <= 5e-3);

  // Published reference values for this example (reconstruction-dependent).
  REQUIRE(rb1.delta == Catch::Approx(0.592).margin(0.02));
  REQUIRE(rb2.delta == Catch::Approx(0.932).margin(0.02));

  // Invariance under doubling the Gauss-Hermite node count.
  const bdm::MarginalExactReport rb1_hi = bdm::exact_marginal_bdm_detail(model, data, 1, 0.0, 128);
  REQUIRE(rb1.delta == Catch::Approx(rb1_hi.delta).margin(2e-3));

  REQUIRE_THROWS_AS(bdm::exact_marginal_bdm_detail(model, data, 5, 0.0), bdm::DimensionError);
  bdm::ModelSpec wide = model;
  wide.dim = 4;
  REQUIRE_THROWS_AS(bdm::exact_marginal_bdm_quadrature(wide, data, 0, 0.0), bdm::CapabilityError);
}
