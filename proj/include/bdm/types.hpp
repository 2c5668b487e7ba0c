#pragma once

// Shared value types: parameter vectors, datasets, model definitions, fitted
// posterior geometry, and the result record produced by every BDM method.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdm/errors.hpp"

namespace bdm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Dense order-3 symmetric-use tensor for small dimensions (d <= 3 in
// practice). Stored fully; symmetry is the producer's responsibility.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int dim) : d_(dim), v_(static_cast<size_t>(dim) * dim * dim, 0.0) {
    if (dim < 0) throw DimensionError("tensor dimension must be nonnegative");
  }

  int dim() const { return d_; }
  bool empty() const { return d_ == 0; }

  double& operator()(int i, int j, int k) { return v_[idx(i, j, k)]; }
  double operator()(int i, int j, int k) const { return v_[idx(i, j, k)]; }

  // Vector of the d unmixed entries (i, i, i).
  Vec unmixed() const {
    Vec t(d_);
    for (int i = 0; i < d_; ++i) t[i] = (*this)(i, i, i);
    return t;
  }

 private:
  size_t idx(int i, int j, int k) const {
    if (i < 0 || j < 0 || k < 0 || i >= d_ || j >= d_ || k >= d_)
      throw DimensionError("tensor index out of range");
    return (static_cast<size_t>(i) * d_ + j) * d_ + k;
  }

  int d_ = 0;
  std::vector<double> v_;
};

// Observed data: covariate matrix (n x p), optional binary response, and the
// sample size driving all n-scaled expansions. Models with a sufficient
// statistic (the exponential model) store it in `observations`.
struct Dataset {
  Mat observations;
  std::optional<Vec> response;
  int n = 0;
};

using RealFunction = std::function<double(const Vec&)>;

// A statistical model: log-likelihood, log-prior, optional analytic
// derivatives (finite differences are the universal fallback), and an
// optional expected-information function used by the Jeffreys-style
// standardization.
struct ModelSpec {
  int dim = 1;
  std::string name;

  std::function<double(const Vec&, const Dataset&)> loglik;
  std::function<double(const Vec&)> logprior;

  // Optional analytic derivatives of the log-likelihood.
  std::function<Vec(const Vec&, const Dataset&)> loglik_grad;
  std::function<Mat(const Vec&, const Dataset&)> loglik_hess;
  std::function<Tensor3(const Vec&, const Dataset&)> loglik_third;

  // Optional analytic derivatives of the log-prior.
  std::function<Vec(const Vec&)> logprior_grad;
  std::function<Mat(const Vec&)> logprior_hess;
  std::function<Tensor3(const Vec&)> logprior_third;

  // Optional expected (Fisher) information per observation block, as a full
  // d x d matrix for the whole sample.
  std::function<Mat(const Vec&)> expected_info;

  // Starting point for optimizers.
  Vec init;
};

// Fitted posterior geometry: the two optima and the local derivative
// information every approximation consumes.
struct PosteriorGeometry {
  Vec map_point;        // maximizer of loglik + logprior
  Vec mle;              // maximizer of loglik
  Mat obs_info_mle;     // -(d2 loglik) at the MLE
  Mat obs_info_map;     // -(d2 (loglik + logprior)) at the MAP
  Tensor3 third_at_map;      // full third-derivative tensor of the log-posterior at the MAP
  Tensor3 third_lik_at_mle;  // full third-derivative tensor of the log-likelihood at the MLE
  int n = 0;

  // The fitted model and data are kept so downstream methods can re-evaluate
  // the log-likelihood/log-prior (profile quantities, likelihood ratios).
  ModelSpec model;
  Dataset data;
};

// Result record shared by every BDM method. `delta` is always in [0, 1];
// raw out-of-range intermediate values live in `diagnostics` and set
// `clamped`. `tail_low` is P(theta <= theta0 | y) under the method whenever
// that scalar tail is well defined (NaN otherwise), and then
// delta == clamp01(1 - 2 min(tail_low, 1 - tail_low)) holds to 1e-12.
struct BdmResult {
  double delta = 0.0;
  std::string method;
  double tail_low = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, double> diagnostics;
  bool clamped = false;
};

namespace detail {

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

}  // namespace detail

// Fold a lower-tail probability into the discrepancy value
// 1 - 2 min(F, 1 - F), clamping to [0, 1] when the raw tail strays outside
// the unit interval (linearized tails may).
inline BdmResult fold_tail(std::string method, double tail_low) {
  BdmResult r;
  r.method = std::move(method);
  r.tail_low = tail_low;
  const double raw = 1.0 - 2.0 * std::min(tail_low, 1.0 - tail_low);
  r.delta = detail::clamp01(raw);
  if (r.delta != raw) {
    r.clamped = true;
    r.diagnostics["delta_raw"] = raw;
  }
  return r;
}

}  // namespace bdm
