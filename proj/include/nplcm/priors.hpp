#pragma once

// Prior constructors and samplers.

#include <span>

#include <Eigen/Dense>

#include "nplcm/core.hpp"
#include "nplcm/model.hpp"
#include "nplcm/random.hpp"

namespace nplcm {

/// Regularized incomplete beta I_x(a, b).
double beta_cdf(double a, double b, double x);
double beta_quantile(double a, double b, double p);

/// Beta(a, b) whose 2.5% and 97.5% quantiles equal (low, up).
///
/// Damped Newton on (log a, log b) against the two CDF conditions, stopping
/// once both quantile residuals fall below 1e-8. If Newton stalls, a nested
/// bisection (inner: a for the lower quantile, outer: b for the upper) takes
/// over. Throws ConvergenceError, with residuals, if neither reaches 1e-6.
BetaPair beta_from_range(const BetaRange& r);

/// w_k = v_k prod_{s<k}(1 - v_s) for k < K, w_K = prod_{s<K}(1 - v_s).
Eigen::VectorXd stick_weights(std::span<const double> v);

/// One joint draw of every parameter and latent variable from the prior.
ParameterState sample_prior_state(const CompiledModel& model, Rng& rng);

/// Draws a coefficient vector from its prior given spline precisions `tau`.
Eigen::VectorXd sample_coefficients(const DesignMatrix& design, std::span<const double> tau,
                                    double sd, Rng& rng);

}  // namespace nplcm
