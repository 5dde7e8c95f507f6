#include "nplcm/priors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "nplcm/error.hpp"

namespace nplcm {

double beta_cdf(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return boost::math::ibeta(a, b, x);
}

double beta_quantile(double a, double b, double p) { return boost::math::ibeta_inv(a, b, p); }

namespace {

constexpr double kLowP = 0.025;
constexpr double kUpP = 0.975;
constexpr double kQuantileTol = 1e-8;
constexpr double kAcceptTol = 1e-6;

struct Residual {
  double low = 0.0, up = 0.0;
  double norm() const { return std::hypot(low, up); }
};

Residual cdf_residual(const BetaRange& r, double la, double lb) {
  const double a = std::exp(la), b = std::exp(lb);
  return {beta_cdf(a, b, r.low) - kLowP, beta_cdf(a, b, r.up) - kUpP};
}

Residual quantile_residual(const BetaRange& r, double a, double b) {
  return {beta_quantile(a, b, kLowP) - r.low, beta_quantile(a, b, kUpP) - r.up};
}

bool converged(const BetaRange& r, double a, double b) {
  const auto q = quantile_residual(r, a, b);
  return std::abs(q.low) < kQuantileTol && std::abs(q.up) < kQuantileTol;
}

bool newton(const BetaRange& r, double& la, double& lb) {
  constexpr double h = 1e-6;
  for (int it = 0; it < 200; ++it) {
    if (converged(r, std::exp(la), std::exp(lb))) return true;
    const Residual f = cdf_residual(r, la, lb);
    const Residual fa1 = cdf_residual(r, la + h, lb), fa0 = cdf_residual(r, la - h, lb);
    const Residual fb1 = cdf_residual(r, la, lb + h), fb0 = cdf_residual(r, la, lb - h);
    const double j11 = (fa1.low - fa0.low) / (2 * h), j12 = (fb1.low - fb0.low) / (2 * h);
    const double j21 = (fa1.up - fa0.up) / (2 * h), j22 = (fb1.up - fb0.up) / (2 * h);
    const double det = j11 * j22 - j12 * j21;
    if (!std::isfinite(det) || std::abs(det) < 1e-300) return false;
    double da = -(j22 * f.low - j12 * f.up) / det;
    double db = -(-j21 * f.low + j11 * f.up) / det;
    const double biggest = std::max(std::abs(da), std::abs(db));
    if (biggest > 2.0) {
      da *= 2.0 / biggest;
      db *= 2.0 / biggest;
    }
    double step = 1.0;
    const double f0 = f.norm();
    bool moved = false;
    for (int half = 0; half < 40; ++half, step *= 0.5) {
      const double na = la + step * da, nb = lb + step * db;
      if (cdf_residual(r, na, nb).norm() < f0) {
        la = na;
        lb = nb;
        moved = true;
        break;
      }
    }
    if (!moved) return converged(r, std::exp(la), std::exp(lb));
  }
  return converged(r, std::exp(la), std::exp(lb));
}

// I_low(a, b) is decreasing in a: bisection on log a for the lower condition.
double solve_a_for_low(const BetaRange& r, double lb) {
  double lo = -12.0, hi = 12.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf_residual(r, mid, lb).low > 0) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

bool nested_bisection(const BetaRange& r, double& la, double& lb) {
  auto upper_gap = [&](double b) { return cdf_residual(r, solve_a_for_low(r, b), b).up; };
  double lo = -10.0, hi = 10.0;
  double glo = upper_gap(lo), ghi = upper_gap(hi);
  if (std::signbit(glo) == std::signbit(ghi)) return false;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = upper_gap(mid);
    if (std::signbit(g) == std::signbit(glo)) {
      lo = mid;
      glo = g;
    } else {
      hi = mid;
    }
  }
  lb = 0.5 * (lo + hi);
  la = solve_a_for_low(r, lb);
  return true;
}

}  // namespace

BetaPair beta_from_range(const BetaRange& r) {
  if (!(r.low > 0.0 && r.low < r.up && r.up < 1.0))
    throw ValidationError("Beta range must satisfy 0 < low < up < 1 (got " + std::to_string(r.low) + ", " +
                          std::to_string(r.up) + ")");
  const double m = 0.5 * (r.low + r.up);
  const double sd = (r.up - r.low) / 3.92;
  double conc = m * (1.0 - m) / (sd * sd) - 1.0;
  if (!(conc > 0.0)) conc = 2.0;
  double la = std::log(m * conc), lb = std::log((1.0 - m) * conc);

  if (!newton(r, la, lb)) {
    double fa = la, fb = lb;
    if (nested_bisection(r, fa, fb)) {
      la = fa;
      lb = fb;
      newton(r, la, lb);  // polish
    }
  }
  const BetaPair out{std::exp(la), std::exp(lb)};
  const auto q = quantile_residual(r, out.a, out.b);
  if (!(std::abs(q.low) < kAcceptTol && std::abs(q.up) < kAcceptTol))
    throw ConvergenceError("beta_from_range(" + std::to_string(r.low) + ", " + std::to_string(r.up) +
                           ") did not converge: quantile residuals " + std::to_string(q.low) + ", " +
                           std::to_string(q.up));
  return out;
}

Eigen::VectorXd stick_weights(std::span<const double> v) {
  const auto K = static_cast<Eigen::Index>(v.size()) + 1;
  Eigen::VectorXd w(K);
  double remaining = 1.0;
  for (Eigen::Index k = 0; k + 1 < K; ++k) {
    w(k) = v[static_cast<std::size_t>(k)] * remaining;
    remaining *= 1.0 - v[static_cast<std::size_t>(k)];
  }
  w(K - 1) = remaining;
  return w;
}

Eigen::VectorXd sample_coefficients(const DesignMatrix& design, std::span<const double> tau, double sd,
                                    Rng& rng) {
  Eigen::VectorXd c(design.cols());
  std::size_t spline = 0;
  for (const auto& b : design.blocks) {
    if (b.kind == DesignBlock::Kind::Spline) {
      const double step_sd = 1.0 / std::sqrt(tau[spline++]);
      c(b.begin) = sd * rng.normal();
      for (Eigen::Index m = 1; m < b.size; ++m) c(b.begin + m) = c(b.begin + m - 1) + step_sd * rng.normal();
    } else {
      for (Eigen::Index m = 0; m < b.size; ++m) c(b.begin + m) = sd * rng.normal();
    }
  }
  return c;
}

namespace {

void sample_coef_rows(const DesignMatrix& design, const CoefficientPrior& prior, Eigen::Index rows,
                      Eigen::MatrixXd& coef, Eigen::MatrixXd& tau, Rng& rng) {
  const auto n_spline = static_cast<Eigen::Index>(design.spline_blocks().size());
  coef.resize(rows, design.cols());
  tau.resize(rows, n_spline);
  for (Eigen::Index r = 0; r < rows; ++r) {
    std::vector<double> t(static_cast<std::size_t>(n_spline));
    for (auto& v : t) v = rng.gamma(prior.tau_shape, prior.tau_rate);
    for (Eigen::Index b = 0; b < n_spline; ++b) tau(r, b) = t[static_cast<std::size_t>(b)];
    coef.row(r) = sample_coefficients(design, t, prior.coef_sd, rng).transpose();
  }
}

}  // namespace

ParameterState sample_prior_state(const CompiledModel& model, Rng& rng) {
  ParameterState st;
  const int L = model.num_classes;
  if (model.eti_regression) {
    sample_coef_rows(model.eti_design, model.coef_prior, L, st.eti_coef, st.eti_tau, rng);
  } else {
    st.pi = rng.dirichlet(Eigen::Map<const Eigen::VectorXd>(model.eti_dirichlet.data(), L));
  }

  for (const auto& sm : model.brs) {
    const auto J = static_cast<Eigen::Index>(sm.num_items());
    BrsRates r{Eigen::MatrixXd(J, sm.k), Eigen::MatrixXd(J, sm.k)};
    for (Eigen::Index j = 0; j < J; ++j)
      for (int k = 0; k < sm.k; ++k) {
        const auto& tp = sm.tpr_prior[static_cast<std::size_t>(j)];
        const auto& fp = sm.fpr_prior[static_cast<std::size_t>(j)];
        r.theta(j, k) = rng.beta(tp.a, tp.b);
        r.psi(j, k) = rng.beta(fp.a, fp.b);
      }
    st.rates.brs.push_back(std::move(r));

    StickState sticks;
    const int K1 = sm.k - 1;
    if (sm.regression) {
      sticks.mu.resize(K1);
      for (int k = 0; k < K1; ++k) sticks.mu(k) = model.coef_prior.intercept_sd * rng.normal();
      sample_coef_rows(sm.fpr_design, model.coef_prior, K1, sticks.coef_case, sticks.tau_case, rng);
      sample_coef_rows(sm.fpr_design, model.coef_prior, K1, sticks.coef_control, sticks.tau_control, rng);
    } else {
      const auto& h = model.spec.stick_hyper;
      sticks.alpha_case = rng.gamma(h.shape, h.rate);
      sticks.alpha_control = rng.gamma(h.shape, h.rate);
      sticks.v_case.resize(K1);
      sticks.v_control.resize(K1);
      for (int k = 0; k < K1; ++k) {
        sticks.v_case(k) = rng.beta(1.0, sticks.alpha_case);
        sticks.v_control(k) = rng.beta(1.0, sticks.alpha_control);
      }
    }
    st.sticks.push_back(std::move(sticks));
  }

  for (const auto& sm : model.ss) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(sm.tpr_prior.size()));
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const auto& p = sm.tpr_prior[static_cast<std::size_t>(j)];
      t(j) = rng.beta(p.a, p.b);
    }
    st.rates.ss.push_back(std::move(t));
  }

  const auto N = model.data.num_subjects();
  st.cls.assign(N, 0);
  st.z.assign(model.brs.size(), std::vector<int>(N, 0));
  for (std::size_t i = 0; i < N; ++i) {
    if (model.is_case(i)) {
      const Eigen::VectorXd pi = class_weights(model, st, i);
      st.cls[i] = 1 + rng.categorical(std::span<const double>(pi.data(), static_cast<std::size_t>(pi.size())));
    }
    for (std::size_t s = 0; s < model.brs.size(); ++s) {
      const Eigen::VectorXd w = subclass_weights_for(model, st, s, i);
      st.z[s][i] = rng.categorical(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
    }
  }
  return st;
}

}  // namespace nplcm
