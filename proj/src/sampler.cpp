#include "nplcm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include "nplcm/error.hpp"
#include "nplcm/io.hpp"
#include "nplcm/likelihood.hpp"
#include "nplcm/ppc_stats.hpp"
#include "nplcm/priors.hpp"
#include "nplcm/stats.hpp"

namespace nplcm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kOverflow = 700.0;

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

std::vector<double> tau_row(const Eigen::MatrixXd& tau, Eigen::Index r) {
  std::vector<double> out(static_cast<std::size_t>(tau.cols()));
  for (Eigen::Index b = 0; b < tau.cols(); ++b) out[static_cast<std::size_t>(b)] = tau(r, b);
  return out;
}

std::string idx(std::initializer_list<std::size_t> ids) {
  std::string s;
  for (auto v : ids) s += "[" + std::to_string(v) + "]";
  return s;
}

}  // namespace

ParameterState initial_state(const CompiledModel& model, Rng& rng) {
  ParameterState st;
  const int L = model.num_classes;
  if (model.eti_regression) {
    const auto P = model.eti_design.cols();
    const auto B = static_cast<Eigen::Index>(model.eti_design.spline_blocks().size());
    st.eti_coef = Eigen::MatrixXd::Zero(L, P);
    st.eti_tau = Eigen::MatrixXd::Constant(L, B, model.coef_prior.tau_shape / model.coef_prior.tau_rate);
  } else {
    const Eigen::Map<const Eigen::VectorXd> a(model.eti_dirichlet.data(), L);
    st.pi = a / a.sum();
  }

  for (const auto& sm : model.brs) {
    const auto J = static_cast<Eigen::Index>(sm.num_items());
    BrsRates r{Eigen::MatrixXd(J, sm.k), Eigen::MatrixXd(J, sm.k)};
    for (Eigen::Index j = 0; j < J; ++j) {
      const auto& tp = sm.tpr_prior[static_cast<std::size_t>(j)];
      const auto& fp = sm.fpr_prior[static_cast<std::size_t>(j)];
      r.theta.row(j).setConstant(tp.a / (tp.a + tp.b));
      r.psi.row(j).setConstant(fp.a / (fp.a + fp.b));
    }
    st.rates.brs.push_back(std::move(r));

    StickState sticks;
    const int K1 = sm.k - 1;
    if (sm.regression) {
      const auto P = sm.fpr_design.cols();
      const auto B = static_cast<Eigen::Index>(sm.fpr_design.spline_blocks().size());
      const double t0 = model.coef_prior.tau_shape / model.coef_prior.tau_rate;
      sticks.mu = Eigen::VectorXd::Zero(K1);
      sticks.coef_case = Eigen::MatrixXd::Zero(K1, P);
      sticks.coef_control = Eigen::MatrixXd::Zero(K1, P);
      sticks.tau_case = Eigen::MatrixXd::Constant(K1, B, t0);
      sticks.tau_control = Eigen::MatrixXd::Constant(K1, B, t0);
    } else {
      const auto& h = model.spec.stick_hyper;
      sticks.alpha_case = sticks.alpha_control = h.shape / h.rate;
      sticks.v_case = Eigen::VectorXd::Constant(K1, 1.0 / (1.0 + sticks.alpha_case));
      sticks.v_control = Eigen::VectorXd::Constant(K1, 1.0 / (1.0 + sticks.alpha_control));
    }
    st.sticks.push_back(std::move(sticks));
  }

  for (const auto& sm : model.ss) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(sm.tpr_prior.size()));
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const auto& p = sm.tpr_prior[static_cast<std::size_t>(j)];
      t(j) = p.a / (p.a + p.b);
    }
    st.rates.ss.push_back(std::move(t));
  }

  const auto N = model.data.num_subjects();
  st.cls.assign(N, 0);
  st.z.assign(model.brs.size(), std::vector<int>(N, 0));
  for (std::size_t i : model.cases) {
    std::vector<int> ok;
    for (int l = 1; l <= L; ++l)
      if (ss_loglik(model, st.rates, i, l) != kNegInf) ok.push_back(l);
    if (ok.empty())
      st.cls[i] = 1 + static_cast<int>(rng.uniform() * L);
    else
      st.cls[i] = ok[static_cast<std::size_t>(rng.uniform() * static_cast<double>(ok.size()))];
  }
  for (std::size_t s = 0; s < model.brs.size(); ++s)
    for (std::size_t i = 0; i < N; ++i) st.z[s][i] = static_cast<int>(rng.uniform() * model.brs[s].k);
  return st;
}

std::vector<double> class_log_weights(const CompiledModel& model, const ParameterState& state, std::size_t i) {
  const Eigen::VectorXd pi = class_weights(model, state, i);
  std::vector<double> lw(static_cast<std::size_t>(model.num_classes));
  for (int l = 1; l <= model.num_classes; ++l) {
    double t = pi(l - 1) > 0.0 ? std::log(pi(l - 1)) : kNegInf;
    if (t != kNegInf) t += ss_loglik(model, state.rates, i, l);
    if (t != kNegInf)
      for (std::size_t s = 0; s < model.brs.size(); ++s)
        t += slice_loglik(model, state.rates, s, i, l, state.z[s][i]);
    lw[static_cast<std::size_t>(l - 1)] = t;
  }
  return lw;
}

int update_class(const CompiledModel& model, ParameterState& state, std::size_t i, Rng& rng) {
  if (!model.is_case(i)) throw Error("update_class called on a control");
  const int pick = rng.categorical_log(class_log_weights(model, state, i));
  if (pick < 0)
    throw DataInconsistency("subject " + std::to_string(i + 1) + " has zero likelihood under every class");
  state.cls[i] = pick + 1;
  return state.cls[i];
}

std::vector<double> subclass_log_weights(const CompiledModel& model, const ParameterState& state, std::size_t s,
                                         std::size_t i) {
  const Eigen::VectorXd w = subclass_weights_for(model, state, s, i);
  std::vector<double> lw(static_cast<std::size_t>(model.brs[s].k));
  for (int k = 0; k < model.brs[s].k; ++k) {
    const double t = w(k) > 0.0 ? std::log(w(k)) : kNegInf;
    lw[static_cast<std::size_t>(k)] =
        t == kNegInf ? t : t + slice_loglik(model, state.rates, s, i, state.cls[i], k);
  }
  return lw;
}

int update_subclass(const CompiledModel& model, ParameterState& state, std::size_t s, std::size_t i, Rng& rng) {
  if (model.brs[s].k == 1) return state.z[s][i] = 0;
  const int pick = rng.categorical_log(subclass_log_weights(model, state, s, i));
  if (pick < 0) throw Error("subclass full conditional has no mass");
  return state.z[s][i] = pick;
}

void update_rates(const CompiledModel& model, ParameterState& state, Rng& rng) {
  const auto N = model.data.num_subjects();
  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    const auto& sm = model.brs[s];
    const auto& data = model.brs_data(s).data;
    const auto J = static_cast<Eigen::Index>(sm.num_items());
    Eigen::MatrixXd tp = Eigen::MatrixXd::Zero(J, sm.k), tn = tp, fp = tp, fn = tp;
    for (std::size_t i = 0; i < N; ++i) {
      const int k = state.z[s][i];
      const int cls = state.cls[i];
      for (std::size_t j = 0; j < sm.num_items(); ++j) {
        const Response r = data(i, j);
        if (r == Response::Missing) continue;
        const auto jj = static_cast<Eigen::Index>(j);
        const bool pos = r == Response::Positive;
        if (sm.tpl.causative(cls, j))
          (pos ? tp : tn)(jj, k) += 1.0;
        else
          (pos ? fp : fn)(jj, k) += 1.0;
      }
    }
    auto& rates = state.rates.brs[s];
    for (Eigen::Index j = 0; j < J; ++j) {
      const auto& a = sm.tpr_prior[static_cast<std::size_t>(j)];
      const auto& b = sm.fpr_prior[static_cast<std::size_t>(j)];
      for (int k = 0; k < sm.k; ++k) {
        rates.theta(j, k) = rng.beta(a.a + tp(j, k), a.b + tn(j, k));
        rates.psi(j, k) = rng.beta(b.a + fp(j, k), b.b + fn(j, k));
      }
    }
  }

  for (std::size_t s = 0; s < model.ss.size(); ++s) {
    const auto& sm = model.ss[s];
    const auto& data = model.ss_data(s).data;
    for (std::size_t j = 0; j < sm.tpl.num_items(); ++j) {
      double pos = 0.0, neg = 0.0;
      for (std::size_t i : model.cases) {
        if (!sm.tpl.causative(state.cls[i], j)) continue;
        const Response r = data(i, j);
        if (r == Response::Positive) pos += 1.0;
        else if (r == Response::Negative) neg += 1.0;
      }
      const auto& p = sm.tpr_prior[j];
      state.rates.ss[s](static_cast<Eigen::Index>(j)) = rng.beta(p.a + pos, p.b + neg);
    }
  }
}

namespace {

// V_k | z ~ Beta(1 + n_k, alpha + n_{>k}), then alpha | V ~ Gamma.
void update_sticks(const std::vector<int>& z, const std::vector<std::size_t>& members, int K,
                   const StickHyper& h, Eigen::VectorXd& v, double& alpha, Rng& rng) {
  std::vector<double> n(static_cast<std::size_t>(K), 0.0);
  for (std::size_t i : members) n[static_cast<std::size_t>(z[i])] += 1.0;
  // log(1 - V) comes from the Gamma pair; V itself may round to 1.
  double above = 0.0, log_rest = 0.0;
  for (int k = K - 1; k >= 0; --k) {
    if (k < K - 1) {
      const auto [lv, l1mv] = rng.log_beta(1.0 + n[static_cast<std::size_t>(k)], alpha + above);
      v(k) = std::min(std::max(std::exp(lv), 1e-300), 1.0 - std::numeric_limits<double>::epsilon());
      log_rest += l1mv;
    }
    above += n[static_cast<std::size_t>(k)];
  }
  alpha = rng.gamma(h.shape + K - 1, h.rate - log_rest);
}

}  // namespace

void update_mixing_noreg(const CompiledModel& model, ParameterState& state, Rng& rng) {
  if (!model.eti_regression) {
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(model.eti_dirichlet.data(), model.num_classes);
    for (std::size_t i : model.cases) a(state.cls[i] - 1) += 1.0;
    state.pi = rng.dirichlet(a);
  }
  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    const auto& sm = model.brs[s];
    if (sm.k == 1 || sm.regression) continue;
    auto& st = state.sticks[s];
    update_sticks(state.z[s], model.cases, sm.k, model.spec.stick_hyper, st.v_case, st.alpha_case, rng);
    update_sticks(state.z[s], model.controls, sm.k, model.spec.stick_hyper, st.v_control, st.alpha_control, rng);
  }
}

void MetropolisTuner::record(Block& b, bool accepted, bool adapt) {
  ++b.proposed;
  if (accepted) ++b.accepted;
  if (!adapt) return;
  ++b.burnin_proposed;
  if (accepted) ++b.burnin_accepted;
  ++b.window_proposed;
  if (accepted) ++b.window_accepted;
  if (b.window_proposed == kWindow) {
    const double rate = static_cast<double>(b.window_accepted) / kWindow;
    if (rate < kLowTarget) b.scale *= 0.7;
    else if (rate > kHighTarget) b.scale *= 1.3;
    b.window_proposed = b.window_accepted = 0;
  }
}

void MetropolisTuner::end_burnin() {
  for (auto& [name, b] : blocks_) b.window_proposed = b.window_accepted = 0;
}

namespace {

constexpr double kInitialScale = 0.5;

MetropolisTuner::Block& tuned_block(MetropolisTuner& tuner, const std::string& name) {
  const bool fresh = tuner.blocks().find(name) == tuner.blocks().end();
  auto& b = tuner.block(name);
  if (fresh) b.scale = kInitialScale;
  return b;
}

// Random-walk Metropolis on one vector. `log_target` returns nullopt-like NaN
// for an overflowing proposal.
template <class Target>
void rw_metropolis(Eigen::Ref<Eigen::VectorXd> x, MetropolisTuner& tuner, const std::string& name, bool adapt,
                   Rng& rng, Target&& log_target) {
  auto& b = tuned_block(tuner, name);
  const double current = log_target(Eigen::VectorXd(x));
  Eigen::VectorXd prop = x;
  for (Eigen::Index m = 0; m < prop.size(); ++m) prop(m) += b.scale * rng.normal();
  const double proposed = log_target(prop);
  if (std::isnan(proposed)) {
    ++b.overflow;
    tuner.record(b, false, adapt);
    return;
  }
  const bool accept = proposed != kNegInf && std::log(rng.uniform()) < proposed - current;
  if (accept) x = prop;
  tuner.record(b, accept, adapt);
}

bool overflows(double a) { return !std::isfinite(a) || std::abs(a) > kOverflow; }

// log of stick k's contribution for subjects in `members`, with linear
// predictor `pred(i)`.
template <class Pred>
double stick_loglik(const std::vector<int>& z, const std::vector<std::size_t>& members, int k, Pred&& pred) {
  double ll = 0.0;
  for (std::size_t i : members) {
    if (z[i] < k) continue;
    const double a = pred(i);
    if (overflows(a)) return std::numeric_limits<double>::quiet_NaN();
    ll += z[i] == k ? log_logistic(a) : log1m_logistic(a);
  }
  return ll;
}

void update_tau_rows(const DesignMatrix& design, const Eigen::MatrixXd& coef, Eigen::MatrixXd& tau,
                     const CoefficientPrior& prior, Rng& rng) {
  const auto spline = design.spline_blocks();
  for (Eigen::Index r = 0; r < coef.rows(); ++r)
    for (std::size_t b = 0; b < spline.size(); ++b) {
      const auto& blk = design.blocks[spline[b]];
      const Eigen::VectorXd row = coef.row(r).transpose();
      tau(r, static_cast<Eigen::Index>(b)) =
          rng.gamma(prior.tau_shape + 0.5 * static_cast<double>(blk.size - 1),
                    prior.tau_rate + 0.5 * spline_roughness(row, blk));
    }
}

}  // namespace

void update_regression(const CompiledModel& model, ParameterState& state, MetropolisTuner& tuner, bool adapt,
                       Rng& rng) {
  const auto& prior = model.coef_prior;

  if (model.eti_regression) {
    const auto& X = model.eti_design.x;
    const int L = model.num_classes;
    for (int l = 0; l < L; ++l) {
      const std::vector<double> tau = tau_row(state.eti_tau, l);
      Eigen::VectorXd row = state.eti_coef.row(l).transpose();
      auto target = [&](const Eigen::VectorXd& c) {
        Eigen::MatrixXd coef = state.eti_coef;
        coef.row(l) = c.transpose();
        double ll = 0.0;
        for (std::size_t i : model.cases) {
          const Eigen::VectorXd phi = coef * X.row(static_cast<Eigen::Index>(i)).transpose();
          for (Eigen::Index m = 0; m < phi.size(); ++m)
            if (overflows(phi(m))) return std::numeric_limits<double>::quiet_NaN();
          std::vector<double> v(phi.data(), phi.data() + phi.size());
          ll += phi(state.cls[i] - 1) - log_sum_exp(v);
        }
        return ll + coefficient_log_prior(c, model.eti_design, tau, prior);
      };
      rw_metropolis(row, tuner, "etiCoef" + idx({static_cast<std::size_t>(l) + 1}), adapt, rng, target);
      state.eti_coef.row(l) = row.transpose();
    }
    update_tau_rows(model.eti_design, state.eti_coef, state.eti_tau, prior, rng);
  }

  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    const auto& sm = model.brs[s];
    if (!sm.regression) continue;
    auto& st = state.sticks[s];
    const auto& X = sm.fpr_design.x;
    const auto& z = state.z[s];
    const std::size_t s1 = s + 1;
    for (int k = 0; k < sm.k - 1; ++k) {
      const auto kk = static_cast<std::size_t>(k) + 1;
      const Eigen::VectorXd xb_case = X * st.coef_case.row(k).transpose();
      const Eigen::VectorXd xb_ctrl = X * st.coef_control.row(k).transpose();

      // shared intercept: both arms
      Eigen::VectorXd mu(1);
      mu(0) = st.mu(k);
      rw_metropolis(mu, tuner, "mu" + idx({s1, kk}), adapt, rng, [&](const Eigen::VectorXd& m) {
        const double a = stick_loglik(z, model.cases, k, [&](std::size_t i) {
          return m(0) + xb_case(static_cast<Eigen::Index>(i));
        });
        const double b = stick_loglik(z, model.controls, k, [&](std::size_t i) {
          return m(0) + xb_ctrl(static_cast<Eigen::Index>(i));
        });
        const double sd = prior.intercept_sd;
        return a + b - 0.5 * m(0) * m(0) / (sd * sd);
      });
      st.mu(k) = mu(0);

      auto arm = [&](Eigen::MatrixXd& coef, const Eigen::MatrixXd& tau_m, const std::vector<std::size_t>& members,
                     const std::string& name) {
        const std::vector<double> tau = tau_row(tau_m, k);
        Eigen::VectorXd row = coef.row(k).transpose();
        rw_metropolis(row, tuner, name + idx({s1, kk}), adapt, rng, [&](const Eigen::VectorXd& c) {
          const double ll = stick_loglik(z, members, k, [&](std::size_t i) {
            return st.mu(k) + X.row(static_cast<Eigen::Index>(i)).dot(c);
          });
          return ll + coefficient_log_prior(c, sm.fpr_design, tau, prior);
        });
        coef.row(k) = row.transpose();
      };
      arm(st.coef_case, st.tau_case, model.cases, "etaCoef");
      arm(st.coef_control, st.tau_control, model.controls, "nuCoef");
    }
    update_tau_rows(sm.fpr_design, st.coef_case, st.tau_case, prior, rng);
    update_tau_rows(sm.fpr_design, st.coef_control, st.tau_control, prior, rng);
  }
}

void sweep(const CompiledModel& model, ParameterState& state, MetropolisTuner& tuner, bool adapt, Rng& rng) {
  for (std::size_t i : model.cases) update_class(model, state, i, rng);
  for (std::size_t s = 0; s < model.brs.size(); ++s)
    for (std::size_t i = 0; i < model.data.num_subjects(); ++i) update_subclass(model, state, s, i, rng);
  update_rates(model, state, rng);
  update_mixing_noreg(model, state, rng);
  update_regression(model, state, tuner, adapt, rng);
}

std::vector<std::string> parameter_names(const CompiledModel& model) {
  std::vector<std::string> names;
  const auto L = static_cast<std::size_t>(model.num_classes);
  if (model.eti_regression) {
    const auto P = static_cast<std::size_t>(model.eti_design.cols());
    const auto B = model.eti_design.spline_blocks().size();
    for (std::size_t l = 1; l <= L; ++l)
      for (std::size_t p = 1; p <= P; ++p) names.push_back("etiCoef" + idx({l, p}));
    for (std::size_t l = 1; l <= L; ++l)
      for (std::size_t b = 1; b <= B; ++b) names.push_back("etiTau" + idx({l, b}));
  } else {
    for (std::size_t l = 1; l <= L; ++l) names.push_back("pEti" + idx({l}));
  }

  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    const auto& sm = model.brs[s];
    const std::size_t s1 = s + 1;
    const auto K = static_cast<std::size_t>(sm.k);
    for (std::size_t j = 1; j <= sm.num_items(); ++j)
      for (std::size_t k = 1; k <= K; ++k) names.push_back("thetaBS" + idx({s1, j, k}));
    for (std::size_t j = 1; j <= sm.num_items(); ++j)
      for (std::size_t k = 1; k <= K; ++k) names.push_back("psiBS" + idx({s1, j, k}));
    if (K == 1) continue;
    if (!sm.regression) {
      for (std::size_t k = 1; k <= K; ++k) names.push_back("Eta" + idx({s1, k}));
      for (std::size_t k = 1; k <= K; ++k) names.push_back("Lambda" + idx({s1, k}));
      names.push_back("alphaCase" + idx({s1}));
      names.push_back("alphaCtrl" + idx({s1}));
    } else {
      const auto P = static_cast<std::size_t>(sm.fpr_design.cols());
      const auto B = sm.fpr_design.spline_blocks().size();
      for (std::size_t k = 1; k < K; ++k) names.push_back("mu" + idx({s1, k}));
      for (const char* arm : {"etaCoef", "nuCoef"})
        for (std::size_t k = 1; k < K; ++k)
          for (std::size_t p = 1; p <= P; ++p) names.push_back(arm + idx({s1, k, p}));
      for (const char* arm : {"etaTau", "nuTau"})
        for (std::size_t k = 1; k < K; ++k)
          for (std::size_t b = 1; b <= B; ++b) names.push_back(arm + idx({s1, k, b}));
    }
  }

  for (std::size_t s = 0; s < model.ss.size(); ++s)
    for (std::size_t j = 1; j <= model.ss[s].tpl.num_items(); ++j) names.push_back("thetaSS" + idx({s + 1, j}));
  return names;
}

Eigen::VectorXd flatten(const CompiledModel& model, const ParameterState& state) {
  std::vector<double> v;
  auto push_rows = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  };
  if (model.eti_regression) {
    push_rows(state.eti_coef);
    push_rows(state.eti_tau);
  } else {
    for (Eigen::Index l = 0; l < state.pi.size(); ++l) v.push_back(state.pi(l));
  }
  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    const auto& sm = model.brs[s];
    push_rows(state.rates.brs[s].theta);
    push_rows(state.rates.brs[s].psi);
    if (sm.k == 1) continue;
    const auto& st = state.sticks[s];
    if (!sm.regression) {
      for (const auto* vv : {&st.v_case, &st.v_control}) {
        const Eigen::VectorXd w = stick_weights(as_span(*vv));
        for (Eigen::Index k = 0; k < w.size(); ++k) v.push_back(w(k));
      }
      v.push_back(st.alpha_case);
      v.push_back(st.alpha_control);
    } else {
      for (Eigen::Index k = 0; k < st.mu.size(); ++k) v.push_back(st.mu(k));
      push_rows(st.coef_case);
      push_rows(st.coef_control);
      push_rows(st.tau_case);
      push_rows(st.tau_control);
    }
  }
  for (const auto& t : state.rates.ss)
    for (Eigen::Index j = 0; j < t.size(); ++j) v.push_back(t(j));
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<ResponseMatrix> replicate_brs(const CompiledModel& model, const ParameterState& state, Rng& rng) {
  const auto N = model.data.num_subjects();
  std::vector<int> cls(N, 0);
  for (std::size_t i : model.cases) {
    const Eigen::VectorXd pi = class_weights(model, state, i);
    cls[i] = 1 + rng.categorical(as_span(pi));
  }
  std::vector<ResponseMatrix> out;
  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    const auto& sm = model.brs[s];
    const auto& observed = model.brs_data(s).data;
    ResponseMatrix rep(N, sm.num_items(), Response::Missing);
    for (std::size_t i = 0; i < N; ++i) {
      const Eigen::VectorXd w = subclass_weights_for(model, state, s, i);
      const int k = rng.categorical(as_span(w));
      for (std::size_t j = 0; j < sm.num_items(); ++j) {
        if (observed(i, j) == Response::Missing) continue;
        const double p = response_prob_brs(model, state.rates, s, j, k, cls[i]);
        rep(i, j) = rng.bernoulli(p) ? Response::Positive : Response::Negative;
      }
    }
    out.push_back(std::move(rep));
  }
  return out;
}

namespace {

void record_ppd(const CompiledModel& model, const std::vector<ResponseMatrix>& rep, Eigen::Index row,
                std::vector<SlicePpd>& ppd) {
  const std::vector<std::size_t>* groups[2] = {&model.controls, &model.cases};
  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    auto& sp = ppd[s];
    for (int g = 0; g < 2; ++g) {
      for (std::size_t p = 0; p < sp.pairs.size(); ++p) {
        const auto t = pair_table(rep[s], *groups[g], sp.pairs[p].first, sp.pairs[p].second);
        const auto lor = log_odds_ratio(t);
        sp.lor[g](row, static_cast<Eigen::Index>(p)) = lor ? *lor : std::numeric_limits<double>::quiet_NaN();
      }
      std::map<std::string, int> counts;
      for (std::size_t i : *groups[g])
        if (auto key = pattern_key(rep[s], i)) ++counts[*key];
      sp.patterns[g].push_back(std::move(counts));
    }
  }
}

}  // namespace

ChainOutput run_chain(const CompiledModel& model, const McmcSettings& mcmc, int chain,
                      const std::string& samples_path) {
  mcmc.check();
  ChainOutput out;
  out.seed = mcmc.seed + static_cast<std::uint64_t>(chain);
  out.spec_hash = spec_hash(model.spec);
  out.names = parameter_names(model);
  const int R = mcmc.retained();
  out.draws.resize(R, static_cast<Eigen::Index>(out.names.size()));

  if (mcmc.ppd) {
    for (std::size_t s = 0; s < model.brs.size(); ++s) {
      SlicePpd sp;
      sp.slice = model.brs_data(s).name;
      sp.pairs = item_pairs(model.brs[s].num_items());
      for (auto& m : sp.lor) m.resize(R, static_cast<Eigen::Index>(sp.pairs.size()));
      out.ppd.push_back(std::move(sp));
    }
  }

  std::ofstream samples;
  auto fail_io = [&] {
    std::ofstream(samples_path + ".partial") << "chain " << chain << " aborted: write failure\n";
    throw Error("write failure on " + samples_path);
  };
  if (!samples_path.empty()) {
    samples.open(samples_path);
    if (!samples) fail_io();
    samples << "iter";
    for (const auto& n : out.names) samples << ',' << n;
    samples << '\n';
  }

  Rng rng(out.seed);
  ParameterState state = initial_state(model, rng);
  MetropolisTuner tuner;
  Eigen::Index row = 0;
  char buf[64];
  for (int t = 1; t <= mcmc.n_iter; ++t) {
    const bool adapt = t <= mcmc.n_burnin;
    sweep(model, state, tuner, adapt, rng);
    if (t == mcmc.n_burnin) tuner.end_burnin();
    if (!mcmc.keeps(t) || row >= R) continue;

    const Eigen::VectorXd v = flatten(model, state);
    out.draws.row(row) = v.transpose();
    out.iterations.push_back(t);
    if (samples.is_open()) {
      samples << t;
      for (Eigen::Index c = 0; c < v.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", v(c));
        samples << ',' << buf;
      }
      samples << '\n';
      if (!samples) fail_io();
    }
    if (mcmc.individual_pred) {
      std::vector<int> cls;
      cls.reserve(model.cases.size());
      for (std::size_t i : model.cases) cls.push_back(state.cls[i]);
      out.class_draws.push_back(std::move(cls));
    }
    if (mcmc.ppd) record_ppd(model, replicate_brs(model, state, rng), row, out.ppd);
    ++row;
  }
  if (samples.is_open()) {
    samples.close();
    if (!samples) fail_io();
  }

  for (const auto& [name, b] : tuner.blocks()) {
    out.acceptance.push_back({name, "burnin", b.burnin_proposed, b.burnin_accepted, 0, b.scale});
    out.acceptance.push_back({name, "sampling", b.proposed - b.burnin_proposed, b.accepted - b.burnin_accepted,
                              b.overflow, b.scale});
  }
  return out;
}

PosteriorRun run(const Dataset& data, const ModelSpec& spec, const McmcSettings& mcmc) {
  mcmc.check();
  const CompiledModel model = compile_model(data, spec);

  PosteriorRun result;
  result.spec = spec;
  result.mcmc = mcmc;
  result.data = data;
  result.report = model.report;
  result.non_identified = non_identified_prefixes(model);

  const std::filesystem::path dir = mcmc.out_dir;
  if (!mcmc.out_dir.empty()) write_run_inputs(dir, data, spec, mcmc);

  result.chains.resize(static_cast<std::size_t>(mcmc.n_chains));
  std::vector<std::exception_ptr> errors(result.chains.size());
  std::vector<std::thread> threads;
  for (int c = 0; c < mcmc.n_chains; ++c) {
    threads.emplace_back([&, c] {
      try {
        const std::string path = mcmc.out_dir.empty() ? std::string() : (dir / samples_file(c)).string();
        result.chains[static_cast<std::size_t>(c)] = run_chain(model, mcmc, c, path);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (!e) continue;
    if (!mcmc.out_dir.empty()) write_manifest(dir, result, "failed");
    std::rethrow_exception(e);
  }

  if (!mcmc.out_dir.empty()) {
    for (int c = 0; c < mcmc.n_chains; ++c) write_chain_outputs(dir, c, model, result.chains[static_cast<std::size_t>(c)]);
    write_manifest(dir, result, "complete");
  }
  return result;
}

std::vector<std::string> non_identified_prefixes(const CompiledModel& model) {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    if (model.brs[s].k == 1) continue;
    const std::string s1 = idx({s + 1});
    for (const char* p : {"thetaBS", "psiBS", "Eta", "Lambda", "mu", "etaCoef", "nuCoef", "etaTau", "nuTau"})
      out.push_back(std::string(p) + s1);
  }
  return out;
}

}  // namespace nplcm
