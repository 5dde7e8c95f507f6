// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Config documents are read from NPLCM_CONFIG_DIR.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "nplcm/error.hpp"
#include "nplcm/io.hpp"
#include "nplcm/likelihood.hpp"
#include "nplcm/model.hpp"
#include "nplcm/posterior.hpp"
#include "nplcm/priors.hpp"
#include "nplcm/random.hpp"
#include "nplcm/regression.hpp"
#include "nplcm/sampler.hpp"
#include "nplcm/stats.hpp"

using namespace nplcm;
using namespace fixtures;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = NPLCM_CONFIG_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared by criteria 1, 7 and 8.
struct NoRegFit {
  Simulation sim;
  PosteriorRun run;
  double seconds = 0.0;
};

const NoRegFit& noreg_fit() {
  static const NoRegFit fit = [] {
    NoRegFit f;
    f.sim = simulate(recipe_from_json(read_json(kConfigs / "noreg_recipe.json")));
    const auto spec = model_from_json(read_json(kConfigs / "noreg_model.json"));
    const auto mcmc = mcmc_from_json(read_json(kConfigs / "mcmc.json"));
    const auto t0 = std::chrono::steady_clock::now();
    f.run = run(f.sim.data, spec, mcmc);
    f.seconds = seconds_since(t0);
    return f;
  }();
  return fit;
}

// ---------------------------------------------------------------------------

Outcome no_regression_recovery() {
  const auto& fit = noreg_fit();
  const auto recipe = recipe_from_json(read_json(kConfigs / "noreg_recipe.json"));
  const auto s = summarize_cscf(fit.run);
  Outcome o;
  int covered = 0;
  double worst = 0.0;
  std::ostringstream means;
  for (std::size_t l = 0; l < s.overall.rows.size(); ++l) {
    const auto& r = s.overall.rows[l];
    const double truth = recipe.etiology[l];
    worst = std::max(worst, std::abs(r.mean - truth));
    covered += r.q025 <= truth && truth <= r.q975;
    means << (l ? " " : "") << r.label << "=" << fmt("%.3f", r.mean);
  }
  o.pass = worst <= 0.10 && covered >= 5 && fit.seconds < 600.0;
  o.detail = means.str() + "; max |mean-truth| " + fmt("%.3f", worst) + ", CrI covers " + std::to_string(covered) +
             "/6, " + fmt("%.1f", fit.seconds) + " s";
  return o;
}

Outcome stratified_recovery() {
  const auto recipe = recipe_from_json(read_json(kConfigs / "two_site_recipe.json"));
  const auto sim = simulate(recipe);
  const auto spec = model_from_json(read_json(kConfigs / "reg_strat_model.json"));
  const auto mcmc = mcmc_from_json(read_json(kConfigs / "mcmc.json"));
  const auto fitted = run(sim.data, spec, mcmc);
  const auto s = summarize_cscf(fitted, std::vector<double>{0.5, 0.5});

  Outcome o;
  if (s.strata.size() != 2) return {false, "expected 2 strata, got " + std::to_string(s.strata.size())};
  double worst = 0.0;
  std::ostringstream d;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& t = s.strata[k];
    const auto& truth = recipe.strata[k].etiology;
    if (t.stratum != "SITE=" + recipe.strata[k].label) o.pass = false;
    for (std::size_t l = 0; l < truth.size(); ++l) worst = std::max(worst, std::abs(t.rows[l].mean - truth[l]));
    const bool ordered = k == 0 ? t.rows[0].mean > t.rows[1].mean : t.rows[1].mean > t.rows[0].mean;
    o.pass = o.pass && ordered;
    d << t.stratum << " A=" << fmt("%.3f", t.rows[0].mean) << " B=" << fmt("%.3f", t.rows[1].mean) << "; ";
  }
  double worst_marg = 0.0;
  for (std::size_t l = 0; l < 6; ++l) {
    const double avg = 0.5 * (recipe.strata[0].etiology[l] + recipe.strata[1].etiology[l]);
    worst_marg = std::max(worst_marg, std::abs(s.overall.rows[l].mean - avg));
  }
  o.pass = o.pass && worst <= 0.12 && worst_marg <= 0.10;
  d << "max stratum error " << fmt("%.3f", worst) << ", max marginal error " << fmt("%.3f", worst_marg);
  o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------------------

struct RandomInstance {
  CompiledModel model;
  MeasurementParams params;
  MixingWeights weights;
};

std::vector<std::string> random_causes(Rng& rng, const std::vector<std::string>& items, int L) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < L) {
    const double u = rng.uniform();
    std::string c;
    const auto pick = [&] { return items[static_cast<std::size_t>(rng.uniform() * items.size())]; };
    if (u < 0.6) c = pick();
    else if (u < 0.85 && items.size() > 1) {
      std::string a = pick(), b = pick();
      if (a == b) continue;
      if (b < a) std::swap(a, b);
      c = a + "+" + b;
    } else c = "NoS";
    if (seen.insert(c).second) out.push_back(c);
  }
  return out;
}

RandomInstance random_instance(Rng& rng) {
  const int J = 1 + static_cast<int>(rng.uniform() * 4);
  const int L = std::min(1 + static_cast<int>(rng.uniform() * 4), J + J * (J - 1) / 2 + 1);
  const int N = 2 + static_cast<int>(rng.uniform() * 19);
  const int n_brs = rng.uniform() < 0.3 ? 2 : 1;
  const bool with_ss = rng.uniform() < 0.5;
  const auto items = letters(static_cast<std::size_t>(J));

  ModelSpec spec;
  spec.cause_list = CauseList(random_causes(rng, items, L));
  spec.use_measurements = with_ss ? std::vector<Quality>{Quality::BrS, Quality::SS} : std::vector<Quality>{Quality::BrS};

  Dataset d;
  d.y.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) d.y[i] = i == 0 ? 1 : (rng.uniform() < 0.5);
  for (int s = 0; s < n_brs; ++s) {
    const std::string name = "MBS" + std::to_string(s + 1);
    ResponseMatrix m(static_cast<std::size_t>(N), static_cast<std::size_t>(J));
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < J; ++j)
        m(i, j) = rng.uniform() < 0.15 ? Response::Missing : (rng.bernoulli(0.4) ? Response::Positive : Response::Negative);
    d.mbs.push_back({name, Quality::BrS, items, m});
    spec.k_subclass[name] = 1 + static_cast<int>(rng.uniform() * 3);
  }
  if (with_ss) {
    std::vector<std::string> ss_items;
    for (const auto& it : items)
      if (rng.uniform() < 0.6) ss_items.push_back(it);
    if (ss_items.empty()) ss_items.push_back(items[0]);
    const Template ss_tpl = make_template(ss_items, spec.cause_list);
    ResponseMatrix m(static_cast<std::size_t>(N), ss_items.size());
    for (int i = 0; i < N; ++i) {
      if (!d.y[i]) continue;
      const int cls = 1 + static_cast<int>(rng.uniform() * L);  // SS positives only where this class explains them
      for (std::size_t j = 0; j < ss_items.size(); ++j)
        m(i, j) = rng.uniform() < 0.1 ? Response::Missing
                                      : (ss_tpl.causative(cls, j) && rng.bernoulli(0.5) ? Response::Positive : Response::Negative);
    }
    d.mss.push_back({"MSS1", Quality::SS, ss_items, m});
  }

  RandomInstance inst{compile_model(d, spec), {}, {}};
  const auto& model = inst.model;
  for (const auto& sm : model.brs) {
    BrsRates r{Eigen::MatrixXd(J, sm.k), Eigen::MatrixXd(J, sm.k)};
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < sm.k; ++k) {
        r.theta(j, k) = 0.02 + 0.96 * rng.uniform();
        r.psi(j, k) = 0.02 + 0.96 * rng.uniform();
      }
    inst.params.brs.push_back(r);
    const bool per_subject = rng.uniform() < 0.5;
    const Eigen::Index rows = per_subject ? N : 1;
    Eigen::MatrixXd eta(rows, sm.k), nu(rows, sm.k);
    for (Eigen::Index i = 0; i < rows; ++i) {
      eta.row(i) = rng.dirichlet(Eigen::VectorXd::Ones(sm.k)).transpose();
      nu.row(i) = rng.dirichlet(Eigen::VectorXd::Ones(sm.k)).transpose();
    }
    inst.weights.eta.push_back(eta);
    inst.weights.nu.push_back(nu);
  }
  for (const auto& sm : model.ss) {
    Eigen::VectorXd t(static_cast<Eigen::Index>(sm.tpl.num_items()));
    for (Eigen::Index j = 0; j < t.size(); ++j) t(j) = 0.02 + 0.96 * rng.uniform();
    inst.params.ss.push_back(t);
  }
  const Eigen::Index pi_rows = rng.uniform() < 0.5 ? N : 1;
  inst.weights.pi.resize(pi_rows, L);
  for (Eigen::Index i = 0; i < pi_rows; ++i) inst.weights.pi.row(i) = rng.dirichlet(Eigen::VectorXd::Ones(L)).transpose();
  return inst;
}

double bern_of(Response r, double p) {
  if (r == Response::Missing) return 1.0;
  return r == Response::Positive ? p : 1.0 - p;
}

// Enumerates every (class, subclass per slice) combination with plain products.
double enumerated_loglik(const RandomInstance& inst) {
  const auto& model = inst.model;
  const auto& d = model.data;
  const auto N = d.num_subjects();
  const int L = model.num_classes;
  const CauseList& causes = model.spec.cause_list;
  auto causative = [&](int cls, const std::string& item) {
    if (cls == 0) return false;
    const auto comp = causes.components(static_cast<std::size_t>(cls - 1));
    return std::find(comp.begin(), comp.end(), item) != comp.end();
  };
  auto row = [](const Eigen::MatrixXd& m, std::size_t i) { return m.rows() == 1 ? 0 : static_cast<Eigen::Index>(i); };

  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const bool is_case = d.y[i] == 1;
    double lik = 0.0;
    for (int cls = is_case ? 1 : 0; cls <= (is_case ? L : 0); ++cls) {
      double p = is_case ? inst.weights.pi(row(inst.weights.pi, i), cls - 1) : 1.0;
      if (is_case)
        for (std::size_t s = 0; s < d.mss.size(); ++s)
          for (std::size_t j = 0; j < d.mss[s].num_items(); ++j)
            p *= bern_of(d.mss[s].data(i, j), causative(cls, d.mss[s].items[j]) ? inst.params.ss[s](j) : 0.0);
      // joint subclass tuple over slices
      const std::size_t S = d.mbs.size();
      std::vector<int> ks(S, 0);
      double mix = 0.0;
      while (true) {
        double q = 1.0;
        for (std::size_t s = 0; s < S; ++s) {
          const auto& w = is_case ? inst.weights.eta[s] : inst.weights.nu[s];
          q *= w(row(w, i), ks[s]);
          for (std::size_t j = 0; j < d.mbs[s].num_items(); ++j) {
            const auto& r = inst.params.brs[s];
            q *= bern_of(d.mbs[s].data(i, j), causative(cls, d.mbs[s].items[j]) ? r.theta(j, ks[s]) : r.psi(j, ks[s]));
          }
        }
        mix += q;
        std::size_t s = 0;
        while (s < S && ++ks[s] == model.brs[s].k) ks[s++] = 0;
        if (s == S) break;
      }
      lik += p * mix;
    }
    total += std::log(lik);
  }
  return total;
}

Outcome oracle_equivalence() {
  Rng rng(31337);
  double worst = 0.0;
  int n = 0;
  for (; n < 100; ++n) {
    const auto inst = random_instance(rng);
    const double engine = marginal_loglik(inst.model, inst.params, inst.weights);
    const double oracle = enumerated_loglik(inst);
    worst = std::max(worst, std::abs(engine - oracle));
    if (!std::isfinite(engine)) worst = INFINITY;
  }
  return {worst <= 1e-10, std::to_string(n) + " random instances, max |engine - enumeration| " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------

struct ZCheck {
  std::string what;
  double z;
};

ZCheck zcheck(std::string what, const std::vector<double>& draws, double mean_exact, double sd_exact) {
  const double m = mean(draws);
  return {std::move(what), (m - mean_exact) / (sd_exact / std::sqrt(static_cast<double>(draws.size())))};
}

double beta_sd(double a, double b) { return std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1))); }

Outcome conjugate_exactness() {
  constexpr int kDraws = 10000;
  std::vector<ZCheck> checks;

  // K = 1 with fixed classes: Beta posteriors for every rate, Dirichlet for pi.
  {
    Dataset d;
    Rng gen(5);
    const int N = 40;
    d.y.resize(N);
    for (int i = 0; i < N; ++i) d.y[i] = i < 24;
    std::vector<std::vector<int>> brs_rows, ss_rows;
    for (int i = 0; i < N; ++i) {
      brs_rows.push_back({gen.bernoulli(0.5), gen.bernoulli(0.3), gen.uniform() < 0.2 ? -1 : gen.bernoulli(0.6)});
      ss_rows.push_back({i < 24 ? (i % 3 == 0 ? 1 : 0) : -1});
    }
    d.mbs.push_back(brs("MBS1", {"A", "B", "C"}, brs_rows));
    d.mss.push_back(ss("MSS1", {"A"}, ss_rows));
    ModelSpec spec;
    spec.use_measurements = {Quality::BrS, Quality::SS};
    spec.cause_list = CauseList({"A", "B", "C"});
    spec.eti_prior = {1.5, 2.0, 0.5};
    spec.tpr_prior["MBS1"] = std::vector<BetaPair>{{3, 1}, {2, 2}, {5, 2}};
    spec.tpr_prior["MSS1"] = std::vector<BetaPair>{{1, 4}};
    const auto model = compile_model(d, spec);
    Rng rng(11);
    auto st = initial_state(model, rng);
    for (int i = 0; i < 24; ++i) st.cls[i] = i % 3 == 0 ? 1 : 1 + i % 3;

    std::vector<std::vector<double>> th(3), ps(3), pi(3);
    std::vector<double> ss;
    for (int t = 0; t < kDraws; ++t) {
      update_rates(model, st, rng);
      update_mixing_noreg(model, st, rng);
      for (int j = 0; j < 3; ++j) {
        th[j].push_back(st.rates.brs[0].theta(j, 0));
        ps[j].push_back(st.rates.brs[0].psi(j, 0));
        pi[j].push_back(st.pi(j));
      }
      ss.push_back(st.rates.ss[0](0));
    }
    const BetaPair tpr[3] = {{3, 1}, {2, 2}, {5, 2}};
    for (int j = 0; j < 3; ++j) {
      double tp = 0, tn = 0, fp = 0, fn = 0;
      for (int i = 0; i < N; ++i) {
        const Response r = model.data.mbs[0].data(i, j);
        if (r == Response::Missing) continue;
        const bool pos = r == Response::Positive;
        if (st.cls[i] == j + 1) (pos ? tp : tn) += 1;
        else (pos ? fp : fn) += 1;
      }
      const double a = tpr[j].a + tp, b = tpr[j].b + tn;
      checks.push_back(zcheck("theta[" + std::to_string(j + 1) + "]", th[j], a / (a + b), beta_sd(a, b)));
      checks.push_back(zcheck("psi[" + std::to_string(j + 1) + "]", ps[j], (1 + fp) / (2 + fp + fn), beta_sd(1 + fp, 1 + fn)));
    }
    double sp = 0, sn = 0;
    std::vector<double> alpha(spec.eti_prior);
    for (int i = 0; i < 24; ++i) {
      alpha[st.cls[i] - 1] += 1;
      if (st.cls[i] == 1) (model.data.mss[0].data(i, 0) == Response::Positive ? sp : sn) += 1;
    }
    checks.push_back(zcheck("thetaSS", ss, (1 + sp) / (5 + sp + sn), beta_sd(1 + sp, 4 + sn)));
    const double a0 = alpha[0] + alpha[1] + alpha[2];
    for (int l = 0; l < 3; ++l)
      checks.push_back(zcheck("pi[" + std::to_string(l + 1) + "]", pi[l], alpha[l] / a0, beta_sd(alpha[l], a0 - alpha[l])));
  }

  // Sticks with fixed assignments (K = 3): Beta for V at fixed alpha, Gamma for alpha given V.
  {
    auto sim = simulate(six_cause_recipe(30, 30, 2));
    const auto model = compile_model(sim.data, six_cause_spec(3, false));
    Rng rng(12);
    auto st = initial_state(model, rng);
    for (std::size_t i = 0; i < model.data.num_subjects(); ++i) st.z[0][i] = static_cast<int>((i * 7) % 5 % 3);
    const double alpha_fixed = 0.8;
    const auto& h = model.spec.stick_hyper;
    std::vector<double> v[2][2], gamma_resid[2];
    double gamma_var[2] = {0, 0};
    for (int t = 0; t < kDraws; ++t) {
      st.sticks[0].alpha_case = st.sticks[0].alpha_control = alpha_fixed;
      update_mixing_noreg(model, st, rng);
      const Eigen::VectorXd* vs[2] = {&st.sticks[0].v_control, &st.sticks[0].v_case};
      const double al[2] = {st.sticks[0].alpha_control, st.sticks[0].alpha_case};
      for (int g = 0; g < 2; ++g) {
        for (int k = 0; k < 2; ++k) v[g][k].push_back((*vs[g])(k));
        const double rate = h.rate - std::log1p(-(*vs[g])(0)) - std::log1p(-(*vs[g])(1));
        const double shape = h.shape + 2;
        gamma_resid[g].push_back(al[g] - shape / rate);
        gamma_var[g] += shape / (rate * rate) / kDraws;
      }
    }
    for (int g = 0; g < 2; ++g) {
      const auto& members = g ? model.cases : model.controls;
      double n[3] = {0, 0, 0};
      for (std::size_t i : members) n[st.z[0][i]] += 1;
      const std::string arm = g ? "case" : "control";
      const double a0 = 1 + n[0], b0 = alpha_fixed + n[1] + n[2];
      const double a1 = 1 + n[1], b1 = alpha_fixed + n[2];
      checks.push_back(zcheck("V1 " + arm, v[g][0], a0 / (a0 + b0), beta_sd(a0, b0)));
      checks.push_back(zcheck("V2 " + arm, v[g][1], a1 / (a1 + b1), beta_sd(a1, b1)));
      checks.push_back(zcheck("alpha|V " + arm, gamma_resid[g], 0.0, std::sqrt(gamma_var[g])));
    }
  }

  ZCheck worst{"", 0.0};
  for (const auto& c : checks)
    if (std::abs(c.z) >= std::abs(worst.z)) worst = c;
  return {std::abs(worst.z) < 3.0, std::to_string(checks.size()) + " conjugate means at " + std::to_string(kDraws) +
                                       " draws, worst " + worst.what + " at " + fmt("%.2f", worst.z) + " SE"};
}

Outcome prior_elicitation() {
  double worst = 0.0;
  std::ostringstream d;
  for (auto [lo, up] : {std::pair{0.55, 0.99}, {0.05, 0.2}, {0.5, 0.9}}) {
    const BetaPair p = beta_from_range({lo, up});
    const double r = std::max(std::abs(beta_quantile(p.a, p.b, 0.025) - lo), std::abs(beta_quantile(p.a, p.b, 0.975) - up));
    worst = std::max(worst, r);
    d << "(" << lo << "," << up << ")->Beta(" << fmt("%.3f", p.a) << "," << fmt("%.3f", p.b) << ") ";
  }
  d << "max residual " << fmt("%.1e", worst);
  return {worst < 1e-6, d.str()};
}

// ---------------------------------------------------------------------------
// Successive-conditional vs marginal-conditional simulation.

void regenerate(CompiledModel& model, const ParameterState& st, Rng& rng) {
  for (std::size_t s = 0; s < model.brs.size(); ++s) {
    auto& m = model.data.mbs[model.brs[s].data_index].data;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j)
        m(i, j) = rng.bernoulli(response_prob_brs(model, st.rates, s, j, st.z[s][i], st.cls[i])) ? Response::Positive
                                                                                                  : Response::Negative;
  }
  for (std::size_t s = 0; s < model.ss.size(); ++s) {
    auto& m = model.data.mss[model.ss[s].data_index].data;
    for (std::size_t i : model.cases)
      for (std::size_t j = 0; j < m.cols(); ++j)
        m(i, j) = rng.bernoulli(response_prob_ss(model, st.rates, s, j, st.cls[i])) ? Response::Positive : Response::Negative;
  }
}

std::vector<double> geweke_stats(const CompiledModel& model, const ParameterState& st) {
  const auto& r = st.rates.brs[0];
  std::vector<double> g{class_weights(model, st, 0)(0),
                        r.theta(0, 0),
                        r.theta(1, 1),
                        r.psi(0, 0),
                        r.psi(1, 1),
                        st.rates.ss[0](0),
                        arm_weights(model, st, 0, 0, true)(0),
                        arm_weights(model, st, 0, 0, false)(0)};
  if (!model.brs[0].regression) {
    g.push_back(st.sticks[0].alpha_case / (1 + st.sticks[0].alpha_case));
    g.push_back(st.sticks[0].alpha_control / (1 + st.sticks[0].alpha_control));
  } else {
    g.push_back(std::tanh(st.sticks[0].mu(0) / 3));
    g.push_back(std::tanh(st.eti_coef(0, 0) / 3));
  }
  double c1 = 0, z0 = 0, pos = 0;
  for (std::size_t i : model.cases) c1 += st.cls[i] == 1;
  for (int z : st.z[0]) z0 += z == 0;
  const auto& m = model.data.mbs[0].data;
  for (std::size_t i = 0; i < m.rows(); ++i) pos += m(i, 0) == Response::Positive;
  g.push_back(c1 / model.cases.size());
  g.push_back(z0 / st.z[0].size());
  g.push_back(pos / m.rows());
  return g;
}

const char* kGewekeNames[] = {"pi1",   "theta11", "theta22", "psi11", "psi22", "thetaSS", "eta1", "nu1",
                              "extra1", "extra2", "I=1",     "Z=1",   "M1+"};

struct GewekeResult {
  double worst = 0.0;
  std::string where;
};

GewekeResult geweke(bool regression, int iterations, std::uint64_t seed) {
  Dataset d;
  const int N = 30;
  d.y.resize(N);
  for (int i = 0; i < N; ++i) d.y[i] = i < 15;
  std::vector<std::vector<int>> zeros(N, {0, 0}), ss_rows;
  for (int i = 0; i < N; ++i) ss_rows.push_back({i < 15 ? 0 : -1});
  d.mbs.push_back(brs("MBS1", {"A", "B"}, zeros));
  d.mss.push_back(ss("MSS1", {"A"}, ss_rows));
  ModelSpec spec;
  spec.use_measurements = {Quality::BrS, Quality::SS};
  spec.cause_list = CauseList({"A", "B"});
  spec.default_k = 2;
  spec.tpr_prior["MBS1"] = std::vector<BetaPair>{{3, 2}, {3, 2}};
  spec.tpr_prior["MSS1"] = std::vector<BetaPair>{{2, 3}};
  spec.stick_hyper = {1.0, 1.0};
  if (regression) {
    spec.eti_formula = "~ 1";
    spec.fpr_formula["MBS1"] = "~ 1";
  }
  CompiledModel model = compile_model(d, spec);

  Rng rng(seed);
  std::vector<std::vector<double>> prior_draws, chain_draws;
  for (int t = 0; t < iterations; ++t) prior_draws.push_back(geweke_stats(model, [&] {
    auto st = sample_prior_state(model, rng);
    regenerate(model, st, rng);
    return st;
  }()));

  ParameterState st = sample_prior_state(model, rng);
  regenerate(model, st, rng);
  MetropolisTuner tuner;
  for (int t = 0; t < iterations; ++t) {
    sweep(model, st, tuner, false, rng);
    regenerate(model, st, rng);
    chain_draws.push_back(geweke_stats(model, st));
  }

  GewekeResult res;
  const std::size_t G = chain_draws[0].size();
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> a, b;
    for (const auto& v : prior_draws) a.push_back(v[g]);
    for (const auto& v : chain_draws) b.push_back(v[g]);
    Eigen::VectorXd bv = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    const double ess = effective_sample_size({bv});
    const double se = std::sqrt(std::pow(sample_sd(a), 2) / a.size() + std::pow(sample_sd(b), 2) / ess);
    const double z = (mean(b) - mean(a)) / se;
    if (std::abs(z) > std::abs(res.worst)) {
      res.worst = z;
      res.where = kGewekeNames[g];
    }
  }
  return res;
}

Outcome geweke_test() {
  const auto plain = geweke(false, 200000, 101);
  const auto reg = geweke(true, 200000, 202);
  const bool pass = std::abs(plain.worst) < 4.0 && std::abs(reg.worst) < 4.0;
  return {pass, "no-regression worst " + plain.where + " " + fmt("%.2f", plain.worst) + " SE; intercept-only regression worst " +
                    reg.where + " " + fmt("%.2f", reg.worst) + " SE"};
}

// ---------------------------------------------------------------------------

double max_abs_slord(const SlordTable& t) {
  double m = 0.0;
  for (const auto& r : t.rows)
    if (std::isfinite(r.slord)) m = std::max(m, std::abs(r.slord));
  return m;
}

SimulationRecipe dependent_recipe(std::uint64_t seed) {
  SimulationRecipe r;
  r.nd = r.nu = 300;
  r.cause_list = CauseList(letters(5));
  r.etiology = {0.4, 0.3, 0.1, 0.1, 0.1};
  r.pathogen_brs = letters(5);
  r.psi_bs = Eigen::MatrixXd(5, 2);
  r.theta_bs = Eigen::MatrixXd(5, 2);
  for (int j = 0; j < 5; ++j) {
    r.psi_bs.row(j) << 0.05, 0.7;
    r.theta_bs.row(j) << 0.95, 0.9;
  }
  r.eta = Eigen::Vector2d(0.5, 0.5);
  r.lambda = Eigen::Vector2d(0.5, 0.5);
  r.seed = seed;
  return r;
}

Outcome ppc_calibration() {
  const auto& fit = noreg_fit();
  const auto slord = ppc_slord(fit.run, "MBS1");
  double small = 0;
  for (const auto& r : slord.rows) small += std::abs(r.slord) < 3.0;
  const double frac = small / slord.rows.size();
  const auto pat = ppc_top_patterns(fit.run, "MBS1", 5);
  int inside = 0, total = 0;
  for (const auto& r : pat.rows) {
    if (r.pattern == "rest") continue;
    ++total;
    inside += r.inside;
  }
  bool pass = frac >= 0.95 && inside == total && total == 10;
  std::ostringstream d;
  d << "well-specified: " << fmt("%.1f", 100 * frac) << "% |SLORD|<3, " << inside << "/" << total
    << " top-5 patterns inside; K=1 vs K=2 max|SLORD|:";

  McmcSettings m;
  m.n_chains = 2;
  m.n_iter = 1500;
  m.n_burnin = 500;
  m.ppd = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto sim = simulate(dependent_recipe(1000 + seed));
    ModelSpec spec;
    spec.cause_list = CauseList(letters(5));
    spec.tpr_prior["MBS1"] = std::vector<BetaRange>(5, BetaRange{0.55, 0.99});
    m.seed = seed;
    spec.default_k = 1;
    const double k1 = max_abs_slord(ppc_slord(run(sim.data, spec, m), "MBS1"));
    spec.default_k = 2;
    const double k2 = max_abs_slord(ppc_slord(run(sim.data, spec, m), "MBS1"));
    pass = pass && k1 > k2;
    d << " " << fmt("%.1f", k1) << ">" << fmt("%.1f", k2);
  }
  return {pass, d.str()};
}

// ---------------------------------------------------------------------------

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  return std::equal(std::istreambuf_iterator<char>(fa), {}, std::istreambuf_iterator<char>(fb), {});
}

Outcome structural_invariants() {
  const auto& fit = noreg_fit();
  std::vector<std::string> failures;
  double simplex_err = 0.0;

  for (const auto& ch : fit.run.chains) {
    auto sum_prefix = [&](const std::string& prefix) {
      std::vector<Eigen::Index> cols;
      for (std::size_t c = 0; c < ch.names.size(); ++c)
        if (ch.names[c].rfind(prefix, 0) == 0) cols.push_back(static_cast<Eigen::Index>(c));
      for (Eigen::Index r = 0; r < ch.draws.rows(); ++r) {
        double s = 0;
        for (auto c : cols) s += ch.draws(r, c);
        simplex_err = std::max(simplex_err, std::abs(s - 1.0));
      }
    };
    sum_prefix("pEti[");
    sum_prefix("Eta[1]");
    sum_prefix("Lambda[1]");
  }
  double mean_sum = 0;
  for (const auto& r : summarize_cscf(fit.run).overall.rows) mean_sum += r.mean;
  Rng rng(99);
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd phi(6);
    for (int l = 0; l < 6; ++l) phi(l) = 10 * rng.normal();
    simplex_err = std::max(simplex_err, std::abs(cscf_weights(phi).sum() - 1.0));
    const std::vector<double> a{rng.normal() * 5, rng.normal() * 5, rng.normal() * 5};
    simplex_err = std::max(simplex_err, std::abs(subclass_weights(a).sum() - 1.0));
    const std::vector<double> v{rng.uniform(), rng.uniform()};
    simplex_err = std::max(simplex_err, std::abs(stick_weights(v).sum() - 1.0));
  }
  if (simplex_err > 1e-12 || std::abs(mean_sum - 1.0) > 1e-10) failures.push_back("simplex");

  std::vector<double> x(500);
  for (auto& v : x) v = rng.normal();
  double pou = 0.0;
  for (int dof : {4, 6, 10}) {
    const auto b = bspline_basis(x, dof);
    for (Eigen::Index i = 0; i < b.rows(); ++i) pou = std::max(pou, std::abs(b.row(i).sum() - 1.0));
  }
  if (pou > 1e-10) failures.push_back("partition of unity");

  bool shift_exact = true;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd phi(5);
    for (int l = 0; l < 5; ++l) phi(l) = std::ldexp(std::round(rng.normal() * 256), -6);
    const double shift = std::ldexp(std::round(rng.normal() * 64), -3);
    const Eigen::VectorXd a = cscf_weights(phi), b = cscf_weights(Eigen::VectorXd(phi.array() + shift));
    shift_exact = shift_exact && (a.array() == b.array()).all();
  }
  if (!shift_exact) failures.push_back("softmax shift");

  // SS positives pin the class in every retained draw.
  const auto& d = fit.sim.data;
  std::size_t ss_violations = 0, ss_checked = 0;
  std::vector<std::size_t> case_rows;
  for (std::size_t i = 0; i < d.num_subjects(); ++i)
    if (d.y[i] == 1) case_rows.push_back(i);
  for (const auto& ch : fit.run.chains)
    for (const auto& draw : ch.class_draws)
      for (std::size_t c = 0; c < case_rows.size(); ++c)
        for (std::size_t j = 0; j < d.mss[0].num_items(); ++j)
          if (d.mss[0].data(case_rows[c], j) == Response::Positive) {
            ++ss_checked;
            ss_violations += draw[c] != static_cast<int>(j) + 1;
          }
  if (ss_violations > 0 || ss_checked == 0) failures.push_back("SS structural zero");

  const auto pred = individual_predictions(fit.run);
  double row_err = 0.0;
  for (Eigen::Index i = 0; i < pred.probs.rows(); ++i) row_err = std::max(row_err, std::abs(pred.probs.row(i).sum() - 1.0));
  if (row_err > 1e-12) failures.push_back("individual rows");

  const fs::path base = fs::temp_directory_path() / "nplcm_acceptance_rerun";
  fs::remove_all(base);
  McmcSettings m = mcmc_from_json(read_json(kConfigs / "mcmc_quick.json"));
  const auto spec = model_from_json(read_json(kConfigs / "noreg_model.json"));
  m.out_dir = (base / "a").string();
  run(d, spec, m);
  m.out_dir = (base / "b").string();
  run(d, spec, m);
  std::size_t compared = 0;
  bool identical = true;
  for (const auto& e : fs::directory_iterator(base / "a")) {
    const auto name = e.path().filename();
    if (name == "manifest.json" || name == "mcmc.json") continue;  // timestamp and out_dir differ
    ++compared;
    identical = identical && same_bytes(e.path(), base / "b" / name);
  }
  fs::remove_all(base);
  if (!identical || compared < 5) failures.push_back("byte-identical rerun");

  std::ostringstream det;
  det << "simplex " << fmt("%.1e", simplex_err) << ", B-spline " << fmt("%.1e", pou) << ", shift "
      << (shift_exact ? "exact" : "inexact") << ", SS zero " << ss_violations << "/" << ss_checked << " violations"
      << ", prediction rows " << fmt("%.1e", row_err) << ", rerun " << compared << " files "
      << (identical ? "identical" : "differ");
  if (!failures.empty()) {
    det << "; failed:";
    for (const auto& f : failures) det << " " << f;
  }
  return {failures.empty(), det.str()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "no-regression recovery", no_regression_recovery},
      {2, "stratified regression recovery", stratified_recovery},
      {3, "likelihood oracle equivalence", oracle_equivalence},
      {4, "conjugate exactness", conjugate_exactness},
      {5, "prior elicitation", prior_elicitation},
      {6, "joint-distribution sampler test", geweke_test},
      {7, "posterior predictive calibration", ppc_calibration},
      {8, "structural invariants", structural_invariants},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
