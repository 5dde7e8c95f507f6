#include "nplcm/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "nplcm/error.hpp"
#include "nplcm/model.hpp"
#include "nplcm/ppc_stats.hpp"
#include "nplcm/regression.hpp"
#include "nplcm/stats.hpp"

namespace nplcm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t column_of(const ChainOutput& ch, const std::string& name) {
  const auto it = std::find(ch.names.begin(), ch.names.end(), name);
  if (it == ch.names.end()) throw ValidationError("run has no draws named " + name);
  return static_cast<std::size_t>(it - ch.names.begin());
}

std::string bracket(std::size_t a) { return "[" + std::to_string(a) + "]"; }

const MeasurementSlice& brs_slice(const PosteriorRun& run, const std::string& slice) {
  for (const auto& s : run.data.mbs)
    if (s.name == slice) return s;
  throw ValidationError("no BrS slice named " + slice);
}

std::vector<const SlicePpd*> ppd_for(const PosteriorRun& run, const std::string& slice) {
  std::vector<const SlicePpd*> out;
  for (const auto& ch : run.chains)
    for (const auto& sp : ch.ppd)
      if (sp.slice == slice) out.push_back(&sp);
  if (out.empty())
    throw ValidationError("run has no posterior predictive draws for slice " + slice + " (fit with ppd enabled)");
  return out;
}

}  // namespace

SummaryRow summarize_draws(std::string label, std::vector<double> draws) {
  if (draws.empty()) throw ValidationError("no draws to summarize for " + label);
  std::sort(draws.begin(), draws.end());
  SummaryRow r;
  r.label = std::move(label);
  r.mean = mean(draws);
  r.sd = sample_sd(draws);
  r.q025 = quantile_sorted(draws, 0.025);
  r.q975 = quantile_sorted(draws, 0.975);
  return r;
}

CscfDraws cscf_draws(const PosteriorRun& run) {
  CscfDraws out;
  const auto L = static_cast<Eigen::Index>(run.spec.cause_list.size());
  std::size_t total = 0;
  for (const auto& ch : run.chains) total += static_cast<std::size_t>(ch.draws.rows());
  if (total == 0) throw ValidationError("run has no retained draws");

  const Formula formula = parse_formula(run.spec.eti_formula);
  if (formula.is_empty()) {
    Eigen::MatrixXd pi(static_cast<Eigen::Index>(total), L);
    Eigen::Index row = 0;
    for (const auto& ch : run.chains) {
      std::vector<std::size_t> cols;
      for (Eigen::Index l = 0; l < L; ++l) cols.push_back(column_of(ch, "pEti" + bracket(static_cast<std::size_t>(l) + 1)));
      for (Eigen::Index d = 0; d < ch.draws.rows(); ++d, ++row)
        for (Eigen::Index l = 0; l < L; ++l) pi(row, l) = ch.draws(d, static_cast<Eigen::Index>(cols[static_cast<std::size_t>(l)]));
    }
    out.labels = {"all"};
    out.empirical_weights = {1.0};
    out.pi.push_back(std::move(pi));
    return out;
  }

  const DesignMatrix design = build_design(formula, run.data.x, run.data.num_subjects());
  const auto P = design.cols();
  const auto columns = formula.columns();

  // distinct case design rows, ordered by factor level
  struct Stratum {
    std::string label;
    Eigen::Index row = 0;
    std::size_t count = 0;
  };
  std::vector<std::vector<std::string>> levels;
  for (const auto& c : columns) levels.push_back(run.data.x.factor_levels(c));
  std::map<std::vector<std::size_t>, Stratum> strata;
  std::size_t n_cases = 0;
  for (std::size_t i = 0; i < run.data.num_subjects(); ++i) {
    if (run.data.y[i] != 1) continue;
    ++n_cases;
    std::vector<std::size_t> key;
    std::string label;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto lev = run.data.x.level_of(columns[c], i);
      key.push_back(static_cast<std::size_t>(std::find(levels[c].begin(), levels[c].end(), lev) - levels[c].begin()));
      label += (label.empty() ? "" : ",") + columns[c] + "=" + lev;
    }
    if (label.empty()) label = "all";
    auto [it, fresh] = strata.emplace(key, Stratum{label, static_cast<Eigen::Index>(i), 0});
    ++it->second.count;
  }

  for (const auto& [key, st] : strata) {
    const auto& label = st.label;
    const std::pair<Eigen::Index, std::size_t> info{st.row, st.count};
    out.labels.push_back(label);
    out.empirical_weights.push_back(static_cast<double>(info.second) / static_cast<double>(n_cases));
    const Eigen::RowVectorXd x = design.x.row(info.first);
    Eigen::MatrixXd pi(static_cast<Eigen::Index>(total), L);
    Eigen::Index row = 0;
    for (const auto& ch : run.chains) {
      std::vector<std::size_t> cols;
      for (Eigen::Index l = 1; l <= L; ++l)
        for (Eigen::Index p = 1; p <= P; ++p)
          cols.push_back(column_of(ch, "etiCoef" + bracket(static_cast<std::size_t>(l)) + bracket(static_cast<std::size_t>(p))));
      Eigen::MatrixXd coef(L, P);
      for (Eigen::Index d = 0; d < ch.draws.rows(); ++d, ++row) {
        for (Eigen::Index l = 0; l < L; ++l)
          for (Eigen::Index p = 0; p < P; ++p) coef(l, p) = ch.draws(d, static_cast<Eigen::Index>(cols[static_cast<std::size_t>(l * P + p)]));
        pi.row(row) = cscf_weights(x, coef).transpose();
      }
    }
    out.pi.push_back(std::move(pi));
  }
  return out;
}

CscfSummary summarize_cscf(const PosteriorRun& run, const std::optional<std::vector<double>>& weights) {
  const CscfDraws d = cscf_draws(run);
  const auto& causes = run.spec.cause_list.labels();
  auto table = [&](const std::string& label, double w, const Eigen::MatrixXd& pi) {
    CscfTable t;
    t.stratum = label;
    t.weight = w;
    for (Eigen::Index l = 0; l < pi.cols(); ++l) {
      std::vector<double> v(static_cast<std::size_t>(pi.rows()));
      for (Eigen::Index r = 0; r < pi.rows(); ++r) v[static_cast<std::size_t>(r)] = pi(r, l);
      t.rows.push_back(summarize_draws(causes[static_cast<std::size_t>(l)], std::move(v)));
    }
    return t;
  };

  CscfSummary out;
  out.regression = !parse_formula(run.spec.eti_formula).is_empty();
  if (!out.regression) {
    if (weights && weights->size() != 1) throw ValidationError("stratum weights given for a fit without regression");
    out.overall = table("all", 1.0, d.pi[0]);
    return out;
  }

  std::vector<double> w = weights ? *weights : d.empirical_weights;
  if (w.size() != d.pi.size())
    throw ValidationError("expected " + std::to_string(d.pi.size()) + " stratum weights, got " + std::to_string(w.size()));
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw ValidationError("stratum weights must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-8) throw ValidationError("stratum weights must sum to 1");

  Eigen::MatrixXd marginal = Eigen::MatrixXd::Zero(d.pi[0].rows(), d.pi[0].cols());
  for (std::size_t s = 0; s < d.pi.size(); ++s) {
    out.strata.push_back(table(d.labels[s], w[s], d.pi[s]));
    marginal += w[s] * d.pi[s];
  }
  out.overall = table("marginal", 1.0, marginal);
  return out;
}

IndividualPrediction individual_predictions(const PosteriorRun& run) {
  std::size_t draws = 0;
  for (const auto& ch : run.chains) draws += ch.class_draws.size();
  if (draws == 0) throw ValidationError("run has no individual class draws (fit with individual_pred enabled)");

  IndividualPrediction out;
  for (std::size_t i = 0; i < run.data.num_subjects(); ++i)
    if (run.data.y[i] == 1) out.subjects.push_back(i);
  const auto L = static_cast<Eigen::Index>(run.spec.cause_list.size());
  out.probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out.subjects.size()), L);
  for (const auto& ch : run.chains)
    for (const auto& row : ch.class_draws) {
      if (row.size() != out.subjects.size()) throw ValidationError("class draws do not match the number of cases");
      for (std::size_t c = 0; c < row.size(); ++c) out.probs(static_cast<Eigen::Index>(c), row[c] - 1) += 1.0;
    }
  out.probs /= static_cast<double>(draws);
  return out;
}

namespace {

std::vector<Eigen::VectorXd> split_halves(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) {
    const Eigen::Index half = c.size() / 2;
    out.push_back(c.head(half));
    out.push_back(c.tail(half));
  }
  return out;
}

}  // namespace

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  const auto parts = split_halves(chains);
  if (parts.size() < 2 || parts[0].size() < 2) throw ValidationError("R-hat needs at least 4 draws per chain");
  const auto n = static_cast<double>(parts[0].size());
  const auto m = static_cast<double>(parts.size());
  Eigen::VectorXd means(parts.size()), vars(parts.size());
  for (std::size_t c = 0; c < parts.size(); ++c) {
    const auto e = static_cast<Eigen::Index>(c);
    means(e) = parts[c].mean();
    vars(e) = (parts[c].array() - means(e)).square().sum() / (n - 1.0);
  }
  const double W = vars.mean();
  const double B = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
  if (W <= 0.0) return B <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  const auto parts = split_halves(chains);
  if (parts.size() < 2 || parts[0].size() < 2) throw ValidationError("ESS needs at least 4 draws per chain");
  const Eigen::Index n = parts[0].size();
  const auto nd = static_cast<double>(n);
  const auto m = static_cast<double>(parts.size());

  std::vector<Eigen::VectorXd> centered;
  Eigen::VectorXd means(parts.size());
  for (std::size_t c = 0; c < parts.size(); ++c) {
    means(static_cast<Eigen::Index>(c)) = parts[c].mean();
    centered.push_back(parts[c].array() - parts[c].mean());
  }
  auto mean_acov = [&](Eigen::Index t) {
    double s = 0.0;
    for (const auto& c : centered) s += c.head(n - t).dot(c.tail(n - t)) / nd;
    return s / m;
  };
  const double W = mean_acov(0) * nd / (nd - 1.0);
  const double B_over_n = (means.array() - means.mean()).square().sum() / (m - 1.0);
  const double var_plus = (nd - 1.0) / nd * W + B_over_n;
  if (!(var_plus > 0.0)) return m * nd;

  auto rho = [&](Eigen::Index t) { return 1.0 - (W - mean_acov(t)) / var_plus; };
  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t + 1 < n; t += 2) {
    double p = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (!(p > 0.0)) break;
    p = std::min(p, prev);
    prev = p;
    sum += p;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(m * nd));
  return m * nd / tau;
}

std::vector<ConvergenceRow> convergence(const PosteriorRun& run) {
  if (run.chains.empty()) throw ValidationError("run has no chains");
  const auto& names = run.chains.front().names;
  for (const auto& ch : run.chains) {
    if (ch.names != names) throw ValidationError("chains have different parameter names");
    if (ch.draws.rows() < 4) throw ValidationError("convergence needs at least 4 retained draws per chain");
  }
  const Eigen::Index n = std::min_element(run.chains.begin(), run.chains.end(), [](const auto& a, const auto& b) {
                           return a.draws.rows() < b.draws.rows();
                         })->draws.rows();
  std::vector<ConvergenceRow> out;
  for (std::size_t p = 0; p < names.size(); ++p) {
    std::vector<Eigen::VectorXd> chains;
    for (const auto& ch : run.chains) chains.push_back(ch.draws.col(static_cast<Eigen::Index>(p)).head(n));
    ConvergenceRow r;
    r.name = names[p];
    r.rhat = split_rhat(chains);
    r.ess = effective_sample_size(chains);
    r.flagged = !std::isfinite(r.rhat) || r.rhat > 1.1;
    out.push_back(r);
  }
  return out;
}

SlordTable ppc_slord(const PosteriorRun& run, const std::string& slice) {
  const auto& ms = brs_slice(run, slice);
  const auto reps = ppd_for(run, slice);

  std::vector<std::size_t> groups[2];
  for (std::size_t i = 0; i < run.data.num_subjects(); ++i) groups[run.data.y[i] == 1 ? 1 : 0].push_back(i);
  static const char* kGroup[2] = {"control", "case"};

  SlordTable out;
  out.slice = slice;
  const auto pairs = item_pairs(ms.num_items());
  for (int g = 0; g < 2; ++g) {
    if (groups[g].empty()) continue;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [a, b] = pairs[p];
      const auto t = pair_table(ms.data, groups[g], a, b);
      const auto obs = log_odds_ratio(t);
      if (!obs || degenerate(t)) {
        out.omitted.push_back(std::string(kGroup[g]) + ":" + ms.items[a] + ":" + ms.items[b]);
        continue;
      }
      std::vector<double> rep;
      for (const auto* sp : reps)
        for (Eigen::Index r = 0; r < sp->lor[g].rows(); ++r) {
          const double v = sp->lor[g](r, static_cast<Eigen::Index>(p));
          if (!std::isnan(v)) rep.push_back(v);
        }
      SlordRow row;
      row.group = kGroup[g];
      row.item_a = ms.items[a];
      row.item_b = ms.items[b];
      row.observed = *obs;
      row.rep_draws = rep.size();
      std::sort(rep.begin(), rep.end());
      row.rep_mean = rep.empty() ? kNaN : mean(rep);
      row.rep_sd = rep.size() < 2 ? kNaN : sample_sd(rep);
      if (row.observed == row.rep_mean) row.slord = 0.0;
      else row.slord = row.rep_sd > 0.0 ? (row.observed - row.rep_mean) / row.rep_sd : kNaN;
      out.rows.push_back(row);
    }
  }
  return out;
}

PatternTable ppc_top_patterns(const PosteriorRun& run, const std::string& slice, int n_pat) {
  if (n_pat < 1) throw ValidationError("n_pat must be at least 1");
  const auto& ms = brs_slice(run, slice);
  const auto reps = ppd_for(run, slice);
  static const char* kGroup[2] = {"control", "case"};

  PatternTable out;
  out.slice = slice;
  for (int g = 0; g < 2; ++g) {
    std::map<std::string, int> counts;
    std::size_t complete = 0;
    for (std::size_t i = 0; i < run.data.num_subjects(); ++i) {
      if ((run.data.y[i] == 1 ? 1 : 0) != g) continue;
      if (auto key = pattern_key(ms.data, i)) {
        ++counts[*key];
        ++complete;
      } else {
        ++out.incomplete[g];
      }
    }
    if (complete == 0) {
      out.notes.push_back(std::string("no complete ") + kGroup[g] + " rows");
      continue;
    }
    std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (static_cast<std::size_t>(n_pat) > ranked.size())
      out.notes.push_back(std::string(kGroup[g]) + ": only " + std::to_string(ranked.size()) +
                          " distinct patterns; table truncated");
    ranked.resize(std::min(ranked.size(), static_cast<std::size_t>(n_pat)));

    std::vector<PatternRow> rows;
    for (const auto& [pattern, count] : ranked) {
      PatternRow r;
      r.group = kGroup[g];
      r.pattern = pattern;
      r.observed = static_cast<double>(count) / static_cast<double>(complete);
      rows.push_back(std::move(r));
    }
    PatternRow rest;
    rest.group = kGroup[g];
    rest.pattern = "rest";
    rest.observed = 1.0;
    for (const auto& r : rows) rest.observed -= r.observed;

    for (const auto* sp : reps)
      for (const auto& draw : sp->patterns[g]) {
        double n = 0.0;
        for (const auto& [k, c] : draw) n += c;
        if (n == 0.0) continue;
        double top = 0.0;
        for (auto& r : rows) {
          const auto it = draw.find(r.pattern);
          const double f = it == draw.end() ? 0.0 : it->second / n;
          r.replicated.push_back(f);
          top += f;
        }
        rest.replicated.push_back(1.0 - top);
      }
    rows.push_back(std::move(rest));

    for (auto& r : rows) {
      std::vector<double> v = r.replicated;
      std::sort(v.begin(), v.end());
      if (v.empty()) {
        r.rep_mean = r.rep_q025 = r.rep_q975 = kNaN;
      } else {
        r.rep_mean = mean(v);
        r.rep_q025 = quantile_sorted(v, 0.025);
        r.rep_q975 = quantile_sorted(v, 0.975);
        r.inside = r.observed >= r.rep_q025 && r.observed <= r.rep_q975;
      }
      out.rows.push_back(std::move(r));
    }
  }
  return out;
}

std::string fitted_type(const ValidationReport& report) {
  bool any_fpr = false, all_discrete = !report.do_reg_eti || report.eti_discrete;
  for (const auto& [slice, reg] : report.do_reg_fpr) {
    if (!reg) continue;
    any_fpr = true;
    all_discrete = all_discrete && report.fpr_discrete.at(slice);
  }
  if (!report.do_reg_eti && !any_fpr) return "no_reg";
  return std::string("reg_") + (report.nested ? "nest" : "nonest") + (all_discrete ? "_strat" : "");
}

}  // namespace nplcm
