#pragma once

// Posterior summaries, individual predictions, convergence diagnostics and
// posterior predictive checks over a finished run.
//
// Quantiles are type 7 (linear interpolation). Moments are taken over sorted
// pooled draws so results do not depend on chain order.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nplcm/sampler.hpp"

namespace nplcm {

struct SummaryRow {
  std::string label;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

/// mean, sd, 2.5% and 97.5% of `draws`.
SummaryRow summarize_draws(std::string label, std::vector<double> draws);

struct CscfTable {
  std::string stratum;  // "all" without regression, "marginal" for the weighted table
  double weight = 1.0;
  std::vector<SummaryRow> rows;  // one per cause
};

struct CscfSummary {
  bool regression = false;
  std::vector<CscfTable> strata;  // per stratum (regression only)
  CscfTable overall;              // pooled (no regression) or marginal
};

/// Pooled CSCF draws. Under CSCF regression each distinct case design row is
/// a stratum, labelled by its covariate values; the marginal table weights
/// strata by `weights` (default: empirical case frequencies).
CscfSummary summarize_cscf(const PosteriorRun& run, const std::optional<std::vector<double>>& weights = {});

/// Per-draw CSCF vectors (rows = pooled draws) for each stratum, plus the
/// strata labels and empirical weights.
struct CscfDraws {
  std::vector<std::string> labels;
  std::vector<double> empirical_weights;
  std::vector<Eigen::MatrixXd> pi;  // per stratum, draws x L
};
CscfDraws cscf_draws(const PosteriorRun& run);

struct IndividualPrediction {
  std::vector<std::size_t> subjects;  // 0-based subject index of each case
  Eigen::MatrixXd probs;              // cases x L
};

/// Throws ValidationError when the run has no class draws.
IndividualPrediction individual_predictions(const PosteriorRun& run);

struct ConvergenceRow {
  std::string name;
  double rhat = 1.0;
  double ess = 0.0;
  bool flagged = false;  // rhat > 1.1 or non-finite
};

/// Split-chain R-hat over one matrix per chain (rows = draws).
double split_rhat(const std::vector<Eigen::VectorXd>& chains);
/// Multi-chain effective sample size with Geyer's initial monotone sequence,
/// computed on split chains.
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

/// Throws ValidationError with fewer than 4 draws per chain.
std::vector<ConvergenceRow> convergence(const PosteriorRun& run);

struct SlordRow {
  std::string group;  // "case" or "control"
  std::string item_a, item_b;
  double observed = 0.0;
  double rep_mean = 0.0;
  double rep_sd = 0.0;
  double slord = 0.0;
  std::size_t rep_draws = 0;
};

struct SlordTable {
  std::string slice;
  std::vector<SlordRow> rows;
  /// "group:item_a:item_b" of pairs left out because an item is constant.
  std::vector<std::string> omitted;
};

/// Throws ValidationError when the run has no replicated data.
SlordTable ppc_slord(const PosteriorRun& run, const std::string& slice);

struct PatternRow {
  std::string group;
  std::string pattern;  // item responses as 0/1 characters, or "rest"
  double observed = 0.0;
  double rep_mean = 0.0;
  double rep_q025 = 0.0;
  double rep_q975 = 0.0;
  bool inside = false;  // observed within the central 95% of replicates
  std::vector<double> replicated;
};

struct PatternTable {
  std::string slice;
  std::vector<PatternRow> rows;
  std::size_t incomplete[2] = {0, 0};  // rows left out per group (control, case)
  std::vector<std::string> notes;
};

PatternTable ppc_top_patterns(const PosteriorRun& run, const std::string& slice, int n_pat);

/// "no_reg", or "reg_" + "nest"/"nonest" + "_strat" when every covariate is
/// discrete.
std::string fitted_type(const ValidationReport& report);

}  // namespace nplcm
