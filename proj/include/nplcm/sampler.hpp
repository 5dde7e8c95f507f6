#pragma once

// Native MCMC engine.
//
// One sweep applies, in this fixed order:
//   1. update_class      for every case            (I)
//   2. update_subclass   for every subject, slice  (Z)
//   3. update_rates                                 (Theta, Psi, theta_SS)
//   4. update_mixing_noreg                          (pi, sticks, alpha)
//   5. update_regression                            (coefficients, mu, tau)
// Steps 4 and 5 each touch only the blocks that are not (4) or are (5)
// covariate-dependent.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nplcm/core.hpp"
#include "nplcm/model.hpp"
#include "nplcm/random.hpp"

namespace nplcm {

/// Starting point: I uniform over SS-consistent classes, Z uniform, rates and
/// pi at prior means, alpha at its prior mean, coefficients at zero.
ParameterState initial_state(const CompiledModel& model, Rng& rng);

/// Unnormalized log full conditional of I_i over classes 1..L (index l-1).
std::vector<double> class_log_weights(const CompiledModel& model, const ParameterState& state, std::size_t i);

/// Draws I_i. Throws DataInconsistency when every class has zero mass.
int update_class(const CompiledModel& model, ParameterState& state, std::size_t i, Rng& rng);

/// Unnormalized log full conditional of Z_i in BrS slice s (SS terms do not
/// depend on subclasses and are left out).
std::vector<double> subclass_log_weights(const CompiledModel& model, const ParameterState& state, std::size_t s,
                                         std::size_t i);

int update_subclass(const CompiledModel& model, ParameterState& state, std::size_t s, std::size_t i, Rng& rng);

/// Conjugate Beta updates of every TPR/FPR cell given I and Z.
void update_rates(const CompiledModel& model, ParameterState& state, Rng& rng);

/// Dirichlet update of pi (when the CSCFs have no covariates) and
/// stick-breaking updates (V, then alpha) for slices without FPR regression.
void update_mixing_noreg(const CompiledModel& model, ParameterState& state, Rng& rng);

/// Adaptive random-walk Metropolis bookkeeping, one entry per coefficient
/// block.
class MetropolisTuner {
 public:
  struct Block {
    double scale = 0.1;
    long proposed = 0, accepted = 0;          // since construction
    long window_proposed = 0, window_accepted = 0;
    long burnin_proposed = 0, burnin_accepted = 0;
    long overflow = 0;
  };

  static constexpr int kWindow = 50;
  static constexpr double kLowTarget = 0.2;
  static constexpr double kHighTarget = 0.4;

  Block& block(const std::string& name) { return blocks_[name]; }
  const std::map<std::string, Block>& blocks() const { return blocks_; }

  /// Records a proposal; while `adapt` is set, rescales after each window.
  void record(Block& b, bool accepted, bool adapt);
  /// Marks the end of burn-in: scales are frozen from here on.
  void end_burnin();

 private:
  std::map<std::string, Block> blocks_;
};

/// Metropolis-within-Gibbs for every covariate-dependent block, plus Gamma
/// updates of spline penalty precisions. Proposal scales adapt only while
/// `adapt` is true.
void update_regression(const CompiledModel& model, ParameterState& state, MetropolisTuner& tuner, bool adapt,
                       Rng& rng);

void sweep(const CompiledModel& model, ParameterState& state, MetropolisTuner& tuner, bool adapt, Rng& rng);

/// Stable names of every recorded scalar, e.g. pEti[2], thetaBS[1][3][2].
std::vector<std::string> parameter_names(const CompiledModel& model);
/// Values in parameter_names order.
Eigen::VectorXd flatten(const CompiledModel& model, const ParameterState& state);

/// Replicated statistics of one BrS slice.
struct SlicePpd {
  std::string slice;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  /// [group] with group 0 = controls, 1 = cases; rows = retained draws.
  Eigen::MatrixXd lor[2];
  std::vector<std::map<std::string, int>> patterns[2];
};

struct AcceptanceRecord {
  std::string block;
  std::string phase;  // "burnin" or "sampling"
  long proposed = 0;
  long accepted = 0;
  long overflow = 0;
  double scale = 0.0;
};

struct ChainOutput {
  std::vector<std::string> names;
  std::vector<int> iterations;  // 1-based iteration of each retained draw
  Eigen::MatrixXd draws;        // retained x names
  /// Retained x cases, classes 1..L; empty unless individual_pred.
  std::vector<std::vector<int>> class_draws;
  std::vector<SlicePpd> ppd;  // empty unless ppd
  std::vector<AcceptanceRecord> acceptance;
  std::uint64_t seed = 0;
  std::string spec_hash;
};

struct PosteriorRun {
  ModelSpec spec;
  McmcSettings mcmc;
  Dataset data;
  ValidationReport report;
  std::vector<ChainOutput> chains;
  /// Parameter name prefixes subject to subclass label switching.
  std::vector<std::string> non_identified;
};

/// Name prefixes (e.g. "thetaBS[1]") of draws that carry subclass labels.
std::vector<std::string> non_identified_prefixes(const CompiledModel& model);

/// Replicated BrS responses for every subject with fresh (I, Z) drawn from
/// the current weights; observed missing cells stay missing.
std::vector<ResponseMatrix> replicate_brs(const CompiledModel& model, const ParameterState& state, Rng& rng);

/// Runs one chain with seed mcmc.seed + chain. When `samples_path` is
/// non-empty, retained draws are streamed there; a write failure leaves a
/// "<samples_path>.partial" marker and throws.
ChainOutput run_chain(const CompiledModel& model, const McmcSettings& mcmc, int chain,
                      const std::string& samples_path = {});

/// Validates, runs every chain (concurrently) and, if mcmc.out_dir is set,
/// persists the run there.
PosteriorRun run(const Dataset& data, const ModelSpec& spec, const McmcSettings& mcmc);

}  // namespace nplcm
