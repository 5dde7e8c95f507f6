#pragma once

// Exact evaluation of the nested partially-latent class likelihood.
//
// Slice indices `s` refer to the slices in use by a CompiledModel (its `brs`
// and `ss` lists), not to positions in the raw Dataset.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nplcm/core.hpp"

namespace nplcm {

struct CompiledModel;

/// TPR and FPR matrices of one BrS slice, both J x K.
struct BrsRates {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd psi;
};

struct MeasurementParams {
  std::vector<BrsRates> brs;
  std::vector<Eigen::VectorXd> ss;  // TPR per SS item; FPR is exactly 0
};

/// Mixing weights. Each matrix has either one row (shared by every subject)
/// or one row per subject.
struct MixingWeights {
  Eigen::MatrixXd pi;               // x L
  std::vector<Eigen::MatrixXd> eta; // per BrS slice, x K
  std::vector<Eigen::MatrixXd> nu;  // per BrS slice, x K

  static Eigen::RowVectorXd row(const Eigen::MatrixXd& m, std::size_t i) {
    return m.rows() == 1 ? m.row(0) : m.row(static_cast<Eigen::Index>(i));
  }
};

/// Probabilities are kept in [kProbFloor, 1 - kProbFloor] except the exact
/// structural zero of SS false positives.
inline constexpr double kProbFloor = 1e-12;

/// Positive response probability of item j of BrS slice s in subclass k for
/// class `cls` (0 = control).
double response_prob_brs(const CompiledModel& model, const MeasurementParams& params, std::size_t s,
                         std::size_t j, int k, int cls);

/// SS items have no subclasses: theta_ss if causative, otherwise exactly 0.
double response_prob_ss(const CompiledModel& model, const MeasurementParams& params, std::size_t s,
                        std::size_t j, int cls);

/// Bernoulli log-likelihood of subject i's row in BrS slice s. Missing entries
/// contribute nothing.
double slice_loglik(const CompiledModel& model, const MeasurementParams& params, std::size_t s,
                    std::size_t i, int cls, int k);

/// Sum over SS slices in use; 0 for controls. May be -inf.
double ss_loglik(const CompiledModel& model, const MeasurementParams& params, std::size_t i, int cls);

/// log P(M_i | I_i = cls, Z_i = ks) over every slice in use. `ks` holds one
/// subclass per BrS slice. Throws for cls = 0 on a case or cls > 0 on a control.
double subject_loglik(const CompiledModel& model, const MeasurementParams& params, std::size_t i, int cls,
                      std::span<const int> ks);

/// Same subclass in every BrS slice (the usual single-slice call).
double subject_loglik(const CompiledModel& model, const MeasurementParams& params, std::size_t i, int cls,
                      int k);

/// log P(M_i) with classes and subclasses summed out, log-sum-exp throughout.
double subject_marginal_loglik(const CompiledModel& model, const MeasurementParams& params,
                               const MixingWeights& weights, std::size_t i);

/// Sum of subject_marginal_loglik over all subjects.
double marginal_loglik(const CompiledModel& model, const MeasurementParams& params,
                       const MixingWeights& weights);

}  // namespace nplcm
