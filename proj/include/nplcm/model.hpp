#pragma once

// A dataset bound to a model definition: templates, resolved priors and
// design matrices, plus the full parameter state the sampler moves through.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "nplcm/core.hpp"
#include "nplcm/likelihood.hpp"
#include "nplcm/regression.hpp"

namespace nplcm {

struct BrsSliceModel {
  std::size_t data_index = 0;  // position in Dataset::mbs
  Template tpl;
  int k = 1;
  std::vector<BetaPair> tpr_prior;  // per item, shared across subclasses
  std::vector<BetaPair> fpr_prior;  // per item, shared across subclasses
  Formula fpr_formula;
  DesignMatrix fpr_design;  // N x P; used only when `regression`
  bool regression = false;  // logistic stick-breaking on covariates (K > 1)

  std::size_t num_items() const { return tpl.num_items(); }
};

struct SsSliceModel {
  std::size_t data_index = 0;  // position in Dataset::mss
  Template tpl;
  std::vector<BetaPair> tpr_prior;
};

struct CompiledModel {
  Dataset data;
  ModelSpec spec;
  ValidationReport report;
  int num_classes = 0;  // L

  std::vector<BrsSliceModel> brs;
  std::vector<SsSliceModel> ss;

  Formula eti_formula;
  DesignMatrix eti_design;  // N x P
  bool eti_regression = false;
  std::vector<double> eti_dirichlet;

  CoefficientPrior coef_prior;

  std::vector<std::size_t> cases;
  std::vector<std::size_t> controls;

  const MeasurementSlice& brs_data(std::size_t s) const { return data.mbs[brs[s].data_index]; }
  const MeasurementSlice& ss_data(std::size_t s) const { return data.mss[ss[s].data_index]; }
  bool is_case(std::size_t i) const { return data.y[i] == 1; }
};

/// Validates and binds. Throws ValidationError on bad input.
CompiledModel compile_model(Dataset data, ModelSpec spec);

/// Stick-breaking state of one BrS slice.
struct StickState {
  // no covariates: truncated stick-breaking with Gamma hyperprior
  Eigen::VectorXd v_case;     // K-1 case fractions (eta)
  Eigen::VectorXd v_control;  // K-1 control fractions (nu)
  double alpha_case = 1.0;
  double alpha_control = 1.0;
  // covariates: logistic stick-breaking with shared intercepts
  Eigen::VectorXd mu;              // K-1
  Eigen::MatrixXd coef_case;       // (K-1) x P
  Eigen::MatrixXd coef_control;    // (K-1) x P
  Eigen::MatrixXd tau_case;        // (K-1) x spline blocks
  Eigen::MatrixXd tau_control;     // (K-1) x spline blocks
};

struct ParameterState {
  std::vector<int> cls;              // per subject, 0 for controls
  std::vector<std::vector<int>> z;   // per BrS slice, per subject (0-based)
  MeasurementParams rates;
  Eigen::VectorXd pi;                // no CSCF regression
  Eigen::MatrixXd eti_coef;          // L x P under CSCF regression
  Eigen::MatrixXd eti_tau;           // L x spline blocks
  std::vector<StickState> sticks;    // per BrS slice
};

/// pi_i (length L).
Eigen::VectorXd class_weights(const CompiledModel& model, const ParameterState& state, std::size_t i);

/// Case (eta) or control (nu) subclass weights of BrS slice s at subject i's
/// covariates.
Eigen::VectorXd arm_weights(const CompiledModel& model, const ParameterState& state, std::size_t s, std::size_t i,
                            bool case_arm);

/// eta_i (case) or nu_i (control) of BrS slice s, depending on subject i.
Eigen::VectorXd subclass_weights_for(const CompiledModel& model, const ParameterState& state, std::size_t s,
                                     std::size_t i);

/// Per-subject weights for every subject (rows = N).
MixingWeights mixing_weights(const CompiledModel& model, const ParameterState& state);

}  // namespace nplcm
