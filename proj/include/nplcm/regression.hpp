#pragma once

// Covariate machinery for the regression model: a small formula language,
// design matrices, cubic B-spline bases, the multinomial-logit CSCF link and
// the logistic stick-breaking subclass link.
//
// Formula grammar (whitespace insignificant):
//
//   formula := "~" term ("+" term)*
//   term    := "1" | "-1" | NAME | factor "(" NAME ")" | smooth
//   factor  := "factor" | "as.factor"
//   smooth  := "s" "(" NAME "," ["basis" "="] "ps" "," "dof" "=" INT ")"
//
// An intercept is present unless "-1" appears. Without an intercept the first
// factor is coded with one dummy per level; every other factor drops its first
// level. Bare NAME terms are continuous and standardized.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nplcm/core.hpp"

namespace nplcm {

struct FormulaTerm {
  enum class Kind { Linear, Factor, Smooth };
  Kind kind = Kind::Linear;
  std::string column;
  int dof = 0;  // smooth terms only
};

struct Formula {
  std::string text;
  bool intercept = true;
  std::vector<FormulaTerm> terms;

  /// True when the design has no columns, i.e. no regression.
  bool is_empty() const { return !intercept && terms.empty(); }
  bool all_discrete() const;
  std::vector<std::string> columns() const;
};

/// Throws ValidationError on malformed input.
Formula parse_formula(const std::string& text);

/// Cubic (by default) B-spline basis with fixed knots.
class BSplineBasis {
 public:
  BSplineBasis() = default;
  /// `interior` must be sorted and lie strictly inside (lower, upper).
  BSplineBasis(double lower, double upper, std::vector<double> interior, int degree = 3);

  /// Knots at equally spaced quantiles of `x`, boundary at min/max.
  static BSplineBasis from_data(std::span<const double> x, int dof, int degree = 3);

  int size() const { return static_cast<int>(interior_.size()) + degree_ + 1; }
  int degree() const { return degree_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  const std::vector<double>& interior_knots() const { return interior_; }

  /// Basis values at `x`. Points outside [lower, upper] are clamped and
  /// `clamped` (if given) is set.
  Eigen::VectorXd evaluate(double x, bool* clamped = nullptr) const;

 private:
  double lower_ = 0.0;
  double upper_ = 1.0;
  std::vector<double> interior_;
  int degree_ = 3;
  std::vector<double> knots_;  // full augmented knot vector
};

/// N x dof matrix of basis rows for `x`.
Eigen::MatrixXd bspline_basis(std::span<const double> x, int dof, int degree = 3);

struct DesignBlock {
  enum class Kind { Intercept, Factor, Linear, Spline };
  Kind kind = Kind::Linear;
  std::string column;
  Eigen::Index begin = 0;
  Eigen::Index size = 0;
  std::vector<std::string> labels;  // one per design column
};

struct DesignMatrix {
  Eigen::MatrixXd x;  // N x P
  std::vector<DesignBlock> blocks;
  /// Set when any prediction-time value fell outside the spline boundary.
  bool clamped = false;

  Eigen::Index cols() const { return x.cols(); }
  std::vector<std::string> column_labels() const;
  /// Indices into `blocks` of spline blocks.
  std::vector<std::size_t> spline_blocks() const;
};

/// Stores everything learned from training covariates (factor levels,
/// standardization, knots) so new rows are encoded identically.
class DesignEncoder {
 public:
  DesignEncoder() = default;
  DesignEncoder(Formula formula, const CovariateTable& training);

  const Formula& formula() const { return formula_; }
  /// Throws ValidationError for unseen factor levels or missing columns.
  /// `rows_if_empty` sizes the design when the table has no columns.
  DesignMatrix encode(const CovariateTable& covariates, std::size_t rows_if_empty = 0) const;

 private:
  struct TermState {
    std::vector<std::string> levels;  // factors
    bool drop_first = false;          // factors
    double mean = 0.0, sd = 1.0;      // linear and smooth
    BSplineBasis basis;               // smooth
  };
  Formula formula_;
  std::vector<TermState> states_;
};

DesignMatrix build_design(const Formula& formula, const CovariateTable& covariates, std::size_t rows_if_empty = 0);

/// Stabilized softmax of the class linear predictors.
Eigen::VectorXd cscf_weights(const Eigen::Ref<const Eigen::VectorXd>& phi);

/// Class linear predictors phi = coef * design_row, coef is L x P.
Eigen::VectorXd cscf_weights(const Eigen::Ref<const Eigen::RowVectorXd>& design_row,
                             const Eigen::Ref<const Eigen::MatrixXd>& coef);

inline double logistic(double a) {
  return a >= 0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
}

/// log g(a) and log(1 - g(a)) without overflow.
double log_logistic(double a);
double log1m_logistic(double a);

/// Logistic stick-breaking weights from the K-1 stick linear predictors.
Eigen::VectorXd subclass_weights(std::span<const double> alpha);

/// Linear predictors for one arm: alpha_k = mu_k + design_row . coef.row(k).
Eigen::VectorXd stick_predictors(const Eigen::Ref<const Eigen::RowVectorXd>& design_row,
                                 const Eigen::Ref<const Eigen::VectorXd>& mu,
                                 const Eigen::Ref<const Eigen::MatrixXd>& coef);

/// Prior scales for regression coefficients.
struct CoefficientPrior {
  double coef_sd = 3.0;       // linear, intercept and factor coefficients
  double intercept_sd = 3.0;  // shared stick intercepts mu_k0
  double tau_shape = 0.5;     // spline random-walk precision
  double tau_rate = 0.5;
};

/// Log prior density (up to a constant) of one coefficient vector whose
/// spline blocks carry random-walk precisions `tau` (one per spline block, in
/// block order).
double coefficient_log_prior(const Eigen::Ref<const Eigen::VectorXd>& coef,
                             const DesignMatrix& design, std::span<const double> tau,
                             const CoefficientPrior& prior);

/// Sum of squared first differences within spline block `block`.
double spline_roughness(const Eigen::Ref<const Eigen::VectorXd>& coef, const DesignBlock& block);

}  // namespace nplcm
