#pragma once

// Forward simulation from the nested partially-latent class model.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nplcm/core.hpp"

namespace nplcm {

/// One covariate stratum of a multi-site recipe.
struct Stratum {
  std::string label;
  int nd = 0;
  int nu = 0;
  std::vector<double> etiology;
};

struct SimulationRecipe {
  int nd = 0;  // cases
  int nu = 0;  // controls
  CauseList cause_list;
  std::vector<double> etiology;  // length L simplex
  std::vector<std::string> pathogen_brs;
  std::vector<std::string> pathogen_ss;
  Eigen::MatrixXd psi_bs;    // J x K
  Eigen::MatrixXd theta_bs;  // J x K
  Eigen::VectorXd eta;       // K, case subclass weights
  Eigen::VectorXd lambda;    // K, control subclass weights
  std::vector<double> theta_ss;  // one per pathogen_ss item
  std::string brs_name = "MBS1";
  std::string ss_name = "MSS1";
  std::uint64_t seed = 1;

  /// When non-empty, each stratum is simulated with its own counts and
  /// etiology, then the sites are stacked with a `stratum_column` covariate.
  std::vector<Stratum> strata;
  std::string stratum_column = "SITE";
  bool case_first = false;

  int num_subclasses() const { return static_cast<int>(psi_bs.cols()); }
};

/// Throws ValidationError when the recipe is inconsistent.
void check_recipe(const SimulationRecipe& r);

/// Latent truth behind a simulated dataset.
struct SimulationTruth {
  std::vector<int> cls;  // per subject, 0 for controls
  std::vector<int> z;    // per subject, 0-based
  std::vector<std::string> stratum;  // empty without strata
};

struct Simulation {
  Dataset data;
  SimulationTruth truth;
};

Simulation simulate(const SimulationRecipe& recipe);

/// Row-concatenates datasets with identical slice schemas and adds a
/// `column` covariate holding each dataset's label (numeric when every label
/// parses as a number). With `case_first`, rows are stably reordered so
/// cases come first; `order` (if given) receives the source row of every
/// output row.
Dataset combine_and_reorder(const std::vector<Dataset>& parts, const std::vector<std::string>& labels,
                            const std::string& column = "SITE", bool case_first = false,
                            std::vector<std::size_t>* order = nullptr);

}  // namespace nplcm
