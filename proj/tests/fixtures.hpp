#pragma once

// Small builders shared by the test binaries.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nplcm/core.hpp"
#include "nplcm/datagen.hpp"
#include "nplcm/model.hpp"

namespace fixtures {

using namespace nplcm;

inline std::vector<std::string> letters(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(1, static_cast<char>('A' + i)));
  return out;
}

/// Rows of 0/1/-1 (missing).
inline ResponseMatrix responses(const std::vector<std::vector<int>>& rows) {
  ResponseMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(i, j) = rows[i][j] < 0 ? Response::Missing : (rows[i][j] == 1 ? Response::Positive : Response::Negative);
  return m;
}

inline MeasurementSlice brs(const std::string& name, std::vector<std::string> items,
                            const std::vector<std::vector<int>>& rows) {
  return {name, Quality::BrS, std::move(items), responses(rows)};
}

inline MeasurementSlice ss(const std::string& name, std::vector<std::string> items,
                           const std::vector<std::vector<int>>& rows) {
  return {name, Quality::SS, std::move(items), responses(rows)};
}

/// The six-cause recipe used across examples: K = 2, cases all in subclass 2.
inline SimulationRecipe six_cause_recipe(int nd = 300, int nu = 300, std::uint64_t seed = 11) {
  SimulationRecipe r;
  r.nd = nd;
  r.nu = nu;
  r.cause_list = CauseList(letters(6));
  r.etiology = {0.5, 0.2, 0.15, 0.05, 0.05, 0.05};
  r.pathogen_brs = letters(6);
  r.pathogen_ss = {"A", "B"};
  r.psi_bs.resize(6, 2);
  r.psi_bs << 0.25, 0.2, 0.25, 0.2, 0.2, 0.25, 0.15, 0.1, 0.15, 0.1, 0.15, 0.1;
  r.theta_bs.resize(6, 2);
  r.theta_bs << 0.95, 0.95, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9;
  r.eta.resize(2);
  r.eta << 0.0, 1.0;
  r.lambda.resize(2);
  r.lambda << 0.5, 0.5;
  r.theta_ss = {0.15, 0.1};
  r.seed = seed;
  return r;
}

inline ModelSpec six_cause_spec(int k, bool with_ss) {
  ModelSpec m;
  m.use_measurements = with_ss ? std::vector<Quality>{Quality::BrS, Quality::SS} : std::vector<Quality>{Quality::BrS};
  m.cause_list = CauseList(letters(6));
  m.default_k = k;
  m.tpr_prior["MBS1"] = std::vector<BetaRange>(6, BetaRange{0.55, 0.99});
  if (with_ss) m.tpr_prior["MSS1"] = std::vector<BetaRange>(2, BetaRange{0.01, 0.5});
  return m;
}

/// Probability of a binary response, written out directly.
inline double bern(Response r, double p) {
  if (r == Response::Missing) return 1.0;
  return r == Response::Positive ? p : 1.0 - p;
}

}  // namespace fixtures
