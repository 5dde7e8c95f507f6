#pragma once

// Statistics shared by the sampler (on replicated data) and the posterior
// checks (on observed data), so both sides use identical definitions.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nplcm/core.hpp"

namespace nplcm {

struct PairTable {
  double n00 = 0, n01 = 0, n10 = 0, n11 = 0;
};

/// 2x2 table of items (a, b) over `rows`, skipping rows missing either item.
PairTable pair_table(const ResponseMatrix& m, std::span<const std::size_t> rows, std::size_t a, std::size_t b);

/// Log odds ratio; adds 0.5 to every cell when any cell is empty. nullopt
/// when the table is empty.
std::optional<double> log_odds_ratio(const PairTable& t);

/// True when either item is constant among the table's rows.
bool degenerate(const PairTable& t);

/// All item pairs (a < b) in row-major order.
std::vector<std::pair<std::size_t, std::size_t>> item_pairs(std::size_t num_items);

/// "0101..." for a complete row; nullopt when any entry is missing.
std::optional<std::string> pattern_key(const ResponseMatrix& m, std::size_t row);

}  // namespace nplcm
