#include "nplcm/ppc_stats.hpp"

#include <cmath>

namespace nplcm {

PairTable pair_table(const ResponseMatrix& m, std::span<const std::size_t> rows, std::size_t a, std::size_t b) {
  PairTable t;
  for (auto i : rows) {
    const Response ra = m(i, a), rb = m(i, b);
    if (ra == Response::Missing || rb == Response::Missing) continue;
    const bool pa = ra == Response::Positive, pb = rb == Response::Positive;
    if (pa && pb) ++t.n11;
    else if (pa) ++t.n10;
    else if (pb) ++t.n01;
    else ++t.n00;
  }
  return t;
}

std::optional<double> log_odds_ratio(const PairTable& t) {
  if (t.n00 + t.n01 + t.n10 + t.n11 == 0) return std::nullopt;
  double n00 = t.n00, n01 = t.n01, n10 = t.n10, n11 = t.n11;
  if (n00 == 0 || n01 == 0 || n10 == 0 || n11 == 0) {
    n00 += 0.5;
    n01 += 0.5;
    n10 += 0.5;
    n11 += 0.5;
  }
  return std::log(n11) + std::log(n00) - std::log(n10) - std::log(n01);
}

bool degenerate(const PairTable& t) {
  const bool a_const = (t.n10 + t.n11 == 0) || (t.n00 + t.n01 == 0);
  const bool b_const = (t.n01 + t.n11 == 0) || (t.n00 + t.n10 == 0);
  return a_const || b_const;
}

std::vector<std::pair<std::size_t, std::size_t>> item_pairs(std::size_t num_items) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < num_items; ++a)
    for (std::size_t b = a + 1; b < num_items; ++b) out.emplace_back(a, b);
  return out;
}

std::optional<std::string> pattern_key(const ResponseMatrix& m, std::size_t row) {
  std::string key(m.cols(), '0');
  for (std::size_t j = 0; j < m.cols(); ++j) {
    const Response r = m(row, j);
    if (r == Response::Missing) return std::nullopt;
    if (r == Response::Positive) key[j] = '1';
  }
  return key;
}

}  // namespace nplcm
