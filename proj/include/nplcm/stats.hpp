#pragma once

// Small numeric helpers shared across modules.

#include <span>
#include <vector>

namespace nplcm {

/// log(sum(exp(v))); -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v);

/// Type-7 (linear interpolation) quantile of already sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

/// Type-7 quantile; copies and sorts.
double quantile(std::span<const double> v, double p);

double mean(std::span<const double> v);

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_sd(std::span<const double> v);

/// 64-bit FNV-1a, used for stable content hashes in run metadata.
unsigned long long fnv1a(std::span<const char> bytes);

}  // namespace nplcm
