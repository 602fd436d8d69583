#pragma once

#include <vector>

namespace cts {

// Standard normal CDF Phi(x).
double normal_cdf(double x);

// Inverse standard normal CDF, p in (0, 1). Solved by bisection on
// normal_cdf to ~1e-15; speed is irrelevant at the call sites.
double normal_quantile(double p);

// beta-quantile of |Z| for Z ~ N(0,1): Phi^{-1}((1 + beta) / 2).
double abs_normal_quantile(double beta);

// Empirical quantile with the "higher" convention: the order statistic at
// 1-based rank ceil(level * n), clamped to [1, n]. `sorted` must be
// ascending.
double quantile_from_sorted(const std::vector<double>& sorted, double level);

// Same, on unsorted data (sorts a copy).
double empirical_quantile_higher(std::vector<double> values, double level);

} // namespace cts
