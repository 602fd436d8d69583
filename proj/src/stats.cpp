#include "conformal_ts/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conformal_ts/errors.hpp"

namespace cts {

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw ParameterError("normal_quantile requires p in (0,1), got " +
                             std::to_string(p));
    double lo = -15.0, hi = 15.0;
    // 200 halvings take the bracket below 1 ulp around the root.
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (normal_cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-15)
            break;
    }
    return 0.5 * (lo + hi);
}

double abs_normal_quantile(double beta) {
    if (!(beta > 0.0 && beta < 1.0))
        throw ParameterError("abs_normal_quantile requires beta in (0,1), got " +
                             std::to_string(beta));
    return normal_quantile((1.0 + beta) / 2.0);
}

double quantile_from_sorted(const std::vector<double>& sorted, double level) {
    if (sorted.empty())
        throw InsufficientDataError("empirical quantile of an empty sample");
    const double n = static_cast<double>(sorted.size());
    // 1-based rank ceil(level * n), clamped so level <= 0 yields the minimum
    // and level >= 1 the maximum.
    double rank = std::ceil(level * n);
    if (rank < 1.0)
        rank = 1.0;
    if (rank > n)
        rank = n;
    return sorted[static_cast<std::size_t>(rank) - 1];
}

double empirical_quantile_higher(std::vector<double> values, double level) {
    std::sort(values.begin(), values.end());
    return quantile_from_sorted(values, level);
}

} // namespace cts
