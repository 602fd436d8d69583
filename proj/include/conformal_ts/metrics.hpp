#pragma once

#include <cstddef>
#include <vector>

#include "conformal_ts/calibrator.hpp"

namespace cts {

// All coverage statistics are computed over resolved cells only
// (covered != -1); mean width averages over every issued cell, with EMPTY
// cells contributing width 0.
struct MetricsReport {
    std::size_t p = 0, d1 = 0;
    std::size_t resolved_count = 0;
    double coverage = 0.0;
    double mean_width = 0.0;
    std::vector<double> per_dim_coverage;      // [p]
    std::vector<double> per_horizon_coverage;  // [d1]
    double min_dim_coverage = 0.0;             // Min_d
    double min_horizon_coverage = 0.0;         // Min_t
    double approx_mace = 0.0;                  // mean over cells' windows
};

double global_coverage(const Trace& trace, std::size_t p, std::size_t d1);
double mean_width(const Trace& trace, std::size_t p, std::size_t d1);
std::vector<double> per_dim_coverage(const Trace& trace, std::size_t p,
                                     std::size_t d1);
std::vector<double> per_horizon_coverage(const Trace& trace, std::size_t p,
                                         std::size_t d1);

// Windowed local coverage of one cell (i, j): means over consecutive blocks
// of `window` resolved steps in time order, trailing partial block dropped.
// With `sliding`, every offset produces a window (stride 1).
std::vector<double> local_coverage(const Trace& trace, std::size_t i,
                                   std::size_t j, std::size_t d1,
                                   std::size_t window, bool sliding = false);

// Mean absolute deviation of a local-coverage series from 1 - alpha.
double approx_mace(const std::vector<double>& local, double alpha);

// Root-mean-square of qstar - qhat over aligned trajectories.
double sigma_fit(const std::vector<double>& qstar, const std::vector<double>& qhat);

MetricsReport compute_report(const Trace& trace, std::size_t p, std::size_t d1,
                             std::size_t window, double alpha,
                             bool sliding = false);

} // namespace cts
