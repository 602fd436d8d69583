#include "conformal_ts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "conformal_ts/errors.hpp"

namespace cts {

namespace {

void check_trace(const Trace& trace, std::size_t p, std::size_t d1) {
    if (p == 0 || d1 == 0)
        throw DimensionError("metrics need positive p and d1");
    const std::size_t n = p * d1;
    for (const auto& rec : trace)
        if (rec.covered.size() != n || rec.width.size() != n)
            throw DimensionError("trace record does not match p*d1 cells");
}

} // namespace

double global_coverage(const Trace& trace, std::size_t p, std::size_t d1) {
    check_trace(trace, p, d1);
    std::size_t resolved = 0, hits = 0;
    for (const auto& rec : trace)
        for (std::size_t k = 0; k < p * d1; ++k)
            if (rec.covered[k] != -1) {
                ++resolved;
                hits += rec.covered[k] == 1 ? 1u : 0u;
            }
    if (resolved == 0)
        throw InsufficientDataError("no resolved cells in trace");
    return static_cast<double>(hits) / static_cast<double>(resolved);
}

double mean_width(const Trace& trace, std::size_t p, std::size_t d1) {
    check_trace(trace, p, d1);
    if (trace.empty())
        throw InsufficientDataError("empty trace");
    double total = 0.0;
    for (const auto& rec : trace)
        for (std::size_t k = 0; k < p * d1; ++k)
            total += rec.width[k];
    return total / static_cast<double>(trace.size() * p * d1);
}

std::vector<double> per_dim_coverage(const Trace& trace, std::size_t p,
                                     std::size_t d1) {
    check_trace(trace, p, d1);
    std::vector<double> cov(p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        std::size_t resolved = 0, hits = 0;
        for (const auto& rec : trace)
            for (std::size_t j = 0; j < d1; ++j)
                if (rec.covered[i * d1 + j] != -1) {
                    ++resolved;
                    hits += rec.covered[i * d1 + j] == 1 ? 1u : 0u;
                }
        if (resolved == 0)
            throw InsufficientDataError("dimension " + std::to_string(i + 1) +
                                        " has no resolved cells");
        cov[i] = static_cast<double>(hits) / static_cast<double>(resolved);
    }
    return cov;
}

std::vector<double> per_horizon_coverage(const Trace& trace, std::size_t p,
                                         std::size_t d1) {
    check_trace(trace, p, d1);
    std::vector<double> cov(d1, 0.0);
    for (std::size_t j = 0; j < d1; ++j) {
        std::size_t resolved = 0, hits = 0;
        for (const auto& rec : trace)
            for (std::size_t i = 0; i < p; ++i)
                if (rec.covered[i * d1 + j] != -1) {
                    ++resolved;
                    hits += rec.covered[i * d1 + j] == 1 ? 1u : 0u;
                }
        if (resolved == 0)
            throw InsufficientDataError("horizon " + std::to_string(j + 1) +
                                        " has no resolved cells");
        cov[j] = static_cast<double>(hits) / static_cast<double>(resolved);
    }
    return cov;
}

std::vector<double> local_coverage(const Trace& trace, std::size_t i,
                                   std::size_t j, std::size_t d1,
                                   std::size_t window, bool sliding) {
    if (window == 0)
        throw ParameterError("window must be positive");
    // Resolved indicator sequence of cell (i, j) in issuance order.
    std::vector<double> seq;
    seq.reserve(trace.size());
    for (const auto& rec : trace) {
        const std::size_t k = i * d1 + j;
        if (k >= rec.covered.size())
            throw DimensionError("cell index outside trace records");
        if (rec.covered[k] != -1)
            seq.push_back(rec.covered[k] == 1 ? 1.0 : 0.0);
    }
    std::vector<double> out;
    if (seq.size() < window)
        return out;
    if (sliding) {
        double run = 0.0;
        for (std::size_t t = 0; t < window; ++t)
            run += seq[t];
        out.push_back(run / static_cast<double>(window));
        for (std::size_t t = window; t < seq.size(); ++t) {
            run += seq[t] - seq[t - window];
            out.push_back(run / static_cast<double>(window));
        }
    } else {
        for (std::size_t lo = 0; lo + window <= seq.size(); lo += window) {
            double sum = 0.0;
            for (std::size_t t = lo; t < lo + window; ++t)
                sum += seq[t];
            out.push_back(sum / static_cast<double>(window));
        }
    }
    return out;
}

double approx_mace(const std::vector<double>& local, double alpha) {
    if (local.empty())
        throw InsufficientDataError("no local-coverage windows");
    double total = 0.0;
    for (double w : local)
        total += std::abs(w - (1.0 - alpha));
    return total / static_cast<double>(local.size());
}

double sigma_fit(const std::vector<double>& qstar, const std::vector<double>& qhat) {
    if (qstar.size() != qhat.size())
        throw DimensionError("sigma_fit requires aligned trajectories");
    if (qstar.empty())
        throw InsufficientDataError("sigma_fit of empty trajectories");
    double total = 0.0;
    for (std::size_t k = 0; k < qstar.size(); ++k) {
        const double d = qstar[k] - qhat[k];
        total += d * d;
    }
    return std::sqrt(total / static_cast<double>(qstar.size()));
}

MetricsReport compute_report(const Trace& trace, std::size_t p, std::size_t d1,
                             std::size_t window, double alpha, bool sliding) {
    MetricsReport rep;
    rep.p = p;
    rep.d1 = d1;
    rep.coverage = global_coverage(trace, p, d1);
    rep.mean_width = mean_width(trace, p, d1);
    rep.per_dim_coverage = per_dim_coverage(trace, p, d1);
    rep.per_horizon_coverage = per_horizon_coverage(trace, p, d1);
    rep.min_dim_coverage = rep.per_dim_coverage[0];
    for (double c : rep.per_dim_coverage)
        rep.min_dim_coverage = std::min(rep.min_dim_coverage, c);
    rep.min_horizon_coverage = rep.per_horizon_coverage[0];
    for (double c : rep.per_horizon_coverage)
        rep.min_horizon_coverage = std::min(rep.min_horizon_coverage, c);

    for (const auto& rec : trace)
        for (std::size_t k = 0; k < p * d1; ++k)
            if (rec.covered[k] != -1)
                ++rep.resolved_count;

    // Approximate MACE: windows pooled over every cell.
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < d1; ++j) {
            const auto local = local_coverage(trace, i, j, d1, window, sliding);
            for (double w : local) {
                total += std::abs(w - (1.0 - alpha));
                ++count;
            }
        }
    }
    if (count == 0)
        throw InsufficientDataError("trace shorter than one local-coverage window");
    rep.approx_mace = total / static_cast<double>(count);
    return rep;
}

} // namespace cts
