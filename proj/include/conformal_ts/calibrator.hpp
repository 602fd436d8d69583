#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "conformal_ts/panel.hpp"
#include "conformal_ts/quantile_net.hpp"

namespace cts {

// Interval construction methods. The first three share the additive update
// a <- a + gamma * (1 - covered - alpha) applied when a cell resolves; the
// reference methods adapt a level (ACI), a quantile (ECI), or nothing (CP).
enum class Method {
    FFDCI,            // fitted q-hat + additive updates
    FFDCI_SFOGD,      // fitted q-hat + scale-free online gradient descent
    FFDCI_NO_UPDATE,  // fitted q-hat only (ablation)
    FFDCI_NO_FEATURE, // constant q-hat + additive updates (ablation)
    CP,               // fixed calibration quantile
    ACI,              // adaptive level over an error history quantile
    ECI,              // smoothed quantile-tracking recursion
};

Method parse_method(const std::string& name);
std::string method_name(Method m);
// True when the method centers intervals on a trained-net q-hat.
bool method_uses_net(Method m);
// True when the method needs the constant calibration quantile matrix.
bool method_uses_constant_quantile(Method m);

struct CalibratorConfig {
    Method method = Method::FFDCI;
    double alpha = 0.1;
    double gamma = 0.002;
    double eci_c = 0.2;
    std::size_t p = 0;
    std::size_t d1 = 0;
    // ACI error history: by default the fixed calibration errors (gamma = 0
    // then reproduces CP exactly). With aci_append, observed errors join the
    // history, optionally capped to the most recent aci_window entries.
    bool aci_append = false;
    std::size_t aci_window = 0;  // 0 = unbounded

    void validate() const;
};

// One issued interval layer: all (i, j) cells of step t, flattened i * d1 + j.
// EMPTY cells keep algebraic bounds (lo >= hi), zero width, and resolve to
// covered = 0; covered stays -1 until the cell's wall-clock step arrives.
struct IntervalRecord {
    std::size_t t = 0;  // 1-based issuance step
    std::vector<double> lo, hi, width;
    std::vector<double> a;  // per-cell adaptive state at issuance
    std::vector<std::int8_t> empty;
    std::vector<std::int8_t> covered;
};

using Trace = std::vector<IntervalRecord>;

// Interval from center, fitted quantile (>= 0) and adjustment: half-width
// h = qhat + a; h <= 0 yields the EMPTY interval. Width is computed as 2h,
// not hi - lo, so the update cross-check in tests sees exact arithmetic.
struct IntervalCell {
    double lo = 0.0, hi = 0.0, width = 0.0;
    bool empty = false;
};
IntervalCell build_interval(double yhat, double qhat, double a);

// Update kernels, exposed for direct testing.
double ffdci_update(double a, bool covered, double alpha, double gamma);
double sfogd_update(double a, double& grad_sq_sum, bool covered, double alpha,
                    double gamma);
double aci_level_update(double level, bool covered, double alpha, double gamma);
double eci_update(double q, double s, double alpha, double gamma, double c);

// Coverage deviation bound 2 * ((M + gamma) / (T * gamma) + (j + 1) / T) for
// the 0-based horizon index j.
double theorem1_bound(double M, double gamma, std::size_t T, std::size_t j);

// Conditional-coverage bound shape c * sqrt(sigma_fit + M * (j + 1) / T),
// 0-based j.
double mace_bound_rhs(double sigma_fit, double M, std::size_t j, std::size_t T,
                      double c_scale);

// Streaming calibrator. Deployment protocol per step t = 1, 2, ...:
// resolve all pending cells whose wall clock is t against y_now (applying
// the method's update), then issue the step-t intervals from the updated
// state. y_now may be null only when nothing is pending (t = 1).
class Calibrator {
public:
    Calibrator(CalibratorConfig cfg);

    // Calibration-split errors: builds the constant quantile matrix (CP,
    // NO_FEATURE), the ACI error history, and the ECI initial quantile.
    // Required before stepping for methods that use them.
    void set_calibration_errors(const ErrorTensor& calib_errors);

    // One deployment step. yhat/qhat are [p][d1] (qhat ignored for CP/ACI/
    // ECI/NO_FEATURE); y_now points at p realized values or is null.
    const IntervalRecord& step(const MatRM& yhat, const MatRM& qhat,
                               const double* y_now);

    const Trace& trace() const noexcept { return trace_; }
    Trace take_trace() { return std::move(trace_); }
    const CalibratorConfig& config() const noexcept { return cfg_; }

private:
    void resolve(std::size_t t, const double* y_now);
    std::size_t cell(std::size_t i, std::size_t j) const { return i * cfg_.d1 + j; }

    CalibratorConfig cfg_;
    bool calibrated_ = false;
    std::size_t step_ = 0;  // last issued step, 0 before the first

    // Per-cell adaptive state, indexed i * d1 + j.
    std::vector<double> a_;        // FFDCI family adjustment
    std::vector<double> gsq_;      // SFOGD squared-gradient sums
    std::vector<double> level_;    // ACI levels
    std::vector<double> q_eci_;    // ECI quantiles
    MatRM const_q_;                // [p][d1] calibration quantiles
    std::vector<std::vector<double>> aci_hist_;  // per-cell sorted errors
    std::vector<std::deque<double>> aci_fifo_;   // arrival order for capping

    // Ring over the last d1 issued records: slot (t - 1) % d1 -> trace index.
    std::vector<std::size_t> pending_;
    Trace trace_;
};

} // namespace cts
