#include "conformal_ts/calibrator.hpp"

#include <algorithm>
#include <cmath>

#include "conformal_ts/errors.hpp"
#include "conformal_ts/stats.hpp"

namespace cts {

Method parse_method(const std::string& name) {
    if (name == "ffdci") return Method::FFDCI;
    if (name == "ffdci_sfogd") return Method::FFDCI_SFOGD;
    if (name == "ffdci_no_update") return Method::FFDCI_NO_UPDATE;
    if (name == "ffdci_no_feature") return Method::FFDCI_NO_FEATURE;
    if (name == "cp") return Method::CP;
    if (name == "aci") return Method::ACI;
    if (name == "eci") return Method::ECI;
    throw ConfigError("unknown method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
    case Method::FFDCI: return "ffdci";
    case Method::FFDCI_SFOGD: return "ffdci_sfogd";
    case Method::FFDCI_NO_UPDATE: return "ffdci_no_update";
    case Method::FFDCI_NO_FEATURE: return "ffdci_no_feature";
    case Method::CP: return "cp";
    case Method::ACI: return "aci";
    case Method::ECI: return "eci";
    }
    throw InternalError("unhandled method enum");
}

bool method_uses_net(Method m) {
    return m == Method::FFDCI || m == Method::FFDCI_SFOGD ||
           m == Method::FFDCI_NO_UPDATE;
}

bool method_uses_constant_quantile(Method m) {
    return m == Method::CP || m == Method::FFDCI_NO_FEATURE || m == Method::ACI ||
           m == Method::ECI;
}

void CalibratorConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("alpha must lie in (0,1)");
    if (gamma < 0.0)
        throw ParameterError("gamma must be >= 0");
    if (eci_c <= 0.0)
        throw ParameterError("eci_c must be positive");
    if (p == 0 || d1 == 0)
        throw DimensionError("calibrator needs positive p and d1");
}

IntervalCell build_interval(double yhat, double qhat, double a) {
    if (qhat < 0.0)
        throw ValidationError("build_interval requires qhat >= 0");
    const double h = qhat + a;
    IntervalCell c;
    c.lo = yhat - h;
    c.hi = yhat + h;
    if (h <= 0.0) {
        c.empty = true;
        c.width = 0.0;
    } else {
        c.width = 2.0 * h;
    }
    return c;
}

double ffdci_update(double a, bool covered, double alpha, double gamma) {
    return a + gamma * (1.0 - (covered ? 1.0 : 0.0) - alpha);
}

double sfogd_update(double a, double& grad_sq_sum, bool covered, double alpha,
                    double gamma) {
    const double g = 1.0 - (covered ? 1.0 : 0.0) - alpha;
    grad_sq_sum += g * g;
    if (grad_sq_sum <= 0.0)
        return a;  // g == 0 can only happen for degenerate alpha
    return a + gamma / std::sqrt(grad_sq_sum) * g;
}

double aci_level_update(double level, bool covered, double alpha, double gamma) {
    const double next = level + gamma * (alpha - (covered ? 0.0 : 1.0));
    return std::clamp(next, 0.0, 1.0);
}

double eci_update(double q, double s, double alpha, double gamma, double c) {
    // Smoothed indicator f(x) = 1 / (1 + c e^{-x}); the recursion uses its
    // derivative f'(x) = c e^{-x} / (1 + c e^{-x})^2 at x = s - q.
    const double x = s - q;
    const double e = c * std::exp(-x);
    const double fprime = e / ((1.0 + e) * (1.0 + e));
    const double err = s > q ? 1.0 : 0.0;
    return q + gamma * (err - alpha - x * fprime);
}

double theorem1_bound(double M, double gamma, std::size_t T, std::size_t j) {
    if (!(M > 0.0) || !(gamma > 0.0) || T == 0)
        throw ParameterError("theorem1_bound needs M > 0, gamma > 0, T >= 1");
    const double Td = static_cast<double>(T);
    return 2.0 * ((M + gamma) / (Td * gamma) +
                  static_cast<double>(j + 1) / Td);
}

double mace_bound_rhs(double sigma_fit, double M, std::size_t j, std::size_t T,
                      double c_scale) {
    if (sigma_fit < 0.0 || M < 0.0 || T == 0 || c_scale < 0.0)
        throw ParameterError("mace_bound_rhs arguments out of range");
    return c_scale *
           std::sqrt(sigma_fit + M * static_cast<double>(j + 1) / static_cast<double>(T));
}

Calibrator::Calibrator(CalibratorConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t n = cfg_.p * cfg_.d1;
    a_.assign(n, 0.0);
    gsq_.assign(n, 0.0);
    level_.assign(n, cfg_.alpha);
    q_eci_.assign(n, 0.0);
    pending_.assign(cfg_.d1, static_cast<std::size_t>(-1));
    if (cfg_.method == Method::ACI) {
        aci_hist_.assign(n, {});
        aci_fifo_.assign(n, {});
    }
}

void Calibrator::set_calibration_errors(const ErrorTensor& calib_errors) {
    const Tensor& s = calib_errors.s;
    if (s.ndim() != 3 || s.dim(1) != cfg_.p || s.dim(2) != cfg_.d1)
        throw DimensionError("calibration errors must be [T_cal][p][d1]");
    if (step_ != 0)
        throw ProtocolError("calibration must precede the first step");
    const std::size_t T_cal = s.dim(0);

    const_q_ = MatRM(static_cast<Eigen::Index>(cfg_.p),
                     static_cast<Eigen::Index>(cfg_.d1));
    std::vector<double> column(T_cal);
    for (std::size_t i = 0; i < cfg_.p; ++i) {
        for (std::size_t j = 0; j < cfg_.d1; ++j) {
            for (std::size_t t = 0; t < T_cal; ++t)
                column[t] = s(t, i, j);
            std::sort(column.begin(), column.end());
            const double q = quantile_from_sorted(column, 1.0 - cfg_.alpha);
            const_q_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = q;
            if (cfg_.method == Method::ACI)
                aci_hist_[cell(i, j)] = column;  // kept sorted
            if (cfg_.method == Method::ECI)
                q_eci_[cell(i, j)] = q;
        }
    }
    calibrated_ = true;
}

void Calibrator::resolve(std::size_t t, const double* y_now) {
    for (std::size_t jj = 1; jj <= cfg_.d1; ++jj) {
        if (t <= jj)
            continue;  // issuance step t - jj does not exist yet
        const std::size_t issued = t - jj;
        const std::size_t slot = (issued - 1) % cfg_.d1;
        const std::size_t idx = pending_[slot];
        if (idx == static_cast<std::size_t>(-1))
            throw ProtocolError("missing pending record for step " +
                                std::to_string(issued));
        IntervalRecord& rec = trace_[idx];
        if (rec.t != issued)
            throw ProtocolError("pending ring out of order");
        const std::size_t j = jj - 1;  // 0-based horizon index of this layer
        for (std::size_t i = 0; i < cfg_.p; ++i) {
            const std::size_t k = cell(i, j);
            const double y = y_now[i];
            const bool covered =
                !rec.empty[k] && rec.lo[k] <= y && y <= rec.hi[k];
            rec.covered[k] = covered ? 1 : 0;

            switch (cfg_.method) {
            case Method::FFDCI:
            case Method::FFDCI_NO_FEATURE:
                a_[k] = ffdci_update(a_[k], covered, cfg_.alpha, cfg_.gamma);
                break;
            case Method::FFDCI_SFOGD:
                a_[k] = sfogd_update(a_[k], gsq_[k], covered, cfg_.alpha, cfg_.gamma);
                break;
            case Method::FFDCI_NO_UPDATE:
            case Method::CP:
                break;
            case Method::ACI: {
                level_[k] = aci_level_update(level_[k], covered, cfg_.alpha, cfg_.gamma);
                if (cfg_.aci_append) {
                    // Observed score of the resolved cell: |y - yhat| with
                    // yhat recovered from the stored algebraic bounds.
                    const double score = std::abs(y - 0.5 * (rec.lo[k] + rec.hi[k]));
                    auto& hist = aci_hist_[k];
                    hist.insert(std::upper_bound(hist.begin(), hist.end(), score),
                                score);
                    auto& fifo = aci_fifo_[k];
                    fifo.push_back(score);
                    if (cfg_.aci_window > 0 && fifo.size() > cfg_.aci_window) {
                        const double oldest = fifo.front();
                        fifo.pop_front();
                        hist.erase(std::lower_bound(hist.begin(), hist.end(), oldest));
                    }
                }
                break;
            }
            case Method::ECI: {
                const double score = std::abs(y - 0.5 * (rec.lo[k] + rec.hi[k]));
                q_eci_[k] = eci_update(q_eci_[k], score, cfg_.alpha, cfg_.gamma,
                                       cfg_.eci_c);
                break;
            }
            }
        }
    }
}

const IntervalRecord& Calibrator::step(const MatRM& yhat, const MatRM& qhat,
                                       const double* y_now) {
    const std::size_t t = step_ + 1;
    if (method_uses_constant_quantile(cfg_.method) && !calibrated_)
        throw ProtocolError("method requires set_calibration_errors first");
    if (yhat.rows() != static_cast<Eigen::Index>(cfg_.p) ||
        yhat.cols() != static_cast<Eigen::Index>(cfg_.d1))
        throw DimensionError("yhat must be [p][d1]");
    const bool needs_qhat = method_uses_net(cfg_.method);
    if (needs_qhat && (qhat.rows() != yhat.rows() || qhat.cols() != yhat.cols()))
        throw DimensionError("qhat must be [p][d1]");

    if (t > 1) {
        if (!y_now)
            throw ProtocolError("y_now required once intervals are pending");
        resolve(t, y_now);
    }

    IntervalRecord rec;
    rec.t = t;
    const std::size_t n = cfg_.p * cfg_.d1;
    rec.lo.resize(n);
    rec.hi.resize(n);
    rec.width.resize(n);
    rec.a.resize(n);
    rec.empty.resize(n);
    rec.covered.assign(n, -1);

    for (std::size_t i = 0; i < cfg_.p; ++i) {
        for (std::size_t j = 0; j < cfg_.d1; ++j) {
            const std::size_t k = cell(i, j);
            const auto ei = static_cast<Eigen::Index>(i);
            const auto ej = static_cast<Eigen::Index>(j);
            double q = 0.0;      // fitted/base quantile, >= 0
            double adj = 0.0;    // additive part of the half-width
            double state = 0.0;  // recorded adaptive state
            switch (cfg_.method) {
            case Method::FFDCI:
            case Method::FFDCI_SFOGD:
                q = qhat(ei, ej);
                adj = state = a_[k];
                break;
            case Method::FFDCI_NO_UPDATE:
                q = qhat(ei, ej);
                break;
            case Method::FFDCI_NO_FEATURE:
                q = const_q_(ei, ej);
                adj = state = a_[k];
                break;
            case Method::CP:
                q = const_q_(ei, ej);
                break;
            case Method::ACI:
                // Half-width is the (1 - level) history quantile; level = 0
                // selects the widest (maximum) stored error.
                q = quantile_from_sorted(aci_hist_[k], 1.0 - level_[k]);
                state = level_[k];
                break;
            case Method::ECI:
                adj = state = q_eci_[k];
                break;
            }
            if (q < 0.0)
                throw ValidationError("fitted quantile must be >= 0");
            const IntervalCell c = build_interval(yhat(ei, ej), q, adj);
            rec.lo[k] = c.lo;
            rec.hi[k] = c.hi;
            rec.width[k] = c.width;
            rec.empty[k] = c.empty ? 1 : 0;
            // For ACI the recorded state is the level; for ECI the tracked
            // quantile; otherwise the additive adjustment.
            rec.a[k] = state;
        }
    }

    trace_.push_back(std::move(rec));
    pending_[(t - 1) % cfg_.d1] = trace_.size() - 1;
    step_ = t;
    return trace_.back();
}

} // namespace cts
