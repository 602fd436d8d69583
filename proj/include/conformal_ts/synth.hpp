#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "conformal_ts/panel.hpp"

namespace cts {

// Noise regimes. STATIONARY ignores the feature weights (constant scale);
// HETEROSCEDASTIC drives the scale from the features; SHIFT multiplies the
// scale by kappa from issuance step shift_step on.
enum class Regime { STATIONARY, HETEROSCEDASTIC, SHIFT };

Regime parse_regime(const std::string& name);
std::string regime_name(Regime r);

struct OracleConfig {
    PanelDims dims;
    Regime regime = Regime::STATIONARY;
    double M = 10.0;            // hard cap on |error| scores
    std::vector<double> w;      // d2 feature weights (empty = zeros)
    double noise_base = 1.0;    // baseline scale
    std::size_t shift_step = 0; // 1-based issuance step where SHIFT kicks in
    double shift_kappa = 1.0;   // scale multiplier after the shift
    double alpha = 0.1;         // level for the oracle quantiles
    std::uint64_t seed = 0;

    void validate() const;
};

// A synthetic panel whose per-cell error law is known exactly. A consistent
// realized series r(t, i) makes every horizon's cell resolve against the
// value its own error was drawn for: predictions(t, i, j) =
// r(t + j + 1, i) -/+ s(t, i, j) and targets(t, i, j) = r(t + j + 1, i).
// The oracle half-width is qstar(t, i, j) = min(M, sigma(t, i) * z_{1-alpha})
// with z_beta the beta-quantile of |N(0, 1)|.
struct OraclePanel {
    OracleConfig config;
    PanelDataset dataset;
    Tensor qstar;  // [T][p][d1]
};

OraclePanel generate(const OracleConfig& cfg);

// Fraction of cells whose drawn error lies inside the oracle interval;
// converges to 1 - alpha by construction.
double oracle_coverage_check(const OraclePanel& panel);

// Writes dataset files plus qstar.ctsb and manifest.txt (generator settings
// as sorted key=value lines) into `dir`.
void save_oracle_panel(const std::filesystem::path& dir, const OraclePanel& panel);

} // namespace cts
