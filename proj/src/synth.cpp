#include "conformal_ts/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "conformal_ts/errors.hpp"
#include "conformal_ts/stats.hpp"
#include "conformal_ts/tensor_io.hpp"

namespace cts {

Regime parse_regime(const std::string& name) {
    if (name == "stationary") return Regime::STATIONARY;
    if (name == "heteroscedastic") return Regime::HETEROSCEDASTIC;
    if (name == "shift") return Regime::SHIFT;
    throw ConfigError("unknown regime: " + name);
}

std::string regime_name(Regime r) {
    switch (r) {
    case Regime::STATIONARY: return "stationary";
    case Regime::HETEROSCEDASTIC: return "heteroscedastic";
    case Regime::SHIFT: return "shift";
    }
    throw InternalError("unhandled regime enum");
}

void OracleConfig::validate() const {
    dims.validate();
    if (!(M > 0.0))
        throw ParameterError("M must be positive");
    if (!(noise_base > 0.0))
        throw ParameterError("noise_base must be positive");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ParameterError("alpha must lie in (0,1)");
    if (!w.empty() && w.size() != dims.d2)
        throw DimensionError("weight vector must have d2 entries");
    if (regime == Regime::SHIFT) {
        if (!(shift_kappa > 0.0))
            throw ParameterError("shift_kappa must be positive");
        if (shift_step < 1 || shift_step > dims.T)
            throw ParameterError("shift_step must lie in [1, T]");
    }
}

OraclePanel generate(const OracleConfig& cfg) {
    cfg.validate();
    const std::size_t T = cfg.dims.T, p = cfg.dims.p, d1 = cfg.dims.d1,
                      d2 = cfg.dims.d2;

    OraclePanel panel;
    panel.config = cfg;
    panel.dataset.dims = cfg.dims;
    panel.dataset.predictions = Tensor({T, p, d1});
    panel.dataset.targets = Tensor({T, p, d1});
    panel.dataset.features = Tensor({T, p, d2});
    panel.qstar = Tensor({T, p, d1});

    const double z_level = abs_normal_quantile(1.0 - cfg.alpha);

    // Smooth realized series over wall-clock steps 1..T+d1 so that all cells
    // of a wall-clock step share one value; predictions then differ from it
    // by exactly the drawn error.
    auto realized = [&](std::size_t wall, std::size_t i) {
        const double x = static_cast<double>(wall);
        return 10.0 * std::sin(2.0 * 3.14159265358979323846 * x / 97.0 +
                               static_cast<double>(i));
    };

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < p; ++i) {
            // Feature row; the noise scale is driven by w . z, clamped so
            // sigma stays in a numerically sane band.
            double wz = 0.0;
            for (std::size_t k = 0; k < d2; ++k) {
                const double z = gauss(rng);
                panel.dataset.features(t, i, k) = z;
                if (!cfg.w.empty())
                    wz += cfg.w[k] * z;
            }
            if (cfg.regime == Regime::STATIONARY)
                wz = 0.0;
            double sigma = std::exp(std::clamp(wz, -2.0, 2.0)) * cfg.noise_base;
            if (cfg.regime == Regime::SHIFT && t + 1 >= cfg.shift_step)
                sigma *= cfg.shift_kappa;

            const double qcell = std::min(cfg.M, sigma * z_level);
            for (std::size_t j = 0; j < d1; ++j) {
                const double s = std::min(cfg.M, sigma * std::abs(gauss(rng)));
                const bool flip = (rng() & 1u) != 0;
                const double r = realized(t + j + 2, i);  // wall clock, 1-based
                panel.dataset.targets(t, i, j) = r;
                panel.dataset.predictions(t, i, j) = flip ? r - s : r + s;
                panel.qstar(t, i, j) = qcell;
            }
        }
    }

    panel.dataset.validate();
    return panel;
}

double oracle_coverage_check(const OraclePanel& panel) {
    const auto& d = panel.dataset;
    const std::size_t n = d.targets.numel();
    if (n == 0)
        throw InsufficientDataError("empty oracle panel");
    std::size_t hits = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double s =
            std::abs(d.targets.values()[k] - d.predictions.values()[k]);
        if (s <= panel.qstar.values()[k])
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

void save_oracle_panel(const std::filesystem::path& dir, const OraclePanel& panel) {
    save_dataset_dir(dir, panel.dataset);
    write_tensor(dir / "qstar.ctsb", panel.qstar);

    const auto& cfg = panel.config;
    std::ofstream out(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
    if (!out)
        throw FileError("cannot write manifest.txt in " + dir.string());
    out << "M=" << format_double(cfg.M) << '\n'
        << "T=" << cfg.dims.T << '\n'
        << "alpha=" << format_double(cfg.alpha) << '\n'
        << "d1=" << cfg.dims.d1 << '\n'
        << "d2=" << cfg.dims.d2 << '\n'
        << "noise_base=" << format_double(cfg.noise_base) << '\n'
        << "p=" << cfg.dims.p << '\n'
        << "regime=" << regime_name(cfg.regime) << '\n'
        << "seed=" << cfg.seed << '\n'
        << "shift_kappa=" << format_double(cfg.shift_kappa) << '\n'
        << "shift_step=" << cfg.shift_step << '\n';
    out << "w=";
    for (std::size_t k = 0; k < cfg.w.size(); ++k)
        out << (k ? "," : "") << format_double(cfg.w[k]);
    out << '\n';
    if (!out)
        throw FileError("failed writing manifest.txt in " + dir.string());
}

} // namespace cts
