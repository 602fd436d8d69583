#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include "conformal_ts/tensor.hpp"

namespace cts {

// Panel geometry: T issuance steps, p series, d1 horizons, d2 features.
struct PanelDims {
    std::size_t T = 0;
    std::size_t p = 0;
    std::size_t d1 = 0;
    std::size_t d2 = 0;

    // All dimensions strictly positive and T >= d1 + 2 so that at least one
    // cell of every horizon can resolve.
    void validate() const;

    bool operator==(const PanelDims&) const = default;
};

// Aligned forecast panel. predictions/targets are [T][p][d1], features is
// [T][p][d2]; cell (t, i, j) refers to wall-clock step t + j + 1 with the
// 0-based horizon index j used for storage (trace CSVs print j 1-based).
struct PanelDataset {
    PanelDims dims;
    Tensor predictions;
    Tensor targets;
    Tensor features;

    // Shape consistency and finiteness of every entry.
    void validate() const;
};

// Nonnegative absolute errors s = |targets - predictions|, [T][p][d1].
struct ErrorTensor {
    Tensor s;
};

// Aligns a raw series [T_raw][p] into a target tensor [T_raw - d1][p][d1]
// with out(t, i, j) = raw(t + j + 1, i) (0-based t and j).
Tensor align_targets(const Tensor& raw_series, std::size_t d1);

ErrorTensor compute_errors(const PanelDataset& panel);

// Dataset directory layout: predictions.ctsb, features.ctsb, dims.txt
// ("T p d1 d2"), plus either targets.ctsb (pre-aligned) or raw_series.ctsb
// (aligned on load). Optional qstar.ctsb carries oracle quantiles and
// manifest.txt generator settings; both are passed through untouched.
PanelDataset load_dataset_dir(const std::filesystem::path& dir);
void save_dataset_dir(const std::filesystem::path& dir, const PanelDataset& panel);

// Loads qstar.ctsb from a dataset directory if present.
std::optional<Tensor> load_oracle_quantiles(const std::filesystem::path& dir,
                                            const PanelDims& dims);

} // namespace cts
