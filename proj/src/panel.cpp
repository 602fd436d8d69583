#include "conformal_ts/panel.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "conformal_ts/errors.hpp"
#include "conformal_ts/tensor_io.hpp"

namespace cts {

namespace {

void require_finite(const Tensor& t, const std::string& name) {
    for (double v : t.values())
        if (!std::isfinite(v))
            throw ValidationError(name + " contains a non-finite value");
}

void require_dims3(const Tensor& t, std::size_t a, std::size_t b, std::size_t c,
                   const std::string& name) {
    if (t.ndim() != 3 || t.dim(0) != a || t.dim(1) != b || t.dim(2) != c)
        throw DimensionError(name + " must have shape [" + std::to_string(a) + "][" +
                             std::to_string(b) + "][" + std::to_string(c) + "]");
}

} // namespace

void PanelDims::validate() const {
    if (T == 0 || p == 0 || d1 == 0 || d2 == 0)
        throw DimensionError("panel dimensions must be strictly positive");
    if (T < d1 + 2)
        throw DimensionError("panel needs T >= d1 + 2, got T=" + std::to_string(T) +
                             ", d1=" + std::to_string(d1));
}

void PanelDataset::validate() const {
    dims.validate();
    require_dims3(predictions, dims.T, dims.p, dims.d1, "predictions");
    require_dims3(targets, dims.T, dims.p, dims.d1, "targets");
    require_dims3(features, dims.T, dims.p, dims.d2, "features");
    require_finite(predictions, "predictions");
    require_finite(targets, "targets");
    require_finite(features, "features");
}

Tensor align_targets(const Tensor& raw_series, std::size_t d1) {
    if (raw_series.ndim() != 2)
        throw DimensionError("raw series must be 2-d [T_raw][p]");
    const std::size_t T_raw = raw_series.dim(0);
    const std::size_t p = raw_series.dim(1);
    if (d1 == 0)
        throw DimensionError("d1 must be positive");
    if (T_raw <= d1)
        throw DimensionError("raw series too short: T_raw=" + std::to_string(T_raw) +
                             " needs at least d1+1=" + std::to_string(d1 + 1));
    Tensor out({T_raw - d1, p, d1});
    for (std::size_t t = 0; t < T_raw - d1; ++t)
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < d1; ++j)
                out(t, i, j) = raw_series(t + j + 1, i);
    return out;
}

ErrorTensor compute_errors(const PanelDataset& panel) {
    panel.validate();
    ErrorTensor err{Tensor(panel.targets.dims())};
    const std::size_t n = panel.targets.numel();
    for (std::size_t k = 0; k < n; ++k)
        err.s.values()[k] =
            std::abs(panel.targets.values()[k] - panel.predictions.values()[k]);
    return err;
}

namespace {

PanelDims read_dims_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw FileError("cannot open dims file: " + path.string());
    long long v[4];
    for (int k = 0; k < 4; ++k)
        if (!(in >> v[k]) || v[k] <= 0)
            throw ParseError("dims file must hold four positive integers: " +
                             path.string());
    PanelDims dims{static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]),
                   static_cast<std::size_t>(v[2]), static_cast<std::size_t>(v[3])};
    dims.validate();
    return dims;
}

} // namespace

PanelDataset load_dataset_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw FileError("dataset directory not found: " + dir.string());

    PanelDataset panel;
    panel.dims = read_dims_file(dir / "dims.txt");
    panel.predictions = read_tensor(dir / "predictions.ctsb");
    panel.features = read_tensor(dir / "features.ctsb");

    const fs::path aligned = dir / "targets.ctsb";
    const fs::path raw = dir / "raw_series.ctsb";
    if (fs::exists(aligned)) {
        panel.targets = read_tensor(aligned);
    } else if (fs::exists(raw)) {
        panel.targets = align_targets(read_tensor(raw), panel.dims.d1);
    } else {
        throw FileError("dataset needs targets.ctsb or raw_series.ctsb in " +
                        dir.string());
    }

    panel.validate();
    return panel;
}

void save_dataset_dir(const std::filesystem::path& dir, const PanelDataset& panel) {
    panel.validate();
    std::filesystem::create_directories(dir);
    write_tensor(dir / "predictions.ctsb", panel.predictions);
    write_tensor(dir / "targets.ctsb", panel.targets);
    write_tensor(dir / "features.ctsb", panel.features);
    std::ofstream dims(dir / "dims.txt", std::ios::binary | std::ios::trunc);
    if (!dims)
        throw FileError("cannot write dims.txt in " + dir.string());
    dims << panel.dims.T << ' ' << panel.dims.p << ' ' << panel.dims.d1 << ' '
         << panel.dims.d2 << '\n';
}

std::optional<Tensor> load_oracle_quantiles(const std::filesystem::path& dir,
                                            const PanelDims& dims) {
    const auto path = dir / "qstar.ctsb";
    if (!std::filesystem::exists(path))
        return std::nullopt;
    Tensor q = read_tensor(path);
    require_dims3(q, dims.T, dims.p, dims.d1, "qstar");
    require_finite(q, "qstar");
    return q;
}

} // namespace cts
