#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "conformal_ts/errors.hpp"
#include "conformal_ts/panel.hpp"
#include "conformal_ts/tensor_io.hpp"

using namespace cts;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
    const fs::path dir = fs::temp_directory_path() / "cts_test_panel" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

PanelDataset small_panel(std::uint64_t seed) {
    PanelDataset panel;
    panel.dims = {6, 2, 2, 3};
    panel.predictions = Tensor({6, 2, 2});
    panel.targets = Tensor({6, 2, 2});
    panel.features = Tensor({6, 2, 3});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (double& v : panel.predictions.values())
        v = u(rng);
    for (double& v : panel.targets.values())
        v = u(rng);
    for (double& v : panel.features.values())
        v = u(rng);
    return panel;
}

} // namespace

TEST_CASE("dims validation") {
    PanelDims ok{6, 2, 2, 3};
    ok.validate();
    CHECK_THROWS_AS((PanelDims{0, 2, 2, 3}.validate()), DimensionError);
    CHECK_THROWS_AS((PanelDims{6, 0, 2, 3}.validate()), DimensionError);
    CHECK_THROWS_AS((PanelDims{6, 2, 0, 3}.validate()), DimensionError);
    CHECK_THROWS_AS((PanelDims{6, 2, 2, 0}.validate()), DimensionError);
    // T must be at least d1 + 2.
    CHECK_THROWS_AS((PanelDims{3, 2, 2, 3}.validate()), DimensionError);
    PanelDims edge{4, 2, 2, 3};
    edge.validate();
}

TEST_CASE("align_targets walks the raw series forward") {
    // raw is [T_raw][p]; cell (t, i, j) must equal raw(t + j + 1, i).
    Tensor raw({6, 2});
    for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t i = 0; i < 2; ++i)
            raw(t, i) = 10.0 * static_cast<double>(t) + static_cast<double>(i);
    const Tensor out = align_targets(raw, 2);
    REQUIRE(out.dims() == std::vector<std::size_t>{4, 2, 2});
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                CHECK(out(t, i, j) == raw(t + j + 1, i));
    // Consecutive cells of one wall-clock step agree.
    for (std::size_t t = 0; t + 1 < 4; ++t)
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(out(t + 1, i, 0) == out(t, i, 1));

    CHECK_THROWS_AS(align_targets(raw, 0), DimensionError);
    CHECK_THROWS_AS(align_targets(raw, 6), DimensionError);
    CHECK_THROWS_AS(align_targets(Tensor({4}), 1), DimensionError);
}

TEST_CASE("compute_errors takes absolute differences") {
    PanelDataset panel = small_panel(11);
    const ErrorTensor err = compute_errors(panel);
    for (std::size_t k = 0; k < err.s.numel(); ++k) {
        const double expect = std::abs(panel.targets.values()[k] -
                                       panel.predictions.values()[k]);
        CHECK(err.s.values()[k] == expect);
        CHECK(err.s.values()[k] >= 0.0);
    }

    // Swapping predictions and targets leaves the errors unchanged.
    PanelDataset swapped = panel;
    std::swap(swapped.predictions, swapped.targets);
    const ErrorTensor err2 = compute_errors(swapped);
    CHECK(err.s.values() == err2.s.values());
}

TEST_CASE("non-finite entries are rejected") {
    PanelDataset panel = small_panel(12);
    panel.targets(3, 1, 0) = std::nan("");
    CHECK_THROWS_AS(panel.validate(), ValidationError);
    panel.targets(3, 1, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(compute_errors(panel), ValidationError);
}

TEST_CASE("shape mismatches are rejected") {
    PanelDataset panel = small_panel(13);
    panel.features = Tensor({6, 2, 1});  // d2 says 3
    CHECK_THROWS_AS(panel.validate(), DimensionError);
    panel = small_panel(13);
    panel.predictions = Tensor({5, 2, 2});
    CHECK_THROWS_AS(panel.validate(), DimensionError);
}

TEST_CASE("dataset directory round trip") {
    const fs::path dir = temp_dir("roundtrip");
    PanelDataset panel = small_panel(14);
    save_dataset_dir(dir, panel);
    const PanelDataset back = load_dataset_dir(dir);
    CHECK(back.dims == panel.dims);
    CHECK(back.predictions.values() == panel.predictions.values());
    CHECK(back.targets.values() == panel.targets.values());
    CHECK(back.features.values() == panel.features.values());
}

TEST_CASE("raw series datasets are aligned on load") {
    const fs::path dir = temp_dir("raw");
    Tensor raw({8, 2});
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (double& v : raw.values())
        v = u(rng);
    const Tensor aligned = align_targets(raw, 2);  // [6][2][2]

    PanelDataset panel = small_panel(16);  // supplies predictions/features shapes
    write_tensor(dir / "predictions.ctsb", panel.predictions);
    write_tensor(dir / "features.ctsb", panel.features);
    write_tensor(dir / "raw_series.ctsb", raw);
    std::ofstream(dir / "dims.txt") << "6 2 2 3\n";

    const PanelDataset loaded = load_dataset_dir(dir);
    CHECK(loaded.targets.values() == aligned.values());
}

TEST_CASE("dataset directory failure modes") {
    const fs::path dir = temp_dir("failures");
    PanelDataset panel = small_panel(17);

    SUBCASE("missing directory") {
        CHECK_THROWS_AS(load_dataset_dir(dir / "nope"), FileError);
    }
    SUBCASE("missing targets and raw series") {
        write_tensor(dir / "predictions.ctsb", panel.predictions);
        write_tensor(dir / "features.ctsb", panel.features);
        std::ofstream(dir / "dims.txt") << "6 2 2 3\n";
        CHECK_THROWS_AS(load_dataset_dir(dir), FileError);
    }
    SUBCASE("dims file disagrees with tensors") {
        save_dataset_dir(dir, panel);
        std::ofstream(dir / "dims.txt", std::ios::trunc) << "6 2 2 4\n";
        CHECK_THROWS_AS(load_dataset_dir(dir), DimensionError);
    }
    SUBCASE("unparseable dims file") {
        save_dataset_dir(dir, panel);
        std::ofstream(dir / "dims.txt", std::ios::trunc) << "6 2 x 3\n";
        CHECK_THROWS_AS(load_dataset_dir(dir), ParseError);
    }
}

TEST_CASE("oracle quantiles load when present") {
    const fs::path dir = temp_dir("qstar");
    PanelDataset panel = small_panel(18);
    save_dataset_dir(dir, panel);
    CHECK(!load_oracle_quantiles(dir, panel.dims).has_value());

    Tensor q({6, 2, 2}, 1.5);
    write_tensor(dir / "qstar.ctsb", q);
    const auto loaded = load_oracle_quantiles(dir, panel.dims);
    REQUIRE(loaded.has_value());
    CHECK(loaded->values() == q.values());

    write_tensor(dir / "qstar.ctsb", Tensor({5, 2, 2}, 1.0));
    CHECK_THROWS_AS(load_oracle_quantiles(dir, panel.dims), DimensionError);
}
