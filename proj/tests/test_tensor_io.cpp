#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "conformal_ts/errors.hpp"
#include "conformal_ts/tensor.hpp"
#include "conformal_ts/tensor_io.hpp"

using namespace cts;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "cts_test_tensor_io";
    fs::create_directories(dir);
    return dir;
}

std::vector<char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

Tensor random_tensor(std::vector<std::size_t> dims, std::uint64_t seed) {
    Tensor t(dims);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (double& v : t.values())
        v = u(rng);
    return t;
}

} // namespace

TEST_CASE("tensor indexing and shape checks") {
    Tensor t({2, 3});
    t(1, 2) = 7.5;
    CHECK(t(1, 2) == 7.5);
    CHECK(t.numel() == 6);
    CHECK_THROWS_AS(t(0), DimensionError);        // rank mismatch
    CHECK_THROWS_AS(t(2, 0), DimensionError);     // out of range
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{}), DimensionError);
}

TEST_CASE("file layout: header plus row-major payload") {
    // 2x3 f64 record: 5 magic + 1 dtype + 1 ndim + 2*8 dims + 6*8 payload.
    const fs::path path = temp_dir() / "layout.ctsb";
    Tensor t({2, 3});
    for (std::size_t k = 0; k < 6; ++k)
        t.values()[k] = static_cast<double>(k);
    write_tensor(path, t, DType::F64);
    const auto bytes = slurp(path);
    CHECK(bytes.size() == 5 + 1 + 1 + 16 + 48);
    CHECK(bytes[0] == 'C');
    CHECK(bytes[1] == 'T');
    CHECK(bytes[2] == 'S');
    CHECK(bytes[3] == 'B');
    CHECK(bytes[4] == '1');
    CHECK(bytes[5] == 1);  // f64
    CHECK(bytes[6] == 2);  // ndim
    // dims little-endian: 2 then 3
    CHECK(static_cast<unsigned char>(bytes[7]) == 2);
    CHECK(static_cast<unsigned char>(bytes[15]) == 3);
}

TEST_CASE("round trip is bit-identical for both dtypes and ndims 1..4") {
    const fs::path dir = temp_dir();
    const std::vector<std::vector<std::size_t>> shapes = {
        {7}, {3, 4}, {2, 3, 4}, {2, 2, 3, 2}};
    int case_id = 0;
    for (const auto& shape : shapes) {
        for (DType dt : {DType::F32, DType::F64}) {
            ++case_id;
            Tensor t = random_tensor(shape, 1000 + static_cast<std::uint64_t>(case_id));
            const fs::path p1 = dir / ("rt_a_" + std::to_string(case_id) + ".ctsb");
            const fs::path p2 = dir / ("rt_b_" + std::to_string(case_id) + ".ctsb");
            write_tensor(p1, t, dt);
            DType seen;
            Tensor back = read_tensor(p1, &seen);
            CHECK(seen == dt);
            REQUIRE(back.dims() == t.dims());
            // Re-serialize what was read: the files must match byte for byte.
            write_tensor(p2, back, dt);
            CHECK(slurp(p1) == slurp(p2));
            if (dt == DType::F64) {
                for (std::size_t k = 0; k < t.numel(); ++k)
                    CHECK(back.values()[k] == t.values()[k]);
            } else {
                for (std::size_t k = 0; k < t.numel(); ++k)
                    CHECK(back.values()[k] ==
                          static_cast<double>(static_cast<float>(t.values()[k])));
            }
        }
    }
}

TEST_CASE("several records share one stream") {
    std::stringstream ss;
    Tensor a = random_tensor({4}, 1);
    Tensor b = random_tensor({2, 2}, 2);
    write_tensor(ss, a, DType::F64);
    write_tensor(ss, b, DType::F32);
    ss.seekg(0);
    Tensor a2 = read_tensor(ss);
    Tensor b2 = read_tensor(ss);
    CHECK(a2.dims() == a.dims());
    CHECK(b2.dims() == b.dims());
    CHECK(a2.values() == a.values());
}

TEST_CASE("malformed headers raise format errors with byte offsets") {
    const fs::path dir = temp_dir();
    const fs::path good = dir / "good.ctsb";
    write_tensor(good, random_tensor({2, 3}, 3), DType::F64);

    auto corrupt_at = [&](std::size_t offset, char value) {
        auto bytes = slurp(good);
        bytes[offset] = value;
        const fs::path bad = dir / "bad.ctsb";
        std::ofstream out(bad, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        return bad;
    };

    SUBCASE("bad magic") {
        const fs::path bad = corrupt_at(0, 'X');
        CHECK_THROWS_WITH_AS(read_tensor(bad), doctest::Contains("byte 0"),
                             FormatError);
    }
    SUBCASE("unknown dtype code") {
        const fs::path bad = corrupt_at(5, 9);
        CHECK_THROWS_WITH_AS(read_tensor(bad), doctest::Contains("byte 5"),
                             FormatError);
    }
    SUBCASE("ndim zero") {
        const fs::path bad = corrupt_at(6, 0);
        CHECK_THROWS_AS(read_tensor(bad), FormatError);
    }
    SUBCASE("zero dimension") {
        const fs::path bad = corrupt_at(7, 0);
        CHECK_THROWS_WITH_AS(read_tensor(bad), doctest::Contains("byte 7"),
                             FormatError);
    }
    SUBCASE("truncated payload") {
        auto bytes = slurp(good);
        bytes.resize(bytes.size() - 5);
        const fs::path bad = dir / "trunc.ctsb";
        std::ofstream out(bad, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_WITH_AS(read_tensor(bad), doctest::Contains("truncated"),
                             FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_tensor(dir / "nope.ctsb"), FileError);
    }
}

TEST_CASE("csv matrices round trip exactly") {
    const fs::path path = temp_dir() / "m.csv";
    Tensor m = random_tensor({5, 3}, 4);
    m(0, 0) = 0.1;       // not exactly representable; shortest form must survive
    m(1, 1) = -1e-17;
    m(2, 2) = 12345678.9;
    write_csv_matrix(path, m);
    Tensor back = read_csv_matrix(path);
    REQUIRE(back.dims() == m.dims());
    for (std::size_t k = 0; k < m.numel(); ++k)
        CHECK(back.values()[k] == m.values()[k]);
}

TEST_CASE("csv parse errors") {
    const fs::path dir = temp_dir();
    const fs::path bad = dir / "bad.csv";
    {
        std::ofstream out(bad, std::ios::binary | std::ios::trunc);
        out << "1,2\n3,oops\n";
    }
    CHECK_THROWS_AS(read_csv_matrix(bad), ParseError);
    {
        std::ofstream out(bad, std::ios::binary | std::ios::trunc);
        out << "1,2\n3\n";
    }
    CHECK_THROWS_AS(read_csv_matrix(bad), ParseError);
    CHECK_THROWS_AS(read_csv_matrix(dir / "absent.csv"), FileError);
}

TEST_CASE("format_double survives round trips") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int k = 0; k < 1000; ++k) {
        const double v = u(rng);
        const std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
}
