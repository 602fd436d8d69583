#include "conformal_ts/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <type_traits>

#include "conformal_ts/errors.hpp"

namespace cts {

namespace {

constexpr char kMagic[5] = {'C', 'T', 'S', 'B', '1'};
constexpr std::size_t kMaxNdim = 8;

template <typename U>
void put_le(std::ostream& out, U v) {
    static_assert(std::is_unsigned_v<U>);
    std::array<char, sizeof(U)> b;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

template <typename U>
U get_le(std::istream& in, std::size_t offset, const char* what) {
    static_assert(std::is_unsigned_v<U>);
    std::array<char, sizeof(U)> b;
    in.read(b.data(), static_cast<std::streamsize>(b.size()));
    if (static_cast<std::size_t>(in.gcount()) != b.size())
        throw FormatError(std::string("truncated tensor file: expected ") + what +
                          " at byte " + std::to_string(offset));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

} // namespace

void write_tensor(std::ostream& out, const Tensor& t, DType dtype) {
    out.write(kMagic, 5);
    out.put(static_cast<char>(dtype));
    out.put(static_cast<char>(t.ndim()));
    for (std::size_t d : t.dims())
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    if (dtype == DType::F32) {
        for (double v : t.values())
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
        for (double v : t.values())
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out)
        throw FileError("failed writing tensor stream");
}

void write_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw FileError("cannot open for writing: " + path.string());
    write_tensor(out, t, dtype);
    out.flush();
    if (!out)
        throw FileError("failed writing: " + path.string());
}

Tensor read_tensor(std::istream& in, DType* dtype_out) {
    const auto start = in.tellg();
    const std::size_t base =
        start == std::streampos(-1) ? 0 : static_cast<std::size_t>(start);

    char magic[5];
    in.read(magic, 5);
    if (in.gcount() != 5 || std::memcmp(magic, kMagic, 5) != 0)
        throw FormatError("bad magic at byte " + std::to_string(base) +
                          ": not a CTSB1 tensor");

    const auto dtype_byte = get_le<std::uint8_t>(in, base + 5, "dtype byte");
    if (dtype_byte > 1)
        throw FormatError("unknown dtype code " + std::to_string(dtype_byte) +
                          " at byte " + std::to_string(base + 5));
    const DType dtype = static_cast<DType>(dtype_byte);

    const auto ndim = get_le<std::uint8_t>(in, base + 6, "ndim byte");
    if (ndim == 0 || ndim > kMaxNdim)
        throw FormatError("invalid ndim " + std::to_string(ndim) + " at byte " +
                          std::to_string(base + 6));

    std::vector<std::size_t> dims(ndim);
    std::size_t numel = 1;
    for (std::size_t k = 0; k < ndim; ++k) {
        const std::size_t off = base + 7 + 8 * k;
        const auto d = get_le<std::uint64_t>(in, off, "dim");
        if (d == 0)
            throw FormatError("zero dimension at byte " + std::to_string(off));
        if (d > std::numeric_limits<std::size_t>::max() / std::max<std::size_t>(numel, 1))
            throw FormatError("dimension overflow at byte " + std::to_string(off));
        dims[k] = static_cast<std::size_t>(d);
        numel *= dims[k];
    }

    const std::size_t payload = base + 7 + 8 * ndim;
    Tensor t(dims);
    if (dtype == DType::F32) {
        for (std::size_t i = 0; i < numel; ++i) {
            const auto u = get_le<std::uint32_t>(in, payload + 4 * i, "f32 value");
            t.values()[i] = static_cast<double>(std::bit_cast<float>(u));
        }
    } else {
        for (std::size_t i = 0; i < numel; ++i) {
            const auto u = get_le<std::uint64_t>(in, payload + 8 * i, "f64 value");
            t.values()[i] = std::bit_cast<double>(u);
        }
    }
    if (dtype_out)
        *dtype_out = dtype;
    return t;
}

Tensor read_tensor(const std::filesystem::path& path, DType* dtype_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FileError("cannot open for reading: " + path.string());
    return read_tensor(in, dtype_out);
}

std::string format_double(double v) {
    std::array<char, 64> buf;
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc())
        throw InternalError("failed to format double");
    return std::string(buf.data(), ptr);
}

void write_csv_matrix(const std::filesystem::path& path, const Tensor& m) {
    if (m.ndim() != 2)
        throw DimensionError("write_csv_matrix expects a 2-d tensor");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw FileError("cannot open for writing: " + path.string());
    for (std::size_t r = 0; r < m.dim(0); ++r) {
        for (std::size_t c = 0; c < m.dim(1); ++c) {
            if (c)
                out << ',';
            out << format_double(m(r, c));
        }
        out << '\n';
    }
    if (!out)
        throw FileError("failed writing: " + path.string());
}

Tensor read_csv_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FileError("cannot open for reading: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            const std::size_t comma = line.find(',', pos);
            const std::size_t end = comma == std::string::npos ? line.size() : comma;
            double v = 0.0;
            const char* first = line.data() + pos;
            const char* last = line.data() + end;
            auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last)
                throw ParseError("bad numeric cell in " + path.string() + " line " +
                                 std::to_string(lineno));
            row.push_back(v);
            if (comma == std::string::npos)
                break;
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("ragged CSV row in " + path.string() + " line " +
                             std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw ParseError("empty CSV: " + path.string());
    Tensor m({rows.size(), rows.front().size()});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m(r, c) = rows[r][c];
    return m;
}

} // namespace cts
