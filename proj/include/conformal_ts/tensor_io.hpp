#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "conformal_ts/tensor.hpp"

namespace cts {

// On-disk dtype codes for the CTSB container. Storage in memory is always
// f64; writing as f32 narrows each value.
enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

// CTSB binary tensor container, little-endian:
//   bytes 0..4   magic "CTSB1"
//   byte  5      dtype (0 = f32, 1 = f64)
//   byte  6      ndim (1..8)
//   next         ndim x u64 dims
//   payload      row-major values
// Streams may hold several records back to back (e.g. net checkpoints).
void write_tensor(std::ostream& out, const Tensor& t, DType dtype);
void write_tensor(const std::filesystem::path& path, const Tensor& t,
                  DType dtype = DType::F64);

// Reads one record from the stream, leaving it positioned after the payload.
// Malformed input raises FormatError with the offending byte offset.
Tensor read_tensor(std::istream& in, DType* dtype_out = nullptr);
Tensor read_tensor(const std::filesystem::path& path, DType* dtype_out = nullptr);

// Plain CSV for small matrices and reports: numeric cells, header-less.
// Values are written with shortest round-trip formatting.
void write_csv_matrix(const std::filesystem::path& path, const Tensor& m);
Tensor read_csv_matrix(const std::filesystem::path& path);

// Shortest round-trip decimal rendering of a double (also used by traces and
// reports so that reruns are byte-identical).
std::string format_double(double v);

} // namespace cts
