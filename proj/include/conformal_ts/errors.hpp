#pragma once

#include <stdexcept>
#include <string>

namespace cts {

// Exit-code buckets used by the CLI: usage/config -> 1, data/format -> 2,
// internal invariant or protocol violation -> 3.
enum class ErrorKind { Config = 1, Data = 2, Internal = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(ErrorKind::Config, m) {}
};
struct ParameterError : ConfigError {
    using ConfigError::ConfigError;
};

struct DataError : Error {
    explicit DataError(const std::string& m) : Error(ErrorKind::Data, m) {}
};
struct DimensionError : DataError {
    using DataError::DataError;
};
struct ValidationError : DataError {
    using DataError::DataError;
};
struct FormatError : DataError {
    using DataError::DataError;
};
struct ParseError : DataError {
    using DataError::DataError;
};
struct FileError : DataError {
    using DataError::DataError;
};
struct CheckpointError : DataError {
    using DataError::DataError;
};
struct InsufficientDataError : DataError {
    using DataError::DataError;
};

struct InternalError : Error {
    explicit InternalError(const std::string& m) : Error(ErrorKind::Internal, m) {}
};
struct ProtocolError : InternalError {
    using InternalError::InternalError;
};

} // namespace cts
