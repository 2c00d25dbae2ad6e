#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace afr {

// Every failure raised by the library derives from Error so callers can map
// kinds onto exit codes without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class LookupError : public DataError {
public:
    using DataError::DataError;
};

class SamplingError : public DataError {
public:
    using DataError::DataError;
};

class FormatError : public DataError {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch)
        : Error(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace afr
