#pragma once

#include <stdexcept>
#include <string>

namespace splicedet {

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Input data failed validation (bad annotation file, mask mismatch, ...).
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(what) {}
};

/// Shapes or arguments violate an operation's contract.
struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(what) {}
};

/// Numerical failure (NaN/Inf loss or gradient).
struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(what) {}
};

inline void check(bool cond, const std::string& what) {
    if (!cond) throw Error(what);
}

}  // namespace splicedet
