#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scram {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched tensor/vector shapes (query depth vs key depth, mask on
/// incompatible fields, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A parameter value outside its documented domain (kappa > n, alpha
/// outside [0,1], ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A softmax row whose entries are all -inf after masking.
class DegenerateRowError : public Error {
public:
    using Error::Error;
};

/// A non-local mean normalizer that is zero or non-finite.
class DegenerateNormalizerError : public Error {
public:
    using Error::Error;
};

/// A validity policy that cannot be satisfied (constraints exhaust the
/// key set, or the separation is infeasible).
class InfeasiblePolicyError : public Error {
public:
    using Error::Error;
};

/// Malformed file content. Carries the byte offset where parsing failed.
class DataFormatError : public Error {
public:
    DataFormatError(const std::string& what, std::size_t byte_offset)
        : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t byte_offset() const { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace scram
