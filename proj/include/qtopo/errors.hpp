#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qtopo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// |h| fell below the gap threshold somewhere on the grid.
class GapClosedError : public Error {
public:
    using Error::Error;
};

// Matrix lacks the quaternion sign structure.
class StructureError : public Error {
public:
    using Error::Error;
};

class DegenerateTriangleError : public Error {
public:
    using Error::Error;
};

// Chern sum too far from an integer.
class IllConditionedError : public Error {
public:
    IllConditionedError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

// Internal cross-check failed.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

// Bad shapes or configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// NaN or Inf produced during a forward or training pass.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, int layer)
        : Error(what), layer_(layer) {}
    int layer() const { return layer_; }

private:
    int layer_;
};

}  // namespace qtopo
