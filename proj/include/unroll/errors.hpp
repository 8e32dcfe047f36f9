#ifndef UNROLL_ERRORS_HPP
#define UNROLL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace unroll {

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NonConvergence : std::runtime_error {
    explicit NonConvergence(const std::string& what) : std::runtime_error(what) {}
};

struct PreconditionViolated : std::runtime_error {
    explicit PreconditionViolated(const std::string& what) : std::runtime_error(what) {}
};

struct UnsupportedClass : std::runtime_error {
    explicit UnsupportedClass(const std::string& what) : std::runtime_error(what) {}
};

struct QuadratureFailure : std::runtime_error {
    explicit QuadratureFailure(const std::string& what) : std::runtime_error(what) {}
};

struct CheckFailed : std::runtime_error {
    explicit CheckFailed(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct BadMagic : IoError {
    explicit BadMagic(const std::string& what) : IoError(what) {}
};

struct TruncatedFile : IoError {
    explicit TruncatedFile(const std::string& what) : IoError(what) {}
};

struct UnsupportedTypeCode : IoError {
    explicit UnsupportedTypeCode(const std::string& what) : IoError(what) {}
};

struct SchemaMismatch : IoError {
    explicit SchemaMismatch(const std::string& what) : IoError(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace unroll

#endif
