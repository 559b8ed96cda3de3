#ifndef CTBCD_ERRORS_HPP
#define CTBCD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ctbcd {

/// Bad user input: malformed config, inconsistent dimensions, unknown keys.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A matrix that must be inverted is numerically singular, typically because
/// the data is not exciting enough for the requested model structure.
struct SingularityError : std::runtime_error {
    explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

/// A model estimate left the stable region and the active policy forbids it.
struct InstabilityError : std::runtime_error {
    explicit InstabilityError(const std::string& what) : std::runtime_error(what) {}
};

/// The leading denominator coefficient collapsed below tolerance, so the
/// model no longer has its declared order.
struct DegeneracyError : std::runtime_error {
    explicit DegeneracyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ctbcd

#endif  // CTBCD_ERRORS_HPP
