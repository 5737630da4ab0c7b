#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtlmp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Sorted set of internal branch indices. Canonical order is lexicographic.
using CongestionPattern = std::vector<int>;

/// Raised when an input document cannot be read. Carries the location.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& where, const std::string& what)
        : std::runtime_error(where + ": " + what), where_(where) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

/// A domain invariant does not hold (bad case data, disconnected network, ...).
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: unobservable model, singular system, divergence.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rtlmp
