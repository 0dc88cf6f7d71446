#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hybridflow {

/// Input outside the physical or structural domain of an operation.
class InputDomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative method failed to converge or produced a non-physical value.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what,
                            double residual = std::numeric_limits<double>::quiet_NaN(),
                            std::vector<double> trace = {})
        : std::runtime_error(what), residual_(residual), trace_(std::move(trace)) {}

    double residual() const noexcept { return residual_; }
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    double residual_;
    std::vector<double> trace_;
};

/// Unreadable, malformed or wrongly versioned file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace hybridflow
