#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace unobs_lab {

/// Parameter outside the admissible region (PD violation, alpha box, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A numerical procedure failed to reach its stated tolerance.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Normal equations of the GLS step are singular.
class RankDeficiencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operation requires a data layout it does not support (e.g. unbalanced
/// data for the closed-form estimator).
class UnsupportedLayoutError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The data carry no information about a parameter (e.g. lambda when every
/// cluster has a single member).
class UnidentifiedError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input file. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace unobs_lab
