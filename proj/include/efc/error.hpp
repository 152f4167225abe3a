#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace efc {

/// Failure categories raised by the library. The CLI maps each category to
/// an exit code (see exit_code_for).
enum class ErrorKind {
    Io,
    Parse,
    Conflict,
    Domain,
    AxisCollision,
    EmptyIntersection,
    Config,
    Structure,
    Layer,
    Coverage,
    EvaluationSet,
    DegenerateSlice,
    Kind,
    Alignment,
    Fit,
    Range,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// 2 for usage/config/input problems, 1 for analysis failures.
int exit_code_for(ErrorKind kind);

}  // namespace efc
