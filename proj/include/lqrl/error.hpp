#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lqrl {

enum class ErrorCode {
    DimensionMismatch,
    NotPositiveDefinite,
    NotStable,
    RhoBarTooSmall,
    InfeasiblePolicy,
    SpectralConditionViolated,
    NonSymmetricInput,
    NoConvergence,
    NumericalOverflow,
    GuardViolated,
    SingularTheta22,
    PolicyMismatch,
    TrajectoryTooShort,
    IterateLeftDomain,
    ConfigInvalid,
    ModelFileMissing,
};

std::string_view to_string(ErrorCode code);

/// Library error carrying a machine-readable code; `what()` holds the detail.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

    /// Errors that signal a scientific guard rather than a software fault.
    [[nodiscard]] bool is_guard_exit() const noexcept {
        return code_ == ErrorCode::InfeasiblePolicy || code_ == ErrorCode::IterateLeftDomain ||
               code_ == ErrorCode::GuardViolated || code_ == ErrorCode::NumericalOverflow ||
               code_ == ErrorCode::NotStable;
    }

private:
    ErrorCode code_;
};

}  // namespace lqrl
