#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wiplab {

enum class ErrorCode {
    CapExceeded,
    ResourceLimit,
    GridMismatch,
    NonConvergent,
    DegenerateVariance,
    LengthError,
    TimeChangedPath,
    SizeMismatch,
    TooLarge,
    AdmissibilityError,
    GridError,
    BudgetExceeded,
    QuadratureFailure,
    RangeError,
    InsufficientData,
    NonPositive,
    ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::ResourceLimit: return "ResourceLimit";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NonConvergent: return "NonConvergent";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::LengthError: return "LengthError";
    case ErrorCode::TimeChangedPath: return "TimeChangedPath";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::AdmissibilityError: return "AdmissibilityError";
    case ErrorCode::GridError: return "GridError";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NonPositive: return "NonPositive";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace wiplab
