#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace notrade {

enum class ErrorCode {
    NotMonotone,
    OutOfRange,
    DivergentOrder,
    RiccatiBlowup,
    QuadratureFail,
    NoConvergence,
    DegenerateWidth,
    SingularIntegrand,
    ZeroGamma,
    NuTooLarge,
    NotBandForm,
    RangeExit,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NotMonotone: return "NotMonotone";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::DivergentOrder: return "DivergentOrder";
        case ErrorCode::RiccatiBlowup: return "RiccatiBlowup";
        case ErrorCode::QuadratureFail: return "QuadratureFail";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::DegenerateWidth: return "DegenerateWidth";
        case ErrorCode::SingularIntegrand: return "SingularIntegrand";
        case ErrorCode::ZeroGamma: return "ZeroGamma";
        case ErrorCode::NuTooLarge: return "NuTooLarge";
        case ErrorCode::NotBandForm: return "NotBandForm";
        case ErrorCode::RangeExit: return "RangeExit";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Numerical failure raised by any solver in the library. The code is stable
/// and is what the CLI reports in its machine-readable diagnostics.
class NumericalError : public std::runtime_error {
public:
    NumericalError(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw NumericalError(code, what);
}

}  // namespace notrade
