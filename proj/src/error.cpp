#include "unimatch/error.hpp"

namespace unimatch {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::DegenerateMesh: return "DegenerateMesh";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::IndexError: return "IndexError";
    case ErrorCode::TooFewParts: return "TooFewParts";
    case ErrorCode::SpecError: return "SpecError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::PairIndexError: return "PairIndexError";
    case ErrorCode::BasisTooSmall: return "BasisTooSmall";
    case ErrorCode::BasisTooLarge: return "BasisTooLarge";
    case ErrorCode::ConvergenceError: return "ConvergenceError";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::BadTemperature: return "BadTemperature";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::StepError: return "StepError";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

int exit_code_for(ErrorCode code)
{
    switch (code) {
    case ErrorCode::ConvergenceError:
    case ErrorCode::DegenerateSpectrum:
    case ErrorCode::SingularSystem:
    case ErrorCode::ZeroVector:
    case ErrorCode::NonFinite:
    case ErrorCode::StepError:
        return 3;
    case ErrorCode::IncompatibleCheckpoint:
        return 4;
    default:
        return 2;
    }
}

} // namespace unimatch
