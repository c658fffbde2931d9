#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unimatch {

enum class ErrorCode {
    ParseError,
    FormatError,
    DegenerateMesh,
    Disconnected,
    ShapeMismatch,
    DimMismatch,
    IndexError,
    TooFewParts,
    SpecError,
    ConfigError,
    PairIndexError,
    BasisTooSmall,
    BasisTooLarge,
    ConvergenceError,
    DegenerateSpectrum,
    SingularSystem,
    ZeroVector,
    EmptyGroup,
    BadTemperature,
    NonFinite,
    StepError,
    KTooLarge,
    IncompatibleCheckpoint,
    IoError,
};

std::string_view to_string(ErrorCode code);

// Data/validation problems map to CLI exit code 2, numeric failures to 3,
// checkpoint incompatibility to 4.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , m_code(code)
        , m_detail(what)
    {}

    ErrorCode code() const noexcept { return m_code; }
    /// Message without the code prefix.
    const std::string& detail() const noexcept { return m_detail; }
    /// Same code, message prefixed with `context: `.
    Error within(const std::string& context) const { return Error(m_code, context + ": " + m_detail); }

private:
    ErrorCode m_code;
    std::string m_detail;
};

} // namespace unimatch
