#pragma once

#include <stdexcept>
#include <string>

namespace cospeech {

/// Error families map one-to-one onto CLI exit codes.
enum class ErrorFamily : int {
    kInput = 2,       // malformed or degenerate input data
    kShape = 3,       // tensor/shape contract violations
    kFormat = 4,      // file format and checkpoint errors
    kConfig = 5,      // configuration validation
    kNumeric = 6,     // non-finite losses, gradient mismatches
    kData = 7,        // not enough data for an operation
};

class Error : public std::runtime_error {
public:
    Error(ErrorFamily family, const std::string& what)
        : std::runtime_error(what), family_(family) {}
    ErrorFamily family() const noexcept { return family_; }

private:
    ErrorFamily family_;
};

#define COSPEECH_DEFINE_ERROR(Name, Family)                                   \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(Family, #Name ": " + what) {} \
    }

COSPEECH_DEFINE_ERROR(DegenerateInput, ErrorFamily::kInput);
COSPEECH_DEFINE_ERROR(EmptyResult, ErrorFamily::kInput);
COSPEECH_DEFINE_ERROR(TooShort, ErrorFamily::kInput);
COSPEECH_DEFINE_ERROR(InvalidTimestep, ErrorFamily::kInput);
COSPEECH_DEFINE_ERROR(InvalidWindow, ErrorFamily::kInput);
COSPEECH_DEFINE_ERROR(ShapeMismatch, ErrorFamily::kShape);
COSPEECH_DEFINE_ERROR(DimensionMismatch, ErrorFamily::kShape);
COSPEECH_DEFINE_ERROR(FormatError, ErrorFamily::kFormat);
COSPEECH_DEFINE_ERROR(ConfigError, ErrorFamily::kConfig);
COSPEECH_DEFINE_ERROR(NonFiniteLoss, ErrorFamily::kNumeric);
COSPEECH_DEFINE_ERROR(GradMismatch, ErrorFamily::kNumeric);
COSPEECH_DEFINE_ERROR(InsufficientData, ErrorFamily::kData);

#undef COSPEECH_DEFINE_ERROR

}  // namespace cospeech
