#ifndef DBGC_ERROR_HPP
#define DBGC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dbgc {

// Failure categories surfaced by the library. The CLI prints the name of the
// category and exits nonzero, so names are part of the tool's interface.
enum class ErrorCode {
    MissingChannel,
    ShapeMismatch,
    CorruptData,
    InvalidSpec,
    ClassTooSmall,
    InvalidK,
    EmptyMask,
    NumericalError,
    TrainingDiverged,
    InvalidPatchSize,
    OutOfBounds,
    EmptyEvaluation,
    PaletteMissing,
    InvalidConfig,
    LockHeld,
    IoError,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }
    const char* name() const { return error_name(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace dbgc

#endif
