#pragma once

#include <stdexcept>
#include <string>

namespace ecgt2t {

// Error taxonomy shared by all modules. Callers that care about the
// failure class switch on kind(); the message carries the details.
enum class Err {
    OutOfBounds,
    MissingLead,
    LengthMismatch,
    IoError,
    FormatError,
    ClassTooSmall,
    ShapeMismatch,
    InvalidProbability,
    InvalidTarget,
    InvalidRate,
    DurationTooShort,
    EmptyDataset,
    NonFiniteLoss,
    UntrainedModel,
    ModeMismatch,
    SignalTooShort,
    RateMismatch,
    NoMatches,
    SingleClass,
    SingleClassDataset,
    MissingCheckpoint,
    DegenerateResampling,
    WindowTooLong,
    InvalidArgument,
};

const char* err_name(Err k);

class Error : public std::runtime_error {
public:
    Error(Err kind, const std::string& msg)
        : std::runtime_error(std::string(err_name(kind)) + ": " + msg), kind_(kind) {}

    Err kind() const { return kind_; }

private:
    Err kind_;
};

[[noreturn]] inline void fail(Err kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, Err kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

}  // namespace ecgt2t
