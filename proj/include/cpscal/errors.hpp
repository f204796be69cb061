#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cpscal {

enum class ErrorCode {
    InvalidParameter,         // out-of-domain argument or inconsistent model
    InsufficientScope,        // scan did not cover the required phase span
    UnwrapFailure,            // branch reconstruction broke continuity
    FitFailure,               // too few points or nonpositive slope
    PassInconsistency,        // two passes disagree on the same quantity
    ConstraintViolation,      // no branch satisfies |dtheta| < pi/2
    DiscriminationAmbiguous,  // probe intensity outside every acceptance band
    SolverFailure,            // linear solve failed or residual too large
    ConfigError,              // scenario/config file invalid
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace cpscal
