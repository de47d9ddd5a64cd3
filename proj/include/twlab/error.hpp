#pragma once

#include <stdexcept>
#include <string>

namespace twlab {

/// Failure categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  InvalidArgument = 1,
  Domain,            // input outside the region where an operation is defined
  Parameter,         // model or algorithm parameter violates a stated inequality
  Bracket,           // root/extremum search could not bracket its target
  Range,             // state left the invariant rectangle or a search range
  Convergence,       // iteration limit reached
  SubThreshold,      // wave speed at or below the threshold c*
  MonotonicityBreach,
  ConstructionInvalid,
  BlowUp,
  FrameShift,
  FitDomain,
  Config,
  Io,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace twlab
