#include "twlab/error.hpp"

namespace twlab {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::Parameter: return "parameter";
    case ErrorCode::Bracket: return "bracket";
    case ErrorCode::Range: return "range";
    case ErrorCode::Convergence: return "convergence";
    case ErrorCode::SubThreshold: return "sub-threshold";
    case ErrorCode::MonotonicityBreach: return "monotonicity-breach";
    case ErrorCode::ConstructionInvalid: return "construction-invalid";
    case ErrorCode::BlowUp: return "blow-up";
    case ErrorCode::FrameShift: return "frame-shift";
    case ErrorCode::FitDomain: return "fit-domain";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace twlab
