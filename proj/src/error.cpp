#include "colcal/error.hpp"

namespace colcal {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Validation: return "validation error";
    case ErrorCode::InsufficientData: return "insufficient data";
    case ErrorCode::InsufficientViews: return "insufficient views";
    case ErrorCode::Degenerate: return "degenerate configuration";
    case ErrorCode::InvalidConic: return "invalid conic";
    case ErrorCode::InvalidGeometry: return "invalid geometry";
    case ErrorCode::Orientation: return "orientation error";
    case ErrorCode::PointAtInfinity: return "point at infinity";
    case ErrorCode::BehindCamera: return "point behind camera";
    case ErrorCode::Correspondence: return "correspondence error";
    case ErrorCode::Ambiguity: return "ambiguous grid";
    case ErrorCode::NonConvergence: return "non-convergence";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::Generation: return "generation error";
    case ErrorCode::Sampling: return "sampling error";
    case ErrorCode::Evaluation: return "evaluation error";
    case ErrorCode::Io: return "i/o error";
  }
  return "error";
}

}  // namespace colcal
