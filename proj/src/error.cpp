#include "helm/error.hpp"

namespace helm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionTooSmall: return "dimension-too-small";
    case ErrorCode::NotCoarsenable: return "not-coarsenable";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::StaleHalo: return "stale-halo";
    case ErrorCode::ZeroDiagonal: return "zero-diagonal";
    case ErrorCode::SourceOutsideDomain: return "source-outside-domain";
    case ErrorCode::LevelIncompatible: return "level-incompatible";
    case ErrorCode::Transport: return "transport";
    case ErrorCode::Deadlock: return "deadlock";
    case ErrorCode::Aborted: return "aborted";
    case ErrorCode::SizeMismatch: return "size-mismatch";
    case ErrorCode::NonPositiveVelocity: return "non-positive-velocity";
    case ErrorCode::NonUniformSpacing: return "non-uniform-spacing";
    case ErrorCode::NoAnalyticalSolution: return "no-analytical-solution";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::InvalidValue: return "invalid-value";
    case ErrorCode::MismatchedConfigs: return "mismatched-configs";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace helm
