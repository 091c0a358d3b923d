#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace helm {

enum class ErrorCode {
  DimensionTooSmall,
  NotCoarsenable,
  ShapeMismatch,
  StaleHalo,
  ZeroDiagonal,
  SourceOutsideDomain,
  LevelIncompatible,
  Transport,
  Deadlock,
  Aborted,
  SizeMismatch,
  NonPositiveVelocity,
  NonUniformSpacing,
  NoAnalyticalSolution,
  Parse,
  InvalidValue,
  MismatchedConfigs,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `module()` names the component that raised it so
/// the CLI can report provenance.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), code_(code), module_(std::move(module)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

}  // namespace helm
