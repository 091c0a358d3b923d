#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

namespace helm {

/// Exclusive per-phase wall-clock accounting. Entering a nested phase pauses
/// the enclosing one, so the recorded phases never double count and their sum
/// stays below the elapsed wall time.
class PhaseClock {
 public:
  using clock = std::chrono::steady_clock;

  void push(const std::string& phase);
  void pop();

  const std::map<std::string, double>& seconds() const { return totals_; }
  double total() const;
  void reset();

 private:
  std::map<std::string, double> totals_;
  std::vector<std::string> stack_;
  clock::time_point mark_{};
};

/// RAII phase marker; a null clock makes it a no-op.
class ScopedPhase {
 public:
  ScopedPhase(PhaseClock* clock, const char* phase) : clock_(clock) {
    if (clock_) clock_->push(phase);
  }
  ~ScopedPhase() {
    if (clock_) clock_->pop();
  }
  ScopedPhase(const ScopedPhase&) = delete;
  ScopedPhase& operator=(const ScopedPhase&) = delete;

 private:
  PhaseClock* clock_;
};

namespace phase {
inline constexpr const char* kMatvec = "matvec";
inline constexpr const char* kPrecond = "precond";
inline constexpr const char* kSmoother = "smoother";
inline constexpr const char* kTransfer = "transfer";
inline constexpr const char* kHalo = "halo";
inline constexpr const char* kDot = "dot";
inline constexpr const char* kCoarsest = "coarsest";
}  // namespace phase

}  // namespace helm
