#include "helm/timing.hpp"

namespace helm {

void PhaseClock::push(const std::string& phase) {
  const auto now = clock::now();
  if (!stack_.empty()) totals_[stack_.back()] += std::chrono::duration<double>(now - mark_).count();
  stack_.push_back(phase);
  totals_.try_emplace(phase, 0.0);
  mark_ = now;
}

void PhaseClock::pop() {
  if (stack_.empty()) return;
  const auto now = clock::now();
  totals_[stack_.back()] += std::chrono::duration<double>(now - mark_).count();
  stack_.pop_back();
  mark_ = now;
}

double PhaseClock::total() const {
  double s = 0.0;
  for (const auto& [name, t] : totals_) s += t;
  return s;
}

void PhaseClock::reset() {
  totals_.clear();
  stack_.clear();
}

}  // namespace helm
