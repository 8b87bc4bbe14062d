// Per-phase step timing: monotonic-clock spans around the tape calls
// (forward, backward) and the optimizer update, with aggregates and the
// backward-fraction summary.
#pragma once

#include <algorithm>
#include <chrono>
#include <vector>

namespace dlrlock {

using MonoClock = std::chrono::steady_clock;

inline double seconds_since(MonoClock::time_point t0) {
  return std::chrono::duration<double>(MonoClock::now() - t0).count();
}

struct StepTiming {
  double forward_s = 0.0;
  double backward_s = 0.0;
  double optimizer_s = 0.0;
  double total_s = 0.0;
};

struct TimingReport {
  std::vector<StepTiming> steps;  // warmup excluded
  std::size_t warmup = 0;
  bool resolution_warning = false;

  double mean_forward() const { return mean([](const StepTiming& s) { return s.forward_s; }); }
  double mean_backward() const { return mean([](const StepTiming& s) { return s.backward_s; }); }
  double mean_optimizer() const { return mean([](const StepTiming& s) { return s.optimizer_s; }); }
  double mean_total() const { return mean([](const StepTiming& s) { return s.total_s; }); }

  // Share of a training step spent outside the inference-equivalent forward.
  double backward_fraction() const {
    const double tot = mean_total();
    return tot > 0.0 ? (tot - mean_forward()) / tot : 0.0;
  }
  // (backward + optimizer) / forward
  double training_overhead_ratio() const {
    const double f = mean_forward();
    return f > 0.0 ? (mean_backward() + mean_optimizer()) / f : 0.0;
  }

  double p50_total() const { return percentile(0.50); }
  double p95_total() const { return percentile(0.95); }

  double percentile(double q) const {
    if (steps.empty()) return 0.0;
    std::vector<double> v;
    v.reserve(steps.size());
    for (const auto& s : steps) v.push_back(s.total_s);
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  }

 private:
  template <class F>
  double mean(F f) const {
    if (steps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& st : steps) s += f(st);
    return s / static_cast<double>(steps.size());
  }
};

// Measured resolution of the monotonic clock (smallest observable nonzero
// increment over a burst of reads).
inline double clock_resolution_s() {
  double best = 1.0;
  auto prev = MonoClock::now();
  for (int i = 0; i < 2000; ++i) {
    auto now = MonoClock::now();
    const double d = std::chrono::duration<double>(now - prev).count();
    if (d > 0.0) best = std::min(best, d);
    prev = now;
  }
  return best;
}

class PhaseTimer {
 public:
  void begin() { t0_ = MonoClock::now(); }
  double end() const { return seconds_since(t0_); }

 private:
  MonoClock::time_point t0_;
};

}  // namespace dlrlock
