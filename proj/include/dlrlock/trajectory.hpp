// One optimization run's recorded series plus its endpoint summary, shared by
// the sweep, fine-tuning and matrix-factorization experiments.
#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dlrlock/matrix.hpp"

namespace dlrlock {

struct TrajectoryPoint {
  std::size_t step = 0;
  double loss = 0.0;        // relative function error for sweeps, loss otherwise
  double omega = 0.0;       // penalty / auxiliary value (0 when unused)
  double grad_norm = 0.0;
  double wallclock_s = 0.0;
  double tokens = 0.0;      // cumulative tokens processed (0 when not token-based)
};

struct TrajectoryRecord {
  std::string config_id;
  std::vector<TrajectoryPoint> series;
  bool diverged = false;
  // extra per-run scalars (e.g. per-factor gradient norms at the end)
  std::vector<std::pair<std::string, double>> extras;

  void append(TrajectoryPoint p) {
    if (!series.empty() && p.step <= series.back().step)
      throw ValueError("TrajectoryRecord: steps must be strictly increasing");
    series.push_back(p);
  }
  const TrajectoryPoint& endpoint() const {
    if (series.empty()) throw ValueError("TrajectoryRecord: empty series");
    return series.back();
  }
  double final_loss() const { return endpoint().loss; }
  double min_loss() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : series) m = std::min(m, p.loss);
    return m;
  }
  // First step index at which loss <= target, or SIZE_MAX when never reached.
  std::size_t first_step_below(double target) const {
    for (const auto& p : series)
      if (p.loss <= target) return p.step;
    return static_cast<std::size_t>(-1);
  }
  // Wall-clock of the first crossing, or +inf when never reached.
  double first_wallclock_below(double target) const {
    for (const auto& p : series)
      if (p.loss <= target) return p.wallclock_s;
    return std::numeric_limits<double>::infinity();
  }
  double first_tokens_below(double target) const {
    for (const auto& p : series)
      if (p.loss <= target) return p.tokens;
    return std::numeric_limits<double>::infinity();
  }
};

}  // namespace dlrlock
