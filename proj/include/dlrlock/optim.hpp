// SGD and AdamW (decoupled weight decay) with cosine learning-rate schedule,
// linear warmup and global-norm gradient clipping.
#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "dlrlock/tape.hpp"

namespace dlrlock {

struct ClipResult {
  double scale = 1.0;   // factor applied to every gradient
  bool finite = true;   // false: NaN/Inf found, nothing scaled, run flagged
};

// Scales all gradients uniformly so the global L2 norm is at most max_norm.
inline ClipResult clip_grad_norm(GradStore& grads, double max_norm) {
  if (max_norm <= 0.0) throw ValueError("clip_grad_norm: max_norm must be > 0");
  if (!grads.all_finite()) return {1.0, false};
  const double norm = grads.global_norm();
  if (norm <= max_norm || norm == 0.0) return {1.0, true};
  const double scale = max_norm / norm;
  grads.scale_all(scale);
  return {scale, true};
}

// lr(t) for t in [0, total): linear warmup over the first `warmup_frac` of
// steps, then cosine decay to zero.
inline double cosine_warmup_lr(std::size_t step, std::size_t total_steps, double base_lr,
                               double warmup_frac = 0.05) {
  if (total_steps == 0) return base_lr;
  const double warm = std::max(1.0, warmup_frac * static_cast<double>(total_steps));
  const double t = static_cast<double>(step);
  if (t < warm) return base_lr * (t + 1.0) / warm;
  const double progress = (t - warm) / std::max(1.0, static_cast<double>(total_steps) - warm);
  return base_lr * 0.5 * (1.0 + std::cos(3.141592653589793 * std::min(progress, 1.0)));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

enum class OptKind { sgd, adamw };

class Optimizer {
 public:
  static Optimizer sgd() { return Optimizer(OptKind::sgd, {}); }
  static Optimizer adamw(AdamWConfig cfg) { return Optimizer(OptKind::adamw, cfg); }

  OptKind kind() const { return kind_; }
  std::size_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

  // One update over the given parameters; gradients looked up by param id,
  // parameters without a gradient entry are untouched.
  void step(const std::vector<ParamPtr>& params, const GradStore& grads, double lr) {
    if (lr <= 0.0) throw ValueError("optimizer step: lr must be > 0");
    ++step_;
    for (const auto& p : params) {
      const Matrix* g = grads.find(p->id);
      if (!g) continue;
      if (!g->same_shape(p->value)) throw ShapeError("optimizer: grad shape mismatch for " + p->name);
      if (kind_ == OptKind::sgd) {
        for (std::size_t i = 0; i < p->value.size(); ++i)
          p->value.data()[i] -= lr * g->data()[i];
        continue;
      }
      auto& st = moments_[p->id];
      if (st.m.empty()) {
        st.m = Matrix(g->rows(), g->cols());
        st.v = Matrix(g->rows(), g->cols());
      }
      const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
      const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double gi = g->data()[i];
        double& m = st.m.data()[i];
        double& v = st.v.data()[i];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        double& w = p->value.data()[i];
        w -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w);
      }
    }
  }

 private:
  Optimizer(OptKind k, AdamWConfig cfg) : kind_(k), cfg_(cfg) {}
  struct Moments {
    Matrix m, v;
  };
  OptKind kind_;
  AdamWConfig cfg_;
  std::size_t step_ = 0;
  std::map<int, Moments> moments_;
};

// Training-loop divergence detector: non-finite loss, or loss above 10x its
// initial value for 50 consecutive steps.
class DivergenceDetector {
 public:
  explicit DivergenceDetector(double factor = 10.0, int patience = 50)
      : factor_(factor), patience_(patience) {}
  // Returns true once the run counts as diverged.
  bool observe(double loss) {
    if (!std::isfinite(loss)) {
      diverged_ = true;
      return true;
    }
    if (!have_initial_) {
      initial_ = loss;
      have_initial_ = true;
    }
    if (loss > factor_ * initial_) {
      if (++streak_ >= patience_) diverged_ = true;
    } else {
      streak_ = 0;
    }
    return diverged_;
  }
  bool diverged() const { return diverged_; }
  double initial_loss() const { return initial_; }

 private:
  double factor_;
  int patience_;
  double initial_ = 0.0;
  bool have_initial_ = false;
  int streak_ = 0;
  bool diverged_ = false;
};

}  // namespace dlrlock
