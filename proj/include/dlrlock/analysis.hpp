// Closed-form predictions and numerical verification: activation-memory
// formulas, the batch-ratio conditioning bound, matrix-factorization
// gradients/Hessians with the column-major vec convention, finite-difference
// Hessians, the Hutchinson trace estimator, and the scaled-initialization
// training experiment.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dlrlock/jacobi.hpp"
#include "dlrlock/matrix.hpp"
#include "dlrlock/optim.hpp"
#include "dlrlock/parallel.hpp"
#include "dlrlock/rng.hpp"
#include "dlrlock/timing.hpp"
#include "dlrlock/trajectory.hpp"

namespace dlrlock {

// ---------------------------------------------------------------------------
// Activation memory predictions

struct MemoryPrediction {
  std::size_t d = 0, r = 0, depth = 0, d_ff = 0;
  long long full_per_layer = 0;    // 3d + 2r
  long long frozen_per_layer = 0;  // d + r
  long long full_total = 0;        // depth * (3d + 2r)
  long long frozen_total = 0;      // depth * (d + r)
  long long swiglu_baseline = 0;   // 3 d_ff + 2d per block

  // Elements convert to bytes at a configurable element width, so
  // reduced-precision deployments can be projected without implementing them.
  static long long bytes(long long elements, std::size_t element_width = 8) {
    return elements * static_cast<long long>(element_width);
  }
};

inline MemoryPrediction predicted_activation_memory(std::size_t d, std::size_t r,
                                                    std::size_t depth, std::size_t d_ff = 0) {
  MemoryPrediction p;
  p.d = d;
  p.r = r;
  p.depth = depth;
  p.d_ff = d_ff;
  p.full_per_layer = static_cast<long long>(3 * d + 2 * r);
  p.frozen_per_layer = static_cast<long long>(d + r);
  p.full_total = static_cast<long long>(depth) * p.full_per_layer;
  p.frozen_total = static_cast<long long>(depth) * p.frozen_per_layer;
  p.swiglu_baseline = d_ff ? static_cast<long long>(3 * d_ff + 2 * d) : 0;
  return p;
}

// Batch-size / GPU-hour amplification ratio (a_attn + d L) / (a_attn + d_ff).
inline double kappa_bound(double d, double r, double depth, double d_ff, double a_attn) {
  (void)r;
  if (d <= 0 || depth <= 0 || d_ff <= 0) throw ValueError("kappa_bound: dims must be positive");
  return (a_attn + d * depth) / (a_attn + d_ff);
}

// ---------------------------------------------------------------------------
// Matrix factorization: loss, analytic gradients, Hessian blocks

struct MatfacGrads {
  double loss = 0.0;
  Matrix grad_w1, grad_w2;
};

// l = ||W1 W2 - M||_F^2; grad_W1 = 2 R W2^T, grad_W2 = 2 W1^T R.
inline MatfacGrads matfac_loss_grad(const Matrix& w1, const Matrix& w2, const Matrix& m) {
  Matrix r = matmul(w1, w2) - m;
  MatfacGrads g;
  g.loss = frob_norm_sq(r);
  g.grad_w1 = matmul_nt(r, w2) * 2.0;
  g.grad_w2 = matmul_tn(w1, r) * 2.0;
  return g;
}

// Diagonal Hessian blocks in the column-major vec convention:
// H11 = 2 (W2 W2^T) kron I_d, H22 = 2 I_d kron (W1^T W1).
inline std::pair<Matrix, Matrix> matfac_hessian_blocks(const Matrix& w1, const Matrix& w2) {
  const std::size_t d = w1.rows();
  Matrix h11 = kron(matmul_nt(w2, w2), Matrix::identity(d)) * 2.0;
  Matrix h22 = kron(Matrix::identity(d), matmul_tn(w1, w1)) * 2.0;
  return {h11, h22};
}

// ---------------------------------------------------------------------------
// Numeric Hessian (central differences of an analytic gradient)

using LossWithGrad =
    std::function<std::pair<double, std::vector<double>>(const std::vector<double>&)>;

inline Matrix numeric_hessian(const LossWithGrad& f, const std::vector<double>& theta,
                              double eps) {
  const std::size_t p = theta.size();
  if (p > 512) throw ValueError("numeric_hessian: parameter dimension must be <= 512");
  Matrix h(p, p);
  std::vector<double> tp = theta, tm = theta;
  for (std::size_t j = 0; j < p; ++j) {
    tp[j] += eps;
    tm[j] -= eps;
    const auto gp = f(tp).second;
    const auto gm = f(tm).second;
    tp[j] = theta[j];
    tm[j] = theta[j];
    for (std::size_t i = 0; i < p; ++i) {
      const double v = (gp[i] - gm[i]) / (2.0 * eps);
      if (!std::isfinite(v)) throw ValueError("numeric_hessian: non-finite entry");
      h(i, j) = v;
    }
  }
  // symmetrize
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      const double v = 0.5 * (h(i, j) + h(j, i));
      h(i, j) = h(j, i) = v;
    }
  return h;
}

// Loss-with-gradient closure for the matrix factorization objective over the
// column-major packed (vec W1, vec W2).
inline LossWithGrad matfac_objective(const Matrix& target, std::size_t d) {
  Matrix m = target;
  return [m, d](const std::vector<double>& theta) {
    std::vector<double> v1(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d * d));
    std::vector<double> v2(theta.begin() + static_cast<std::ptrdiff_t>(d * d), theta.end());
    Matrix w1 = unvec_cm(v1, d, d);
    Matrix w2 = unvec_cm(v2, d, d);
    MatfacGrads g = matfac_loss_grad(w1, w2, m);
    std::vector<double> grad = vec_cm(g.grad_w1);
    const std::vector<double> g2 = vec_cm(g.grad_w2);
    grad.insert(grad.end(), g2.begin(), g2.end());
    return std::make_pair(g.loss, grad);
  };
}

// ---------------------------------------------------------------------------
// Condition-number lower bound (scaled factorization)

// a^4 sigma_max^2(W2) / sigma_min^2(W1); requires full-rank inputs.
inline double condition_lower_bound(const Matrix& w1, const Matrix& w2, double a) {
  SvdResult s1 = svd_small(w1);
  SvdResult s2 = svd_small(w2);
  const double smax1 = s1.s.front(), smin1 = s1.s.back();
  const double smax2 = s2.s.front();
  if (smin1 <= 1e-10 * smax1 || s2.s.back() <= 1e-10 * smax2)
    throw ValueError("condition_lower_bound: input is numerically rank-deficient");
  return a * a * a * a * smax2 * smax2 / (smin1 * smin1);
}

struct HessianReport {
  double a = 1.0;
  Matrix h11_analytic, h22_analytic;
  Matrix numeric;           // full symmetrized FD Hessian
  std::vector<double> eigenvalues;
  double condition_number = 0.0;
  double lower_bound = 0.0;
  double block_rel_err = 0.0;  // analytic vs numeric diagonal blocks
};

// Verifies the scaled-factorization conditioning statement on one pair:
// target fixed at M = W1 W2 (zero residual at the scaled point, where the
// Hessian is the positive semidefinite Gauss-Newton form the bound assumes).
inline HessianReport hessian_conditioning_report(const Matrix& w1, const Matrix& w2, double a,
                                                 double eps = 1e-5) {
  const std::size_t d = w1.rows();
  Matrix tw1 = w1 * (1.0 / a);
  Matrix tw2 = w2 * a;
  Matrix m = matmul(w1, w2);
  HessianReport rep;
  rep.a = a;
  auto blocks = matfac_hessian_blocks(tw1, tw2);
  rep.h11_analytic = std::move(blocks.first);
  rep.h22_analytic = std::move(blocks.second);

  std::vector<double> theta = vec_cm(tw1);
  const std::vector<double> t2 = vec_cm(tw2);
  theta.insert(theta.end(), t2.begin(), t2.end());
  const double scale = std::sqrt(frob_norm_sq(tw1) + frob_norm_sq(tw2));
  rep.numeric = numeric_hessian(matfac_objective(m, d), theta, eps * (1.0 + scale));
  rep.eigenvalues = sym_eig_small(rep.numeric);

  double mx = 0.0, mn = std::numeric_limits<double>::infinity();
  for (double v : rep.eigenvalues) {
    mx = std::max(mx, std::abs(v));
    mn = std::min(mn, std::abs(v));
  }
  rep.condition_number = mx / std::max(mn, 1e-300);
  rep.lower_bound = condition_lower_bound(w1, w2, a);

  const std::size_t n = d * d;
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      err = std::max(err, std::abs(rep.numeric(i, j) - rep.h11_analytic(i, j)));
    }
  err /= std::max(max_abs(rep.h11_analytic), 1e-300);
  double err22 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      err22 = std::max(err22, std::abs(rep.numeric(n + i, n + j) - rep.h22_analytic(i, j)));
  err22 /= std::max(max_abs(rep.h22_analytic), 1e-300);
  rep.block_rel_err = std::max(err, err22);
  return rep;
}

// ---------------------------------------------------------------------------
// Hutchinson trace estimator

struct TraceEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t probes = 0;
};

// E[z^T H z] over Rademacher probes; Hz via central-difference HVP of the
// analytic gradient with eps = sqrt(machine precision) * (1 + ||theta||).
inline TraceEstimate hutchinson_trace(const LossWithGrad& f, const std::vector<double>& theta,
                                      std::size_t probes, Rng rng) {
  if (probes < 1) throw ValueError("hutchinson_trace: probes must be >= 1");
  const std::size_t p = theta.size();
  double nrm = 0.0;
  for (double v : theta) nrm += v * v;
  nrm = std::sqrt(nrm);
  const double eps = std::sqrt(2.220446049250313e-16) * (1.0 + nrm);

  double sum = 0.0, sum2 = 0.0;
  std::vector<double> z(p), tp(p), tm(p);
  for (std::size_t k = 0; k < probes; ++k) {
    for (std::size_t i = 0; i < p; ++i) z[i] = rng.rademacher();
    for (std::size_t i = 0; i < p; ++i) {
      tp[i] = theta[i] + eps * z[i];
      tm[i] = theta[i] - eps * z[i];
    }
    const auto gp = f(tp).second;
    const auto gm = f(tm).second;
    double q = 0.0;
    for (std::size_t i = 0; i < p; ++i) q += z[i] * (gp[i] - gm[i]);
    q /= 2.0 * eps;
    if (!std::isfinite(q)) throw ValueError("hutchinson_trace: non-finite HVP");
    sum += q;
    sum2 += q * q;
  }
  TraceEstimate e;
  e.probes = probes;
  e.estimate = sum / static_cast<double>(probes);
  if (probes > 1) {
    const double var = (sum2 - sum * sum / static_cast<double>(probes)) /
                       static_cast<double>(probes - 1);
    e.stderr_ = std::sqrt(std::max(var, 0.0) / static_cast<double>(probes));
  }
  return e;
}

// ---------------------------------------------------------------------------
// Scaled-initialization training experiment

struct MatfacConfig {
  std::size_t d = 64;
  double a = 100.0;
  std::vector<double> sgd_lrs{1e-2, 1e-3, 1e-5};
  std::vector<double> adam_lrs{5e-2, 3e-2, 2e-2};
  std::size_t sgd_steps = 20000;
  std::size_t adam_steps = 25000;
  std::size_t seeds = 5;
  std::uint64_t master_seed = 0;
  double threshold_frac = 1e-3;   // steps-to-threshold target: loss <= frac * initial
  double stop_frac = 1e-9;        // early stop once loss falls this far
  std::size_t record_every = 100;
  std::size_t jobs = 0;
};

struct MatfacCell {
  std::string optimizer;  // "sgd" | "adam"
  double lr = 0.0;
  double a = 1.0;
  std::uint64_t seed = 0;
  TrajectoryRecord traj;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t steps_to_threshold = static_cast<std::size_t>(-1);
  bool diverged = false;
};

inline std::string format_shorthand(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return std::string(buf);
}

inline MatfacCell run_matfac_cell(const MatfacConfig& cfg, const std::string& optname, double lr,
                                  double a, std::uint64_t seed) {
  const std::size_t d = cfg.d;
  const double sd = std::sqrt(1.0 / static_cast<double>(d));
  Rng rng(seed, 0);
  Matrix m = rng_fill(rng, d, d, NormalDist{0.0, sd});
  Matrix w1 = rng_fill(rng, d, d, NormalDist{0.0, sd});
  Matrix w2 = rng_fill(rng, d, d, NormalDist{0.0, sd});
  w1 = w1 * (1.0 / a);
  w2 = w2 * a;

  MatfacCell cell;
  cell.optimizer = optname;
  cell.lr = lr;
  cell.a = a;
  cell.seed = seed;
  cell.traj.config_id = optname + "_a" + format_shorthand(a) + "_lr" + format_shorthand(lr) +
                        "_s" + std::to_string(seed);
  const bool adam = optname == "adam";
  const std::size_t steps = adam ? cfg.adam_steps : cfg.sgd_steps;
  auto p1 = make_param("w1", w1);
  auto p2 = make_param("w2", w2);
  auto opt = adam ? Optimizer::adamw({0.9, 0.999, 1e-8, 0.0}) : Optimizer::sgd();
  DivergenceDetector det;
  const auto t0 = MonoClock::now();
  for (std::size_t step = 0; step < steps; ++step) {
    MatfacGrads g = matfac_loss_grad(p1->value, p2->value, m);
    if (step == 0) cell.initial_loss = g.loss;
    cell.final_loss = g.loss;
    const double gn = std::sqrt(frob_norm_sq(g.grad_w1) + frob_norm_sq(g.grad_w2));
    if (step % cfg.record_every == 0 || step + 1 == steps)
      cell.traj.append({step + 1, g.loss, 0.0, gn, seconds_since(t0), 0.0});
    if (cell.steps_to_threshold == static_cast<std::size_t>(-1) &&
        g.loss <= cfg.threshold_frac * cell.initial_loss)
      cell.steps_to_threshold = step;
    if (det.observe(g.loss)) {
      cell.diverged = true;
      cell.traj.diverged = true;
      break;
    }
    if (g.loss <= cfg.stop_frac * cell.initial_loss) break;
    GradStore gs;
    gs.add(p1->id, g.grad_w1);
    gs.add(p2->id, g.grad_w2);
    opt.step({p1, p2}, gs, lr);
  }
  cell.traj.extras.push_back({"grad_w1_norm", frob_norm(matfac_loss_grad(p1->value, p2->value, m).grad_w1)});
  cell.traj.extras.push_back({"grad_w2_norm", frob_norm(matfac_loss_grad(p1->value, p2->value, m).grad_w2)});
  return cell;
}

inline std::vector<MatfacCell> matfac_experiment(const MatfacConfig& cfg) {
  struct Job {
    std::string opt;
    double lr, a;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const double a : {1.0, cfg.a}) {
    for (double lr : cfg.sgd_lrs)
      for (std::size_t s = 0; s < cfg.seeds; ++s)
        jobs.push_back({"sgd", lr, a, cfg.master_seed + 1000 + s});
    for (double lr : cfg.adam_lrs)
      for (std::size_t s = 0; s < cfg.seeds; ++s)
        jobs.push_back({"adam", lr, a, cfg.master_seed + 1000 + s});
  }
  std::vector<MatfacCell> cells(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    cells[i] = run_matfac_cell(cfg, jobs[i].opt, jobs[i].lr, jobs[i].a, jobs[i].seed);
  });
  return cells;
}

// ---------------------------------------------------------------------------
// Empirical locking factor

struct EmpiricalKappa {
  double wallclock_ratio = 0.0;
  double token_ratio = 0.0;
  bool locked_reached = true;
  bool baseline_reached = true;
};

// Ratio of cost-to-target (locked / baseline) in wall-clock seconds and in
// tokens. Baseline must reach the target; if the locked run does not, the
// ratios are +inf and locked_reached is false.
inline EmpiricalKappa empirical_kappa(const TrajectoryRecord& baseline,
                                      const TrajectoryRecord& locked, double target_loss) {
  EmpiricalKappa k;
  const double bw = baseline.first_wallclock_below(target_loss);
  const double bt = baseline.first_tokens_below(target_loss);
  if (!std::isfinite(bw)) {
    k.baseline_reached = false;
    throw ValueError("empirical_kappa: baseline never reaches the target loss");
  }
  const double lw = locked.first_wallclock_below(target_loss);
  const double lt = locked.first_tokens_below(target_loss);
  if (!std::isfinite(lw)) {
    k.locked_reached = false;
    k.wallclock_ratio = std::numeric_limits<double>::infinity();
    k.token_ratio = std::numeric_limits<double>::infinity();
    return k;
  }
  k.wallclock_ratio = lw / std::max(bw, 1e-12);
  k.token_ratio = bt > 0 ? lt / bt : 1.0;
  return k;
}

}  // namespace dlrlock
