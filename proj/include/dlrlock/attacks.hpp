// The adaptive-attacker toolbox: weight-symmetry transforms and their
// canonical reversal, penalty-based locking sweeps, full and partial
// fine-tuning attacks with per-phase timing, LoRA, and reverse distillation.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dlrlock/analysis.hpp"
#include "dlrlock/distill.hpp"
#include "dlrlock/jacobi.hpp"
#include "dlrlock/mlp_task.hpp"

namespace dlrlock {

// ---------------------------------------------------------------------------
// Weight-symmetry transforms

// (W1, W2) -> (a^-1 W1, a W2); exact function preservation through any
// positively homogeneous activation between the two maps.
inline std::pair<Matrix, Matrix> scale_reparam(const Matrix& w1, const Matrix& w2, double a) {
  if (a <= 0.0) throw ValueError("scale_reparam: a must be > 0");
  return {w1 * (1.0 / a), w2 * a};
}

inline Matrix invert_via_svd(const Matrix& a) {
  SvdResult s = svd_small(a);
  if (s.s.back() <= 1e-10 * s.s.front())
    throw ValueError("insert_invertible: matrix numerically singular");
  // A^-1 = V diag(1/s) U^T
  Matrix v = transpose(s.vt);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) /= s.s[j];
  return matmul_nt(v, s.u);
}

// Inserts A and its inverse between consecutive linear maps:
// (W1, W2) -> (W2 A^-1, A W1), preserving the product W2 W1.
inline std::pair<Matrix, Matrix> insert_invertible(const Matrix& w1, const Matrix& w2,
                                                   const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("insert_invertible: A must be square");
  Matrix ainv = invert_via_svd(a);
  return {matmul(w2, ainv), matmul(a, w1)};
}

// ---------------------------------------------------------------------------
// Canonical rebalance

// Snaps entries to a power-of-two grid about 2^-24 relative to the largest
// magnitude, so the rounding noise a prior invertible insertion leaves in the
// product cannot change the canonical factorization's bits. The grid is a
// power of two (stable under tiny perturbations of the max, and the snap
// arithmetic below is exact).
inline Matrix quantize_for_canonicalization(const Matrix& m) {
  const double scale = max_abs(m);
  if (scale == 0.0) return m;
  int e = 0;
  std::frexp(scale, &e);
  const double grid = std::ldexp(1.0, e - 24);
  Matrix q = m;
  for (std::size_t i = 0; i < q.size(); ++i)
    q.data()[i] = std::round(q.data()[i] / grid) * grid;
  return q;
}

// Canonical factorization (U sqrt(S))(sqrt(S) V^T) of the product W2 W1.
// Signs fixed by making the largest-magnitude entry of each U column
// positive; output is independent of any insert_invertible applied first.
inline std::pair<Matrix, Matrix> svd_rebalance(const Matrix& w2, const Matrix& w1) {
  Matrix prod = quantize_for_canonicalization(matmul(w2, w1));
  SvdResult s = svd_small(prod);
  const std::size_t k = s.s.size();
  Matrix u = s.u, vt = s.vt;
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < u.rows(); ++i)
      if (std::abs(u(i, j)) > std::abs(u(arg, j))) arg = i;
    if (u(arg, j) < 0.0) {
      for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
      for (std::size_t i = 0; i < vt.cols(); ++i) vt(j, i) = -vt(j, i);
    }
  }
  Matrix left = u, right = vt;
  for (std::size_t j = 0; j < k; ++j) {
    const double rs = std::sqrt(s.s[j]);
    for (std::size_t i = 0; i < left.rows(); ++i) left(i, j) *= rs;
    for (std::size_t i = 0; i < right.cols(); ++i) right(j, i) *= rs;
  }
  return {left, right};
}

// ---------------------------------------------------------------------------
// Penalty-based locking sweep

enum class OmegaKind { delta_norm_sq, hessian_trace };
enum class SweepScope { all, first_layer, random_10pct, random_50pct };

inline std::string omega_kind_name(OmegaKind k) {
  return k == OmegaKind::delta_norm_sq ? "delta_norm_sq" : "hessian_trace";
}
inline std::string sweep_scope_name(SweepScope s) {
  switch (s) {
    case SweepScope::all: return "all";
    case SweepScope::first_layer: return "first_layer";
    case SweepScope::random_10pct: return "random_10pct";
    default: return "random_50pct";
  }
}

struct PenaltySweepConfig {
  std::size_t lambda_count = 29;
  double lambda_min = 1e-6;
  double lambda_max = 1e2;
  std::vector<double> lrs{1e-3, 1e-2, 1e-1};
  OmegaKind omega = OmegaKind::delta_norm_sq;
  SweepScope scope = SweepScope::all;
  std::size_t steps = 0;  // 0: 240 for delta_norm_sq, 100 for hessian_trace
  std::size_t batch = 16;
  std::size_t probes = 4;  // Hutchinson probes per step inside the sweep
  double clip_norm = 1.0;
  std::size_t seeds = 1;
  std::uint64_t master_seed = 0;
  std::size_t eval_samples = 256;
  std::size_t record_every = 25;
  std::size_t jobs = 0;
  std::vector<double> star_scales{2.0, 5.0, 10.0, 100.0};
  // base task: synthetic blobs unless both IDX paths are given
  std::size_t input_dim = 784, hidden = 128, classes = 10;
  std::size_t train_samples = 2048;
  std::size_t base_steps = 400;
  double base_lr = 0.5;
  std::size_t base_batch = 128;
  std::string mnist_images, mnist_labels;
};

struct SymmetryPoint {
  double a = 0.0;
  double rel_error = 0.0;
  double omega_rel = 0.0;
};

struct PenaltySweepResult {
  OmegaKind omega;
  SweepScope scope;
  double base_accuracy = 0.0;
  double base_ce = 0.0;
  std::vector<double> lambdas;
  std::vector<TrajectoryRecord> trajectories;
  std::vector<SymmetryPoint> stars;
};

struct SweepTask {
  TwoLayerMlp base;
  Matrix x_train, x_eval;
  std::vector<std::size_t> y_train, y_eval;
  Matrix f0_train, f0_eval;
  ScopeMask mask;
  std::vector<double> tau0_eval;  // per-sample scope trace at theta0
  double theta0_norm_sq = 0.0;
  double accuracy = 0.0, ce = 0.0;
};

inline SweepTask build_sweep_task(const PenaltySweepConfig& cfg) {
  SweepTask task;
  Matrix x;
  std::vector<std::size_t> y;
  if (!cfg.mnist_images.empty() && !cfg.mnist_labels.empty()) {
    x = load_idx_images(cfg.mnist_images);
    y = load_idx_labels(cfg.mnist_labels);
  } else {
    Classification blobs = synthetic_blobs(cfg.classes, cfg.input_dim,
                                           cfg.train_samples + cfg.eval_samples,
                                           cfg.master_seed + 17);
    x = std::move(blobs.x);
    y = std::move(blobs.y);
  }
  if (x.rows() < cfg.train_samples + cfg.eval_samples)
    throw ValueError("penalty sweep: dataset smaller than train+eval split");
  task.x_train = Matrix(cfg.train_samples, x.cols());
  task.x_eval = Matrix(cfg.eval_samples, x.cols());
  for (std::size_t i = 0; i < cfg.train_samples; ++i)
    std::copy(x.row(i), x.row(i) + x.cols(), task.x_train.row(i));
  for (std::size_t i = 0; i < cfg.eval_samples; ++i)
    std::copy(x.row(cfg.train_samples + i), x.row(cfg.train_samples + i) + x.cols(),
              task.x_eval.row(i));
  task.y_train.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(cfg.train_samples));
  task.y_eval.assign(y.begin() + static_cast<std::ptrdiff_t>(cfg.train_samples),
                     y.begin() + static_cast<std::ptrdiff_t>(cfg.train_samples + cfg.eval_samples));

  Rng rng(cfg.master_seed, 3);
  task.base = init_mlp(x.cols(), cfg.hidden, cfg.classes, rng.substream("mlp_init"));
  Rng brng = rng.substream("base_train");
  for (std::size_t step = 0; step < cfg.base_steps; ++step) {
    Matrix xb(cfg.base_batch, x.cols());
    std::vector<std::size_t> yb(cfg.base_batch);
    for (std::size_t b = 0; b < cfg.base_batch; ++b) {
      const std::size_t i = brng.below(cfg.train_samples);
      std::copy(task.x_train.row(i), task.x_train.row(i) + x.cols(), xb.row(b));
      yb[b] = task.y_train[i];
    }
    MlpGrads g = mlp_ce_grads(task.base, xb, yb);
    for (std::size_t i = 0; i < g.g1.size(); ++i)
      task.base.w1.data()[i] -= cfg.base_lr * g.g1.data()[i];
    for (std::size_t i = 0; i < g.g2.size(); ++i)
      task.base.w2.data()[i] -= cfg.base_lr * g.g2.data()[i];
  }
  auto preds = mlp_predict(task.base, task.x_eval);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i] == task.y_eval[i]) ++correct;
  task.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  task.ce = mlp_ce_grads(task.base, task.x_eval, task.y_eval).loss;

  task.f0_train = mlp_forward(task.base, task.x_train).f;
  task.f0_eval = mlp_forward(task.base, task.x_eval).f;
  task.theta0_norm_sq = frob_norm_sq(task.base.w1) + frob_norm_sq(task.base.w2);

  switch (cfg.scope) {
    case SweepScope::all: task.mask = ScopeMask::all(); break;
    case SweepScope::first_layer: task.mask = ScopeMask::first_layer(); break;
    case SweepScope::random_10pct:
      task.mask = ScopeMask::random_fraction(task.base, 0.10, rng.substream("mask10"));
      break;
    case SweepScope::random_50pct:
      task.mask = ScopeMask::random_fraction(task.base, 0.50, rng.substream("mask50"));
      break;
  }
  task.tau0_eval = mlp_ce_trace_batch(task.base, task.x_eval, task.mask);
  return task;
}

namespace detail {

inline double geomean_ratio(const std::vector<double>& num, const std::vector<double>& den) {
  double acc = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i)
    acc += std::log(std::max(num[i], 1e-300) / std::max(den[i], 1e-300));
  return std::exp(acc / static_cast<double>(num.size()));
}

inline double sweep_rel_error(const SweepTask& task, const TwoLayerMlp& m) {
  Matrix f = mlp_forward(m, task.x_eval).f;
  double acc = 0.0;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < f.cols(); ++j) {
      const double d = f(i, j) - task.f0_eval(i, j);
      num += d * d;
      den += task.f0_eval(i, j) * task.f0_eval(i, j);
    }
    acc += std::log(std::max(num, 1e-300) / std::max(den, 1e-300));
  }
  return std::exp(acc / static_cast<double>(f.rows()));
}

// Relative Omega at a parameter point, per the configured kind.
inline double sweep_omega_rel(const PenaltySweepConfig& cfg, const SweepTask& task,
                              const TwoLayerMlp& m, double* batch_trace_rel = nullptr) {
  if (cfg.omega == OmegaKind::delta_norm_sq) {
    const double d1 = frob_norm_sq(m.w1 - task.base.w1);
    const double d2 = frob_norm_sq(m.w2 - task.base.w2);
    if (batch_trace_rel) *batch_trace_rel = (d1 + d2) / task.theta0_norm_sq;
    return (d1 + d2) / task.theta0_norm_sq;
  }
  std::vector<double> tau = mlp_ce_trace_batch(m, task.x_eval, task.mask);
  if (batch_trace_rel) {
    double s = 0.0, s0 = 0.0;
    for (double v : tau) s += v;
    for (double v : task.tau0_eval) s0 += v;
    *batch_trace_rel = s / std::max(s0, 1e-300);
  }
  return geomean_ratio(tau, task.tau0_eval);
}

}  // namespace detail

inline TrajectoryRecord run_sweep_cell(const PenaltySweepConfig& cfg, const SweepTask& task,
                                       double lambda, double lr, std::size_t seed_index,
                                       std::size_t cell_index) {
  const std::size_t steps =
      cfg.steps ? cfg.steps : (cfg.omega == OmegaKind::delta_norm_sq ? 240 : 100);
  Rng rng = Rng(cfg.master_seed).substream("sweep_cell", cell_index);
  TwoLayerMlp cur = task.base;
  char cid[128];
  std::snprintf(cid, sizeof cid, "%s_%s_lam%.4e_lr%g_s%zu", omega_kind_name(cfg.omega).c_str(),
                sweep_scope_name(cfg.scope).c_str(), lambda, lr, seed_index);
  TrajectoryRecord rec;
  rec.config_id = cid;
  const auto t0 = MonoClock::now();

  const std::size_t p1 = task.base.w1.size(), p2 = task.base.w2.size();
  std::vector<double> z1(p1), z2(p2);

  for (std::size_t step = 0; step < steps; ++step) {
    Matrix xb(cfg.batch, task.x_train.cols());
    Matrix f0b(cfg.batch, task.f0_train.cols());
    std::vector<std::size_t> yb(cfg.batch);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t i = rng.below(task.x_train.rows());
      std::copy(task.x_train.row(i), task.x_train.row(i) + xb.cols(), xb.row(b));
      std::copy(task.f0_train.row(i), task.f0_train.row(i) + f0b.cols(), f0b.row(b));
      yb[b] = task.y_train[i];
    }
    MlpGrads mse = mlp_match_grads(cur, xb, f0b);
    Matrix pen1(cur.w1.rows(), cur.w1.cols());
    Matrix pen2(cur.w2.rows(), cur.w2.cols());
    if (cfg.omega == OmegaKind::delta_norm_sq) {
      pen1 = (cur.w1 - task.base.w1) * 2.0;
      pen2 = (cur.w2 - task.base.w2) * 2.0;
    } else {
      // grad of the Hutchinson trace estimate: second difference of the
      // cross-entropy gradient along scope-restricted Rademacher probes
      MlpGrads g0 = mlp_ce_grads(cur, xb, yb);
      const double tn = std::sqrt(frob_norm_sq(cur.w1) + frob_norm_sq(cur.w2));
      for (std::size_t probe = 0; probe < cfg.probes; ++probe) {
        double zn2 = 0.0;
        for (std::size_t i = 0; i < p1; ++i) {
          const double mv = task.mask.mask1(i / cur.w1.cols(), i % cur.w1.cols());
          z1[i] = mv != 0.0 ? rng.rademacher() : 0.0;
          zn2 += z1[i] * z1[i];
        }
        for (std::size_t i = 0; i < p2; ++i) {
          const double mv = task.mask.mask2(i / cur.w2.cols(), i % cur.w2.cols());
          z2[i] = mv != 0.0 ? rng.rademacher() : 0.0;
          zn2 += z2[i] * z2[i];
        }
        if (zn2 == 0.0) continue;
        const double eps = std::cbrt(2.220446049250313e-16) * (1.0 + tn) / std::sqrt(zn2);
        TwoLayerMlp mp = cur, mm = cur;
        for (std::size_t i = 0; i < p1; ++i) {
          mp.w1.data()[i] += eps * z1[i];
          mm.w1.data()[i] -= eps * z1[i];
        }
        for (std::size_t i = 0; i < p2; ++i) {
          mp.w2.data()[i] += eps * z2[i];
          mm.w2.data()[i] -= eps * z2[i];
        }
        MlpGrads gp = mlp_ce_grads(mp, xb, yb);
        MlpGrads gm = mlp_ce_grads(mm, xb, yb);
        const double c = 1.0 / (eps * eps * static_cast<double>(cfg.probes));
        for (std::size_t i = 0; i < p1; ++i)
          pen1.data()[i] += (gp.g1.data()[i] - 2.0 * g0.g1.data()[i] + gm.g1.data()[i]) * c;
        for (std::size_t i = 0; i < p2; ++i)
          pen2.data()[i] += (gp.g2.data()[i] - 2.0 * g0.g2.data()[i] + gm.g2.data()[i]) * c;
      }
    }
    // objective: MSE - lambda * Omega, minimized by SGD with norm clipping
    Matrix g1 = mse.g1 - pen1 * lambda;
    Matrix g2 = mse.g2 - pen2 * lambda;
    const double gn = std::sqrt(frob_norm_sq(g1) + frob_norm_sq(g2));
    double scale = 1.0;
    if (gn > cfg.clip_norm && gn > 0.0) scale = cfg.clip_norm / gn;
    for (std::size_t i = 0; i < p1; ++i) cur.w1.data()[i] -= lr * scale * g1.data()[i];
    for (std::size_t i = 0; i < p2; ++i) cur.w2.data()[i] -= lr * scale * g2.data()[i];

    if (step % cfg.record_every == 0 || step + 1 == steps) {
      double batch_rel = 0.0;
      const double om = detail::sweep_omega_rel(cfg, task, cur, &batch_rel);
      TrajectoryPoint pt{step + 1, detail::sweep_rel_error(task, cur), om, gn,
                         seconds_since(t0), 0.0};
      rec.append(pt);
      if (step + 1 == steps) rec.extras.push_back({"omega_batch_rel", batch_rel});
    }
  }
  return rec;
}

inline PenaltySweepResult penalty_lock_sweep(const PenaltySweepConfig& cfg) {
  SweepTask task = build_sweep_task(cfg);
  PenaltySweepResult res;
  res.omega = cfg.omega;
  res.scope = cfg.scope;
  res.base_accuracy = task.accuracy;
  res.base_ce = task.ce;
  for (std::size_t i = 0; i < cfg.lambda_count; ++i) {
    const double t = cfg.lambda_count == 1
                         ? 0.0
                         : static_cast<double>(i) / static_cast<double>(cfg.lambda_count - 1);
    res.lambdas.push_back(cfg.lambda_min *
                          std::pow(cfg.lambda_max / cfg.lambda_min, t));
  }
  struct Cell {
    double lambda, lr;
    std::size_t seed_index;
  };
  std::vector<Cell> cells;
  for (double lam : res.lambdas)
    for (double lr : cfg.lrs)
      for (std::size_t s = 0; s < cfg.seeds; ++s) cells.push_back({lam, lr, s});
  res.trajectories.resize(cells.size());
  parallel_for(cells.size(), cfg.jobs, [&](std::size_t i) {
    res.trajectories[i] =
        run_sweep_cell(cfg, task, cells[i].lambda, cells[i].lr, cells[i].seed_index, i);
  });

  for (double a : cfg.star_scales) {
    auto [w1s, w2s] = scale_reparam(task.base.w1, task.base.w2, a);
    TwoLayerMlp star{w1s, w2s};
    SymmetryPoint sp;
    sp.a = a;
    sp.rel_error = detail::sweep_rel_error(task, star);
    sp.omega_rel = detail::sweep_omega_rel(cfg, task, star);
    res.stars.push_back(sp);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Fine-tuning attack with per-phase timing

struct FinetuneConfig {
  double lr = 1e-5;
  std::size_t steps = 300;
  std::size_t batch = 4;
  std::size_t seq_len = 32;
  std::size_t checkpoint_interval = 0;  // 0: off
  long long element_budget = 0;         // 0: unlimited; else peak-element cap
  double clip_norm = 1.0;
  double weight_decay = 1e-5;
  std::size_t warmup_steps = 5;  // timing warmup, excluded from aggregates
  std::size_t record_every = 10;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  TrajectoryRecord traj;
  TimingReport timing;
  std::size_t effective_batch = 0;
  bool memory_limited = false;  // hit the element budget, retried at half batch
  long long peak_elements = 0;
  bool diverged = false;
};

inline FinetuneResult finetune_attack(TransformerParams& model, const ByteCorpus& corpus,
                                      const FinetuneConfig& cfg) {
  set_all_trainable(model);
  auto params = collect_params(model);
  auto opt = Optimizer::adamw({0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng = Rng(cfg.seed).substream("finetune");
  FinetuneResult res;
  res.traj.config_id = "finetune_lr" + format_shorthand(cfg.lr);
  res.effective_batch = cfg.batch;

  ForwardOptions fopt;
  fopt.checkpoint_interval = cfg.checkpoint_interval;

  // Memory probe: halve the batch until the peak fits the element budget
  // (the "must resort to" condition).
  if (cfg.element_budget > 0) {
    for (;;) {
      Tape probe(TapeMode::train_full);
      Rng prng = rng;  // copy; probing does not advance the schedule
      Var loss = probe.constant(Matrix{{0.0}});
      for (std::size_t b = 0; b < res.effective_batch; ++b) {
        auto w = corpus.sample_train_window(prng, cfg.seq_len);
        std::vector<std::size_t> input(w.begin(), w.end() - 1);
        std::vector<std::size_t> target(w.begin() + 1, w.end());
        Var logits = transformer_logits(probe, model, input, fopt);
        loss = ops::add(probe, loss, ops::cross_entropy_mean(probe, logits, target));
      }
      probe.backward(loss);
      if (probe.meter().peak_elements() <= cfg.element_budget) break;
      if (res.effective_batch == 1)
        throw ValueError("finetune_attack: even batch 1 exceeds the element budget");
      res.effective_batch /= 2;
      res.memory_limited = true;
    }
  }

  DivergenceDetector det;
  const auto t0 = MonoClock::now();
  const double resolution = clock_resolution_s();
  res.timing.warmup = cfg.warmup_steps;
  double tokens = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    StepTiming st;
    PhaseTimer total_timer, phase;
    total_timer.begin();

    phase.begin();
    Tape tape(TapeMode::train_full);
    Var loss = tape.constant(Matrix{{0.0}});
    for (std::size_t b = 0; b < res.effective_batch; ++b) {
      auto w = corpus.sample_train_window(rng, cfg.seq_len);
      std::vector<std::size_t> input(w.begin(), w.end() - 1);
      std::vector<std::size_t> target(w.begin() + 1, w.end());
      Var logits = transformer_logits(tape, model, input, fopt);
      Var ce = ops::cross_entropy_mean(tape, logits, target);
      loss = ops::add(tape, loss,
                      ops::scale(tape, ce, 1.0 / static_cast<double>(res.effective_batch)));
    }
    st.forward_s = phase.end();
    const double loss_v = loss.scalar();

    phase.begin();
    GradStore grads = tape.backward(loss);
    const auto clip = clip_grad_norm(grads, cfg.clip_norm);
    st.backward_s = phase.end();

    phase.begin();
    if (clip.finite && !tape.diverged()) opt.step(params, grads, cfg.lr);
    st.optimizer_s = phase.end();
    st.total_s = total_timer.end();

    res.peak_elements = std::max(res.peak_elements, tape.meter().peak_elements());
    if (step >= cfg.warmup_steps) {
      res.timing.steps.push_back(st);
      if (st.forward_s < 100.0 * resolution) res.timing.resolution_warning = true;
    }
    tokens += static_cast<double>(res.effective_batch * cfg.seq_len);
    if (step % cfg.record_every == 0 || step + 1 == cfg.steps)
      res.traj.append({step + 1, loss_v, 0.0, grads.global_norm(), seconds_since(t0), tokens});
    if (!clip.finite || tape.diverged() || det.observe(loss_v)) {
      res.diverged = true;
      res.traj.diverged = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Partial-update attack

enum class PartialMode { freeze_dlr, stop_grad_dlr };

struct PartialResult {
  TrajectoryRecord traj;
  // per-token saved elements of one DLR sub-layer during the probe step
  long long per_layer_saved_elements = 0;
  double bias_ratio = 0.0;  // ||g_full - g_mode|| / ||g_full|| over shared params
  bool diverged = false;
};

inline PartialResult partial_update_attack(TransformerParams& model, const ByteCorpus& corpus,
                                           PartialMode mode, double lr, std::size_t steps,
                                           std::uint64_t seed = 0, std::size_t seq_len = 32,
                                           std::size_t batch = 4) {
  set_dlr_only_trainable(model, false);  // DLR frozen, everything else trains
  auto params = collect_params(model);
  auto opt = Optimizer::adamw({0.9, 0.999, 1e-8, 1e-5});
  Rng rng = Rng(seed).substream("partial");
  PartialResult res;
  res.traj.config_id = mode == PartialMode::freeze_dlr ? "partial_freeze" : "partial_stopgrad";

  ForwardOptions fopt;
  fopt.stop_grad_dlr = mode == PartialMode::stop_grad_dlr;

  // Memory probe on a single token so counters match the per-token formula.
  {
    Tape probe(TapeMode::train_full);
    std::vector<std::size_t> one{65};
    Var logits = transformer_logits(probe, model, one, fopt);
    std::vector<std::size_t> tgt{66};
    probe.backward(ops::cross_entropy_mean(probe, logits, tgt));
    // read the first DLR sub-layer scope
    for (std::size_t l = 0; l < model.n_layers; ++l)
      if (model.ffn[l].kind == FfnBlock::Kind::dlr) {
        res.per_layer_saved_elements =
            probe.meter().scope_elements("layer" + std::to_string(l) + ".dlr0");
        break;
      }
  }

  // Bias of the stop-grad signal against the full gradient on one batch.
  {
    Rng brng = rng;
    std::vector<std::vector<std::size_t>> ws;
    for (std::size_t b = 0; b < batch; ++b) ws.push_back(corpus.sample_train_window(brng, seq_len));
    auto grads_with = [&](bool sg) {
      ForwardOptions o;
      o.stop_grad_dlr = sg;
      Tape t(TapeMode::train_full);
      Var loss = t.constant(Matrix{{0.0}});
      for (const auto& w : ws) {
        std::vector<std::size_t> input(w.begin(), w.end() - 1);
        std::vector<std::size_t> target(w.begin() + 1, w.end());
        Var ce = ops::cross_entropy_mean(t, transformer_logits(t, model, input, o), target);
        loss = ops::add(t, loss, ops::scale(t, ce, 1.0 / static_cast<double>(batch)));
      }
      return t.backward(loss);
    };
    GradStore full = grads_with(false);
    GradStore part = grads_with(mode == PartialMode::stop_grad_dlr);
    double num = 0.0, den = 0.0;
    for (const auto& p : params) {
      const Matrix* gf = full.find(p->id);
      if (!gf) continue;
      den += frob_norm_sq(*gf);
      const Matrix* gp = part.find(p->id);
      if (gp)
        num += frob_norm_sq(*gf - *gp);
      else
        num += frob_norm_sq(*gf);
    }
    res.bias_ratio = den > 0 ? std::sqrt(num / den) : 0.0;
  }

  DivergenceDetector det;
  const auto t0 = MonoClock::now();
  for (std::size_t step = 0; step < steps; ++step) {
    Tape tape(TapeMode::train_full);
    Var loss = tape.constant(Matrix{{0.0}});
    for (std::size_t b = 0; b < batch; ++b) {
      auto w = corpus.sample_train_window(rng, seq_len);
      std::vector<std::size_t> input(w.begin(), w.end() - 1);
      std::vector<std::size_t> target(w.begin() + 1, w.end());
      Var ce = ops::cross_entropy_mean(tape, transformer_logits(tape, model, input, fopt), target);
      loss = ops::add(tape, loss, ops::scale(tape, ce, 1.0 / static_cast<double>(batch)));
    }
    const double loss_v = loss.scalar();
    GradStore grads = tape.backward(loss);
    const auto clip = clip_grad_norm(grads, 1.0);
    if (!clip.finite || tape.diverged() || det.observe(loss_v)) {
      res.diverged = true;
      res.traj.diverged = true;
      break;
    }
    opt.step(params, grads, lr);
    if (step % 10 == 0 || step + 1 == steps)
      res.traj.append({step + 1, loss_v, 0.0, grads.global_norm(), seconds_since(t0),
                       static_cast<double>((step + 1) * batch * seq_len)});
  }
  set_all_trainable(model);
  return res;
}

// ---------------------------------------------------------------------------
// LoRA attack

struct LoraAttackResult {
  TrajectoryRecord traj;
  long long dlr_per_layer_saved = 0;  // frozen-mode d+r per DLR sub-layer
  bool diverged = false;
};

inline LoraAttackResult lora_attack(TransformerParams& model, const ByteCorpus& corpus,
                                    const std::vector<std::string>& targets, std::size_t rank,
                                    double lr, std::size_t steps, std::uint64_t seed = 0,
                                    std::size_t seq_len = 32, std::size_t batch = 4) {
  Rng rng(seed, 99);
  lora_attach(model, targets, rank, rng.substream("lora_init"));
  auto params = collect_params(model);
  auto opt = Optimizer::adamw({0.9, 0.999, 1e-8, 0.0});
  LoraAttackResult res;
  res.traj.config_id = "lora_r" + std::to_string(rank);

  {
    Tape probe(TapeMode::train_full);
    std::vector<std::size_t> one{65};
    Var logits = transformer_logits(probe, model, one);
    std::vector<std::size_t> tgt{66};
    probe.backward(ops::cross_entropy_mean(probe, logits, tgt));
    for (std::size_t l = 0; l < model.n_layers; ++l)
      if (model.ffn[l].kind == FfnBlock::Kind::dlr) {
        res.dlr_per_layer_saved =
            probe.meter().scope_elements("layer" + std::to_string(l) + ".dlr0");
        break;
      }
  }

  Rng srng = rng.substream("batches");
  DivergenceDetector det;
  const auto t0 = MonoClock::now();
  for (std::size_t step = 0; step < steps; ++step) {
    Tape tape(TapeMode::train_full);
    Var loss = tape.constant(Matrix{{0.0}});
    for (std::size_t b = 0; b < batch; ++b) {
      auto w = corpus.sample_train_window(srng, seq_len);
      std::vector<std::size_t> input(w.begin(), w.end() - 1);
      std::vector<std::size_t> target(w.begin() + 1, w.end());
      Var ce = ops::cross_entropy_mean(tape, transformer_logits(tape, model, input), target);
      loss = ops::add(tape, loss, ops::scale(tape, ce, 1.0 / static_cast<double>(batch)));
    }
    const double loss_v = loss.scalar();
    GradStore grads = tape.backward(loss);
    const auto clip = clip_grad_norm(grads, 1.0);
    if (!clip.finite || tape.diverged() || det.observe(loss_v)) {
      res.diverged = true;
      res.traj.diverged = true;
      break;
    }
    opt.step(params, grads, lr);
    if (step % 10 == 0 || step + 1 == steps)
      res.traj.append({step + 1, loss_v, 0.0, grads.global_norm(), seconds_since(t0),
                       static_cast<double>((step + 1) * batch * seq_len)});
  }
  return res;
}

// ---------------------------------------------------------------------------
// Reverse distillation (DLR -> SwiGLU)

struct ReverseConfig {
  std::size_t d_ff = 256;
  CollectConfig collect;
  Phase1Config train;
  std::size_t jobs = 0;
};

struct ReverseResult {
  TransformerParams reversed;
  std::vector<double> per_layer_mse;
  double total_wallclock_s = 0.0;
  std::size_t total_steps = 0;
  double locked_ppl = 0.0;
  double reversed_ppl = 0.0;
};

// One SwiGLU student distilled against a DLR residual block on cached states.
inline std::pair<SwigluParams, double> reverse_layer(const DlrNetParams& teacher,
                                                     const HiddenStateCache& cache,
                                                     std::size_t d_ff, const Phase1Config& cfg) {
  const std::size_t d = teacher.d;
  Rng rng = Rng(cfg.seed).substream("reverse", cache.layer);
  SwigluParams student = init_swiglu(d, d_ff, rng.substream("init"),
                                     "layer" + std::to_string(cache.layer) + ".ffn");
  auto params = collect_params(student);
  auto opt = Optimizer::adamw({0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng brng = rng.substream("batches");
  double last = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Matrix z(cfg.batch, d);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t row = brng.below(cache.states.rows());
      std::copy(cache.states.row(row), cache.states.row(row) + d, z.row(b));
    }
    Tape ti(TapeMode::inference);
    Matrix f = dlrnet_forward(ti, ti.input(z), teacher).m();
    Tape tape(TapeMode::train_full);
    Var out = swiglu_block(tape, tape.input(z), student);
    Var loss = ops::relative_mse(tape, out, f);
    last = loss.scalar();
    GradStore grads = tape.backward(loss);
    clip_grad_norm(grads, cfg.clip_norm);
    opt.step(params, grads, cosine_warmup_lr(step, cfg.steps, cfg.lr, cfg.warmup_frac));
  }
  return {student, last};
}

inline ReverseResult reverse_distill(const TransformerParams& locked, const ByteCorpus& corpus,
                                     const ReverseConfig& cfg) {
  for (const auto& f : locked.ffn)
    if (f.kind != FfnBlock::Kind::dlr)
      throw ValueError("reverse_distill: model has non-DLR FFN blocks");
  ReverseResult res;
  res.reversed = clone_model(locked);
  res.per_layer_mse.resize(locked.n_layers);
  const auto t0 = MonoClock::now();

  std::vector<HiddenStateCache> caches(locked.n_layers);
  for (std::size_t l = 0; l < locked.n_layers; ++l) {
    Rng rng = Rng(cfg.collect.seed).substream("reverse_collect", l);
    std::vector<std::vector<std::size_t>> seqs;
    std::size_t total = 0;
    while (total < cfg.collect.n_tokens) {
      auto w = corpus.sample_train_window(rng, cfg.collect.seq_len);
      w.pop_back();
      total += w.size();
      seqs.push_back(std::move(w));
    }
    HiddenStateCache c;
    c.layer = l;
    std::size_t rows = 0;
    for (const auto& s : seqs) rows += s.size();
    c.states = Matrix(rows, locked.d);
    std::size_t row = 0;
    for (const auto& s : seqs) {
      Tape t(TapeMode::inference);
      Matrix z = transformer_hidden_after_attn(t, locked, s, l).m();
      for (std::size_t i = 0; i < z.rows(); ++i, ++row)
        std::copy(z.row(i), z.row(i) + locked.d, c.states.row(row));
    }
    caches[l] = std::move(c);
  }

  std::vector<SwigluParams> students(locked.n_layers);
  parallel_for(locked.n_layers, cfg.jobs, [&](std::size_t l) {
    auto [student, mse] = reverse_layer(locked.ffn[l].dlr, caches[l], cfg.d_ff, cfg.train);
    students[l] = std::move(student);
    res.per_layer_mse[l] = mse;
  });
  for (std::size_t l = 0; l < locked.n_layers; ++l) {
    res.reversed.ffn[l].kind = FfnBlock::Kind::swiglu;
    res.reversed.ffn[l].swiglu = students[l];
    res.reversed.ffn[l].dlr = DlrNetParams{};
  }
  res.reversed.d_ff = cfg.d_ff;
  res.total_wallclock_s = seconds_since(t0);
  res.total_steps = cfg.train.steps * locked.n_layers;

  const auto held = corpus.heldout_tokens();
  res.locked_ppl = evaluate_perplexity(locked, held, cfg.collect.seq_len);
  res.reversed_ppl = evaluate_perplexity(res.reversed, held, cfg.collect.seq_len);
  return res;
}

}  // namespace dlrlock
