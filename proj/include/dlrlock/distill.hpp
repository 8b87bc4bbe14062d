// Two-phase locking pipeline: module-wise distillation of each SwiGLU
// residual sub-block into a budget-matched DLR-Net, then logits distillation
// of the assembled model against the teacher with a top-k KL loss.
#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlrlock/blocks.hpp"
#include "dlrlock/data.hpp"
#include "dlrlock/optim.hpp"
#include "dlrlock/parallel.hpp"
#include "dlrlock/timing.hpp"
#include "dlrlock/trajectory.hpp"

namespace dlrlock {

// ---------------------------------------------------------------------------
// Losses

// Plain-value relative MSE, mean over rows of ||g-f||^2/||f||^2. Zero-norm
// target rows are excluded (counted via *excluded).
inline double relative_mse_value(const Matrix& pred, const Matrix& target,
                                 std::size_t* excluded = nullptr) {
  Tape t(TapeMode::inference);
  return ops::relative_mse(t, t.input(pred), target, excluded).scalar();
}

// Top-k KL between two logit vectors: softmax both over the full vocabulary,
// then sum teacher-weighted log-ratios over the k highest-teacher-probability
// indices (ties broken toward the lower index, no renormalization).
inline double topk_kl(const std::vector<double>& teacher_logits,
                      const std::vector<double>& student_logits, std::size_t k) {
  const std::size_t v = teacher_logits.size();
  if (student_logits.size() != v) throw ShapeError("topk_kl: vocab mismatch");
  if (k < 1 || k > v) throw ValueError("topk_kl: k out of range");
  auto softmax = [](const std::vector<double>& z) {
    std::vector<double> p(z.size());
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      p[i] = std::exp(z[i] - mx);
      s += p[i];
    }
    for (auto& x : p) x /= s;
    return p;
  };
  const std::vector<double> pt = softmax(teacher_logits);
  const std::vector<double> ps = softmax(student_logits);
  std::vector<std::size_t> idx(v);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return pt[a] > pt[b];  // stable: ties keep lower index first
  });
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = idx[i];
    if (pt[j] <= 0.0) continue;
    acc += pt[j] * (std::log(pt[j]) - std::log(std::max(ps[j], 1e-300)));
  }
  return acc;
}

namespace ops {

// Mean over rows of the top-k KL against constant teacher probabilities.
// Teacher top-k index sets are computed here (ties toward lower index).
inline Var topk_kl_mean(Tape& t, const Var& student_logits, const Matrix& teacher_probs,
                        std::size_t k) {
  const std::size_t n = student_logits.rows(), v = student_logits.cols();
  if (!student_logits.m().same_shape(teacher_probs)) throw ShapeError("topk_kl_mean: shape mismatch");
  if (k < 1 || k > v) throw ValueError("topk_kl_mean: k out of range");

  auto ps = std::make_shared<Matrix>(n, v);
  auto topk = std::make_shared<std::vector<std::vector<std::size_t>>>(n);
  auto tmass = std::make_shared<std::vector<double>>(n, 0.0);
  double loss = 0.0;
  std::vector<std::size_t> idx(v);
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = student_logits.m().row(i);
    double mx = li[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, li[j]);
    double z = 0.0;
    double* pi = ps->row(i);
    for (std::size_t j = 0; j < v; ++j) {
      pi[j] = std::exp(li[j] - mx);
      z += pi[j];
    }
    for (std::size_t j = 0; j < v; ++j) pi[j] /= z;

    std::iota(idx.begin(), idx.end(), 0);
    const double* ti = teacher_probs.row(i);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return ti[a] > ti[b]; });
    auto& ki = (*topk)[i];
    ki.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t j : ki) {
      (*tmass)[i] += ti[j];
      if (ti[j] > 0.0) loss += ti[j] * (std::log(ti[j]) - std::log(std::max(pi[j], 1e-300)));
    }
  }
  Matrix out{{loss / static_cast<double>(n)}};
  std::vector<ValuePtr> saved;
  if (student_logits.needs_grad) saved.push_back(ps);
  Matrix tp = teacher_probs;
  return t.make_op(std::move(out), {student_logits}, std::move(saved),
                   [student_logits, ps, topk, tmass, tp](const Matrix& g, BackwardCtx& ctx) {
                     const std::size_t n = ps->rows(), v = ps->cols();
                     const double go = g(0, 0) / static_cast<double>(n);
                     Matrix gx(n, v);
                     for (std::size_t i = 0; i < n; ++i) {
                       const double* pi = ps->row(i);
                       double* gi = gx.row(i);
                       const double mass = (*tmass)[i];
                       for (std::size_t j = 0; j < v; ++j) gi[j] = go * mass * pi[j];
                       for (std::size_t j : (*topk)[i]) gi[j] -= go * tp(i, j);
                     }
                     ctx.to_var(student_logits, std::move(gx));
                   });
}

}  // namespace ops

// ---------------------------------------------------------------------------
// Hidden-state collection

struct HiddenStateCache {
  std::size_t layer = 0;
  Matrix states;  // one z row per token position
  std::uint64_t teacher_hash = 0;
  std::uint64_t corpus_hash = 0;
  std::uint64_t seed = 0;
};

inline std::uint64_t model_hash(const TransformerParams& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : collect_params(m))
    h = fnv1a64(p->value.data(), p->value.size() * sizeof(double), h);
  return h;
}

inline HiddenStateCache collect_states_from_sequences(
    const TransformerParams& teacher, const std::vector<std::vector<std::size_t>>& seqs,
    std::size_t layer) {
  if (layer >= teacher.n_layers) throw ValueError("collect_states: layer out of range");
  if (teacher.ffn[layer].kind != FfnBlock::Kind::swiglu)
    throw ValueError("collect_states: layer " + std::to_string(layer) + " is not a SwiGLU block");
  HiddenStateCache c;
  c.layer = layer;
  std::size_t total = 0;
  for (const auto& s : seqs) total += s.size();
  c.states = Matrix(total, teacher.d);
  std::size_t row = 0;
  for (const auto& s : seqs) {
    Tape t(TapeMode::inference);
    Matrix z = transformer_hidden_after_attn(t, teacher, s, layer).m();
    for (std::size_t i = 0; i < z.rows(); ++i, ++row)
      std::copy(z.row(i), z.row(i) + teacher.d, c.states.row(row));
  }
  c.teacher_hash = model_hash(teacher);
  return c;
}

struct CollectConfig {
  std::size_t n_tokens = 8192;
  std::size_t seq_len = 32;
  std::uint64_t seed = 0;
};

inline HiddenStateCache collect_states(const TransformerParams& teacher, const ByteCorpus& corpus,
                                       std::size_t layer, const CollectConfig& cfg) {
  Rng rng = Rng(cfg.seed).substream("collect", layer);
  std::vector<std::vector<std::size_t>> seqs;
  std::size_t total = 0;
  while (total < cfg.n_tokens) {
    auto w = corpus.sample_train_window(rng, cfg.seq_len);
    w.pop_back();  // windows carry one extra token for LM targets; states need seq_len
    total += w.size();
    seqs.push_back(std::move(w));
  }
  HiddenStateCache c = collect_states_from_sequences(teacher, seqs, layer);
  c.corpus_hash = corpus.hash;
  c.seed = cfg.seed;
  return c;
}

inline void save_state_cache(const std::string& path, const HiddenStateCache& c) {
  save_matrix_file(path, c.states);
  nlohmann::json j;
  j["layer"] = c.layer;
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(c.teacher_hash));
  j["teacher_hash"] = std::string(hex);
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(c.corpus_hash));
  j["corpus_hash"] = std::string(hex);
  j["seed"] = c.seed;
  std::ofstream os(path + ".json");
  os << j.dump(2) << "\n";
}

inline HiddenStateCache load_state_cache(const std::string& path) {
  HiddenStateCache c;
  c.states = load_matrix_file(path);
  std::ifstream is(path + ".json");
  if (is) {
    nlohmann::json j = nlohmann::json::parse(is);
    c.layer = j.value("layer", std::size_t(0));
    c.seed = j.value("seed", std::uint64_t(0));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Phase 1: module-wise distillation

struct Phase1Config {
  std::size_t steps = 5000;
  double lr = 3e-3;
  std::size_t batch = 32;       // token states per step
  double weight_decay = 1e-5;
  double clip_norm = 1.0;
  double warmup_frac = 0.05;
  std::size_t record_every = 100;
  std::uint64_t seed = 0;
};

struct Phase1Result {
  DlrNetParams student;
  TrajectoryRecord trajectory;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
};

// Teacher residual sub-block applied to raw states (recomputed on the fly).
inline Matrix teacher_block_value(const SwigluParams& teacher, const Matrix& z) {
  Tape t(TapeMode::inference);
  return swiglu_block(t, t.input(z), teacher).m();
}

inline Phase1Result phase1_modulewise(const SwigluParams& teacher_block,
                                      const HiddenStateCache& cache, std::size_t r,
                                      std::size_t depth, const Phase1Config& cfg) {
  const std::size_t d = teacher_block.d;
  if (cache.states.cols() != d) throw ShapeError("phase1: cache dimension mismatch");
  Rng rng = Rng(cfg.seed).substream("phase1", cache.layer);
  Phase1Result res;
  res.student = init_dlrnet(d, r, depth, rng.substream("init"),
                            "layer" + std::to_string(cache.layer) + ".dlr");
  auto params = collect_params(res.student);
  auto opt = Optimizer::adamw({0.9, 0.999, 1e-8, cfg.weight_decay});
  DivergenceDetector det;
  res.trajectory.config_id = "phase1.layer" + std::to_string(cache.layer);
  const auto t_start = MonoClock::now();
  Rng batch_rng = rng.substream("batches");

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Matrix z(cfg.batch, d);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t row = batch_rng.below(cache.states.rows());
      std::copy(cache.states.row(row), cache.states.row(row) + d, z.row(b));
    }
    Matrix f = teacher_block_value(teacher_block, z);

    Tape tape(TapeMode::train_full);
    Var out = dlrnet_forward(tape, tape.input(z), res.student);
    Var loss = ops::relative_mse(tape, out, f);
    const double loss_v = loss.scalar();
    if (step == 0) res.initial_loss = loss_v;
    GradStore grads = tape.backward(loss);
    const auto clip = clip_grad_norm(grads, cfg.clip_norm);
    if (!clip.finite || tape.diverged()) {
      res.diverged = true;
      res.trajectory.diverged = true;
      break;
    }
    opt.step(params, grads, cosine_warmup_lr(step, cfg.steps, cfg.lr, cfg.warmup_frac));
    if (det.observe(loss_v)) {
      res.diverged = true;
      res.trajectory.diverged = true;
      break;
    }
    if (step % cfg.record_every == 0 || step + 1 == cfg.steps)
      res.trajectory.append({step + 1, loss_v, 0.0, grads.global_norm(),
                             seconds_since(t_start),
                             static_cast<double>((step + 1) * cfg.batch)});
    res.final_loss = loss_v;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Phase 2: logits distillation

struct Phase2Config {
  std::size_t steps = 2000;
  double lr = 1e-3;
  std::size_t batch = 4;     // sequences per step
  std::size_t seq_len = 32;
  std::size_t top_k = 64;
  double weight_decay = 1e-5;
  double clip_norm = 1.0;
  double warmup_frac = 0.05;
  std::size_t record_every = 50;
  std::uint64_t seed = 0;
};

inline Matrix softmax_rows_value(const Matrix& logits) {
  Matrix p = logits;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double* r = p.row(i);
    double mx = r[0];
    for (std::size_t j = 1; j < p.cols(); ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      r[j] = std::exp(r[j] - mx);
      z += r[j];
    }
    for (std::size_t j = 0; j < p.cols(); ++j) r[j] /= z;
  }
  return p;
}

struct Phase2Result {
  TrajectoryRecord trajectory;
  double heldout_kl_before = 0.0;
  double heldout_kl_after = 0.0;
  bool diverged = false;
};

// Mean per-token top-k KL of the student against the teacher on a fixed set
// of sequences.
inline double eval_topk_kl(const TransformerParams& student, const TransformerParams& teacher,
                           const std::vector<std::vector<std::size_t>>& seqs, std::size_t k) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& s : seqs) {
    Tape ts(TapeMode::inference), tt(TapeMode::inference);
    Matrix sl = transformer_logits(ts, student, s).m();
    Matrix tl = transformer_logits(tt, teacher, s).m();
    Matrix tp = softmax_rows_value(tl);
    Tape t(TapeMode::inference);
    acc += ops::topk_kl_mean(t, t.input(sl), tp, k).scalar() * static_cast<double>(s.size());
    count += s.size();
  }
  return acc / static_cast<double>(count);
}

inline Phase2Result phase2_logits(TransformerParams& student, const TransformerParams& teacher,
                                  const ByteCorpus& corpus, const Phase2Config& cfg) {
  for (const auto& f : student.ffn)
    if (f.kind != FfnBlock::Kind::dlr)
      throw ValueError("phase2: student must have DLR blocks at every FFN position");
  set_dlr_only_trainable(student, true);
  auto params = collect_params(student);
  auto opt = Optimizer::adamw({0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng = Rng(cfg.seed).substream("phase2");
  DivergenceDetector det;

  // fixed held-out sequences for the before/after evaluation
  std::vector<std::vector<std::size_t>> held;
  {
    const auto ho = corpus.heldout_tokens();
    for (std::size_t off = 0; off + cfg.seq_len <= ho.size() && held.size() < 8;
         off += cfg.seq_len)
      held.emplace_back(ho.begin() + static_cast<std::ptrdiff_t>(off),
                        ho.begin() + static_cast<std::ptrdiff_t>(off + cfg.seq_len));
  }

  Phase2Result res;
  res.trajectory.config_id = "phase2";
  res.heldout_kl_before = eval_topk_kl(student, teacher, held, cfg.top_k);
  const auto t_start = MonoClock::now();

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tape tape(TapeMode::train_full);
    Var loss = tape.constant(Matrix{{0.0}});
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      auto w = corpus.sample_train_window(rng, cfg.seq_len);
      w.pop_back();
      Tape tt(TapeMode::inference);
      Matrix tp = softmax_rows_value(transformer_logits(tt, teacher, w).m());
      Var sl = transformer_logits(tape, student, w);
      Var kl = ops::topk_kl_mean(tape, sl, tp, cfg.top_k);
      loss = ops::add(tape, loss, ops::scale(tape, kl, 1.0 / static_cast<double>(cfg.batch)));
    }
    const double loss_v = loss.scalar();
    GradStore grads = tape.backward(loss);
    const auto clip = clip_grad_norm(grads, cfg.clip_norm);
    if (!clip.finite || tape.diverged() || det.observe(loss_v)) {
      res.diverged = true;
      res.trajectory.diverged = true;
      break;
    }
    opt.step(params, grads, cosine_warmup_lr(step, cfg.steps, cfg.lr, cfg.warmup_frac));
    if (step % cfg.record_every == 0 || step + 1 == cfg.steps)
      res.trajectory.append({step + 1, loss_v, 0.0, grads.global_norm(),
                             seconds_since(t_start),
                             static_cast<double>((step + 1) * cfg.batch * cfg.seq_len)});
  }
  res.heldout_kl_after = eval_topk_kl(student, teacher, held, cfg.top_k);
  return res;
}

// ---------------------------------------------------------------------------
// Perplexity and the full pipeline

// exp(mean per-token cross-entropy), teacher-forcing over consecutive
// windows of the token stream.
inline double evaluate_perplexity(const TransformerParams& m, const std::vector<std::size_t>& tokens,
                                  std::size_t seq_len) {
  if (tokens.size() < 2) throw ValueError("evaluate_perplexity: need at least 2 tokens");
  double ce = 0.0;
  std::size_t count = 0;
  for (std::size_t off = 0; off + 1 < tokens.size(); off += seq_len) {
    const std::size_t n = std::min(seq_len + 1, tokens.size() - off);
    if (n < 2) break;
    std::vector<std::size_t> input(tokens.begin() + static_cast<std::ptrdiff_t>(off),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(off + n - 1));
    std::vector<std::size_t> target(tokens.begin() + static_cast<std::ptrdiff_t>(off + 1),
                                    tokens.begin() + static_cast<std::ptrdiff_t>(off + n));
    Tape t(TapeMode::inference);
    Matrix logits = transformer_logits(t, m, input).m();
    Tape tl(TapeMode::inference);
    ce += ops::cross_entropy_mean(tl, tl.input(logits), target).scalar() *
          static_cast<double>(target.size());
    count += target.size();
  }
  return std::exp(ce / static_cast<double>(count));
}

struct LockConfig {
  std::size_t rank = 4;
  CollectConfig collect;
  Phase1Config phase1;
  Phase2Config phase2;
  std::size_t jobs = 0;  // 0: DLRLOCK_JOBS or hardware concurrency
};

struct QualityRow {
  std::string stage;
  std::string layer;
  std::string metric;
  double value;
};

struct LockResult {
  TransformerParams locked;
  std::vector<Phase1Result> phase1;
  Phase2Result phase2;
  std::vector<QualityRow> report;
  double teacher_ppl = 0.0;
  double phase1_ppl = 0.0;
  double locked_ppl = 0.0;
};

// Deep-copies a transformer (fresh Parameter objects).
inline TransformerParams clone_model(const TransformerParams& m) {
  TransformerParams c = m;
  auto cp = [](ParamPtr& p) {
    if (p) p = make_param(p->name, p->value, p->requires_grad);
  };
  cp(c.tok_emb);
  cp(c.pos_emb);
  cp(c.final_gain);
  cp(c.head);
  for (auto& a : c.attn) {
    cp(a.norm_gain);
    cp(a.wq);
    cp(a.wk);
    cp(a.wv);
    cp(a.wo);
  }
  for (auto& f : c.ffn) {
    cp(f.swiglu.norm_gain);
    cp(f.swiglu.w_gate);
    cp(f.swiglu.w_up);
    cp(f.swiglu.w_down);
    for (auto& lp : f.dlr.layers) {
      cp(lp.norm_gain);
      cp(lp.v);
      cp(lp.u);
      cp(lp.alpha);
    }
  }
  c.lora.clear();
  for (const auto& [id, ad] : m.lora) c.lora[id] = ad;
  return c;
}

inline LockResult lock_model(const TransformerParams& teacher, const ByteCorpus& corpus,
                             const LockConfig& cfg) {
  for (const auto& f : teacher.ffn)
    if (f.kind != FfnBlock::Kind::swiglu)
      throw ValueError("lock_model: teacher must use SwiGLU FFNs");
  LockResult res;
  res.locked = clone_model(teacher);
  const std::size_t budget = swiglu_param_count(teacher.d, teacher.d_ff);
  const std::size_t depth = depth_for_budget(budget, teacher.d, cfg.rank);

  // Phase 1, layers independent (parallel-safe: per-layer rng substreams).
  res.phase1.resize(teacher.n_layers);
  std::vector<HiddenStateCache> caches(teacher.n_layers);
  CollectConfig ccfg = cfg.collect;
  for (std::size_t l = 0; l < teacher.n_layers; ++l)
    caches[l] = collect_states(teacher, corpus, l, ccfg);
  parallel_for(teacher.n_layers, cfg.jobs, [&](std::size_t l) {
    Phase1Config p1 = cfg.phase1;
    res.phase1[l] = phase1_modulewise(teacher.ffn[l].swiglu, caches[l], cfg.rank, depth, p1);
  });
  for (std::size_t l = 0; l < teacher.n_layers; ++l) {
    if (res.phase1[l].diverged)
      throw ValueError("lock_model: phase 1 diverged at layer " + std::to_string(l));
    res.locked.ffn[l].kind = FfnBlock::Kind::dlr;
    res.locked.ffn[l].dlr = res.phase1[l].student;
    res.report.push_back({"phase1", std::to_string(l), "relative_mse_final",
                          res.phase1[l].final_loss});
  }

  const auto heldout = corpus.heldout_tokens();
  const std::size_t eval_len = cfg.phase2.seq_len;
  res.teacher_ppl = evaluate_perplexity(teacher, heldout, eval_len);
  res.phase1_ppl = evaluate_perplexity(res.locked, heldout, eval_len);

  res.phase2 = phase2_logits(res.locked, teacher, corpus, cfg.phase2);
  if (res.phase2.diverged) throw ValueError("lock_model: phase 2 diverged");
  res.locked_ppl = evaluate_perplexity(res.locked, heldout, eval_len);
  set_all_trainable(res.locked);

  res.report.push_back({"eval", "-", "teacher_ppl", res.teacher_ppl});
  res.report.push_back({"eval", "-", "phase1_ppl", res.phase1_ppl});
  res.report.push_back({"eval", "-", "locked_ppl", res.locked_ppl});
  res.report.push_back({"phase2", "-", "heldout_kl_before", res.phase2.heldout_kl_before});
  res.report.push_back({"phase2", "-", "heldout_kl_after", res.phase2.heldout_kl_after});
  return res;
}

// ---------------------------------------------------------------------------
// Plain language-model training (for the toy teacher and baselines).

struct TrainLmConfig {
  std::size_t steps = 3000;
  double lr = 1e-3;
  std::size_t batch = 4;
  std::size_t seq_len = 32;
  double weight_decay = 1e-5;
  double clip_norm = 1.0;
  double warmup_frac = 0.05;
  std::size_t record_every = 100;
  std::uint64_t seed = 0;
};

inline TrajectoryRecord train_language_model(TransformerParams& m, const ByteCorpus& corpus,
                                             const TrainLmConfig& cfg) {
  auto params = collect_params(m);
  auto opt = Optimizer::adamw({0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng = Rng(cfg.seed).substream("train_lm");
  TrajectoryRecord rec;
  rec.config_id = "train_lm";
  DivergenceDetector det;
  const auto t0 = MonoClock::now();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tape tape(TapeMode::train_full);
    Var loss = tape.constant(Matrix{{0.0}});
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      auto w = corpus.sample_train_window(rng, cfg.seq_len);
      std::vector<std::size_t> input(w.begin(), w.end() - 1);
      std::vector<std::size_t> target(w.begin() + 1, w.end());
      Var logits = transformer_logits(tape, m, input);
      Var ce = ops::cross_entropy_mean(tape, logits, target);
      loss = ops::add(tape, loss, ops::scale(tape, ce, 1.0 / static_cast<double>(cfg.batch)));
    }
    const double loss_v = loss.scalar();
    GradStore grads = tape.backward(loss);
    const auto clip = clip_grad_norm(grads, cfg.clip_norm);
    if (!clip.finite || tape.diverged() || det.observe(loss_v)) {
      rec.diverged = true;
      break;
    }
    opt.step(params, grads, cosine_warmup_lr(step, cfg.steps, cfg.lr, cfg.warmup_frac));
    if (step % cfg.record_every == 0 || step + 1 == cfg.steps)
      rec.append({step + 1, loss_v, 0.0, grads.global_norm(), seconds_since(t0),
                  static_cast<double>((step + 1) * cfg.batch * cfg.seq_len)});
  }
  return rec;
}

}  // namespace dlrlock
