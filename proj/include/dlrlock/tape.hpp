// Reverse-mode differentiation tape with exact activation-memory accounting.
//
// Values flow eagerly: each op computes its output immediately and, when a
// backward pass will need an intermediate buffer, registers that buffer with
// the tape's memory meter. The meter counts stored elements (deduplicated by
// buffer identity), tracks the high-water mark, and attributes saves to the
// active scope label so reports can break memory down per layer.
//
// Save rules, fixed as the accounting contract:
//   - rmsnorm saves its input;
//   - silu saves its pre-activation;
//   - linear saves its input only when the weight requires gradient;
//   - residual add saves nothing;
//   - scaling by a learnable scalar saves its input (the branch output) only
//     when the scalar requires gradient;
//   - the fused swiglu core saves its normalized input (once, for all three
//     weight gradients) plus gate pre-activation, up output and silu output.
//
// Inference mode records nothing and saves nothing; backward is rejected.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dlrlock/matrix.hpp"

namespace dlrlock {

struct ModeError : std::runtime_error {
  explicit ModeError(const std::string& what) : std::runtime_error(what) {}
};

enum class TapeMode { train_full, train_frozen, inference };

using ValuePtr = std::shared_ptr<const Matrix>;

struct Parameter {
  std::string name;
  int id = -1;
  Matrix value;
  bool requires_grad = true;
};
using ParamPtr = std::shared_ptr<Parameter>;

inline ParamPtr make_param(std::string name, Matrix value, bool requires_grad = true) {
  static std::atomic<int> next_id{0};
  auto p = std::make_shared<Parameter>();
  p->name = std::move(name);
  p->id = next_id.fetch_add(1);
  p->value = std::move(value);
  p->requires_grad = requires_grad;
  return p;
}

class GradStore {
 public:
  bool has(int param_id) const { return grads_.count(param_id) != 0; }
  const Matrix* find(int param_id) const {
    auto it = grads_.find(param_id);
    return it == grads_.end() ? nullptr : &it->second;
  }
  Matrix& accum(int param_id, std::size_t rows, std::size_t cols) {
    auto it = grads_.find(param_id);
    if (it == grads_.end()) it = grads_.emplace(param_id, Matrix(rows, cols)).first;
    return it->second;
  }
  void add(int param_id, const Matrix& g) { accum(param_id, g.rows(), g.cols()) += g; }

  double global_norm_sq() const {
    double s = 0.0;
    for (const auto& [id, g] : grads_) s += frob_norm_sq(g);
    return s;
  }
  double global_norm() const { return std::sqrt(global_norm_sq()); }
  bool all_finite() const {
    for (const auto& [id, g] : grads_)
      if (!is_finite(g)) return false;
    return true;
  }
  void scale_all(double s) {
    for (auto& [id, g] : grads_)
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= s;
  }
  std::size_t size() const { return grads_.size(); }
  auto begin() { return grads_.begin(); }
  auto end() { return grads_.end(); }
  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::map<int, Matrix> grads_;
};

// Element counters for saved intermediates, shared between a tape and any
// recomputation tapes spawned during checkpointed backward.
class MemoryMeter {
 public:
  void save(const ValuePtr& buf, const std::string& scope) {
    auto [it, fresh] = refs_.emplace(buf.get(), 1);
    if (!fresh) {
      ++it->second;
      return;
    }
    const long long n = static_cast<long long>(buf->size());
    saved_ += n;
    peak_ = std::max(peak_, saved_);
    scope_saved_[scope] += n;
  }
  void release(const ValuePtr& buf) {
    auto it = refs_.find(buf.get());
    if (it == refs_.end()) return;
    if (--it->second == 0) {
      refs_.erase(it);
      saved_ -= static_cast<long long>(buf->size());
    }
  }

  long long saved_elements() const { return saved_; }
  long long peak_elements() const { return peak_; }
  // Total elements ever saved under a scope label during forward passes.
  long long scope_elements(const std::string& scope) const {
    auto it = scope_saved_.find(scope);
    return it == scope_saved_.end() ? 0 : it->second;
  }
  const std::map<std::string, long long>& scopes() const { return scope_saved_; }

 private:
  std::unordered_map<const Matrix*, int> refs_;
  std::map<std::string, long long> scope_saved_;
  long long saved_ = 0;
  long long peak_ = 0;
};

class Tape;

// Handle to a tape value. id < 0 means constant: no node, nothing flows back.
struct Var {
  int id = -1;
  ValuePtr value;
  bool needs_grad = false;

  const Matrix& m() const { return *value; }
  std::size_t rows() const { return value->rows(); }
  std::size_t cols() const { return value->cols(); }
  double scalar() const {
    if (value->size() != 1) throw ShapeError("Var::scalar: not a 1x1 value");
    return (*value)(0, 0);
  }
};

inline Var stop_grad(const Var& v) { return Var{-1, v.value, false}; }

class BackwardCtx {
 public:
  BackwardCtx(std::vector<std::optional<Matrix>>& pending, GradStore& store)
      : pending_(pending), store_(store) {}
  void to_var(const Var& v, Matrix g) {
    if (v.id < 0 || !v.needs_grad) return;
    auto& slot = pending_[static_cast<std::size_t>(v.id)];
    if (slot.has_value())
      *slot += g;
    else
      slot = std::move(g);
  }
  void to_param(const ParamPtr& p, const Matrix& g) { store_.add(p->id, g); }
  GradStore& store() { return store_; }

 private:
  std::vector<std::optional<Matrix>>& pending_;
  GradStore& store_;
};

class Tape {
 public:
  explicit Tape(TapeMode mode = TapeMode::train_full,
                std::shared_ptr<MemoryMeter> meter = nullptr)
      : mode_(mode), meter_(meter ? std::move(meter) : std::make_shared<MemoryMeter>()) {}

  TapeMode mode() const { return mode_; }
  MemoryMeter& meter() { return *meter_; }
  const MemoryMeter& meter() const { return *meter_; }
  std::shared_ptr<MemoryMeter> meter_ptr() const { return meter_; }

  bool diverged() const { return diverged_; }
  void flag_divergence() { diverged_ = true; }
  std::uint64_t macs() const { return macs_; }
  void count_macs(std::uint64_t n) { macs_ += n; }

  bool recording() const { return mode_ != TapeMode::inference; }
  bool param_grad_enabled(const Parameter& p) const {
    return mode_ == TapeMode::train_full && p.requires_grad;
  }

  void push_scope(const std::string& label) { scope_stack_.push_back(label); }
  void pop_scope() { scope_stack_.pop_back(); }
  const std::string& scope() const {
    static const std::string top = "<top>";
    return scope_stack_.empty() ? top : scope_stack_.back();
  }

  // ---- graph construction ------------------------------------------------

  Var constant(Matrix value) {
    return Var{-1, std::make_shared<Matrix>(std::move(value)), false};
  }
  Var constant(ValuePtr value) { return Var{-1, std::move(value), false}; }

  Var input(Matrix value, bool requires_grad = false) {
    auto vp = std::make_shared<Matrix>(std::move(value));
    if (!recording() || !requires_grad) return Var{-1, vp, false};
    const int id = new_node({});
    return Var{id, vp, true};
  }

  // Leaf for a parameter. Gradient flows into the GradStore keyed by the
  // parameter id; the weight itself is persistent storage, never counted as
  // a saved activation.
  Var leaf(const ParamPtr& p) {
    auto vp = std::make_shared<Matrix>(p->value);
    if (!recording() || !param_grad_enabled(*p)) return Var{-1, vp, false};
    const int id = new_node({}, [p](const Matrix& g, BackwardCtx& ctx) {
      ctx.to_param(p, g);
    });
    return Var{id, vp, true};
  }

  using BackwardFn = std::function<void(const Matrix&, BackwardCtx&)>;

  // Registers an op's output. `parents` are the differentiable inputs;
  // `saved` the buffers retained for backward.
  Var make_op(Matrix out, std::vector<Var> parents, std::vector<ValuePtr> saved,
              BackwardFn backward) {
    auto vp = std::make_shared<Matrix>(std::move(out));
    if (!is_finite(*vp)) diverged_ = true;
    bool any = false;
    for (const auto& p : parents) any = any || (p.id >= 0 && p.needs_grad);
    if (!recording() || (!any && !backward)) return Var{-1, vp, false};
    if (!any && backward) {
      // Only parameter gradients flow out of this op (e.g. frozen input);
      // still needs a node so backward reaches the parameters.
    }
    std::vector<int> parent_ids;
    for (const auto& p : parents)
      if (p.id >= 0 && p.needs_grad) parent_ids.push_back(p.id);
    const int id = new_node(std::move(parent_ids), std::move(backward));
    for (auto& s : saved) {
      meter_->save(s, scope());
      nodes_[static_cast<std::size_t>(id)].saved.push_back(std::move(s));
    }
    return Var{id, vp, true};
  }

  // Registers a buffer as saved without creating a node (checkpoint
  // boundaries).
  void save_buffer(const ValuePtr& buf, std::vector<ValuePtr>* ledger) {
    meter_->save(buf, scope());
    ledger->push_back(buf);
  }
  void release_buffer(const ValuePtr& buf) { meter_->release(buf); }

  // ---- backward ----------------------------------------------------------

  GradStore backward(const Var& loss) {
    GradStore store;
    backward_into(loss, Matrix{{1.0}}, store, nullptr);
    return store;
  }

  // Backward with an explicit upstream gradient; optionally reports the
  // gradient reaching `wrt_input` (used by checkpoint segments).
  void backward_into(const Var& out, const Matrix& upstream, GradStore& store,
                     Matrix* input_grad, const Var* wrt_input = nullptr) {
    if (mode_ == TapeMode::inference)
      throw ModeError("backward: tape is in inference mode");
    if (out.id < 0) {
      release_all();
      return;
    }
    if (!upstream.same_shape(out.m()))
      throw ShapeError("backward: upstream gradient shape mismatch");
    std::vector<std::optional<Matrix>> pending(nodes_.size());
    pending[static_cast<std::size_t>(out.id)] = upstream;
    BackwardCtx ctx(pending, store);
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
      auto& nd = nodes_[static_cast<std::size_t>(id)];
      auto& slot = pending[static_cast<std::size_t>(id)];
      if (slot.has_value() && nd.backward) nd.backward(*slot, ctx);
      if (wrt_input && input_grad && wrt_input->id == id && slot.has_value())
        *input_grad = std::move(*slot);
      slot.reset();
      release_node(nd);
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> parents;
    BackwardFn backward;
    std::vector<ValuePtr> saved;
  };

  int new_node(std::vector<int> parents, BackwardFn backward = nullptr) {
    nodes_.push_back(Node{std::move(parents), std::move(backward), {}});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void release_node(Node& nd) {
    for (auto& s : nd.saved) meter_->release(s);
    nd.saved.clear();
    nd.backward = nullptr;
  }

  void release_all() {
    for (auto& nd : nodes_) release_node(nd);
  }

  TapeMode mode_;
  std::shared_ptr<MemoryMeter> meter_;
  std::vector<Node> nodes_;
  std::vector<std::string> scope_stack_;
  bool diverged_ = false;
  std::uint64_t macs_ = 0;
};

// ---------------------------------------------------------------------------
// Ops. Each returns the eagerly computed value and registers exactly the
// buffers its backward needs.

namespace ops {

inline Var add(Tape& t, const Var& a, const Var& b) {
  Matrix out = a.m() + b.m();
  return t.make_op(std::move(out), {a, b}, {},
                   [a, b](const Matrix& g, BackwardCtx& ctx) {
                     ctx.to_var(a, g);
                     ctx.to_var(b, g);
                   });
}

inline Var sub(Tape& t, const Var& a, const Var& b) {
  Matrix out = a.m() - b.m();
  return t.make_op(std::move(out), {a, b}, {},
                   [a, b](const Matrix& g, BackwardCtx& ctx) {
                     ctx.to_var(a, g);
                     ctx.to_var(b, Matrix(g * -1.0));
                   });
}

inline Var scale(Tape& t, const Var& a, double s) {
  return t.make_op(a.m() * s, {a}, {}, [a, s](const Matrix& g, BackwardCtx& ctx) {
    ctx.to_var(a, g * s);
  });
}

inline Var transpose_var(Tape& t, const Var& a) {
  return t.make_op(transpose(a.m()), {a}, {},
                   [a](const Matrix& g, BackwardCtx& ctx) { ctx.to_var(a, transpose(g)); });
}

// Takes the value of `value_from` but routes the gradient to `grad_to`
// unchanged. Used for stop-gradient residual blocks where the forward value
// must stay bit-identical while backward sees only the skip path.
inline Var value_with_grad_of(Tape& t, const Var& value_from, const Var& grad_to) {
  if (!value_from.m().same_shape(grad_to.m()))
    throw ShapeError("value_with_grad_of: shape mismatch");
  Var ref = grad_to;
  ref.value.reset();
  return t.make_op(value_from.m(), {grad_to}, {},
                   [ref](const Matrix& g, BackwardCtx& ctx) { ctx.to_var(ref, g); });
}

// out = x * W^T. Saves x only when the weight wants its gradient.
inline Var linear(Tape& t, const Var& x, const ParamPtr& w) {
  if (x.cols() != w->value.cols()) throw ShapeError("linear: dim mismatch for " + w->name);
  Matrix out = matmul_nt(x.m(), w->value);
  t.count_macs(static_cast<std::uint64_t>(x.rows()) * x.cols() * w->value.rows());
  const bool wgrad = t.param_grad_enabled(*w);
  std::vector<ValuePtr> saved;
  if (wgrad) saved.push_back(x.value);
  ValuePtr xin = wgrad ? x.value : nullptr;
  return t.make_op(std::move(out), {x}, std::move(saved),
                   (x.needs_grad || wgrad)
                       ? Tape::BackwardFn([x, w, wgrad, xin](const Matrix& g, BackwardCtx& ctx) {
                           if (x.needs_grad) ctx.to_var(x, matmul(g, w->value));
                           if (wgrad) ctx.to_param(w, matmul_tn(g, *xin));
                         })
                       : Tape::BackwardFn(nullptr));
}

// General product of two tape values, c = a * b.
inline Var matmul_vars(Tape& t, const Var& a, const Var& b) {
  Matrix out = matmul(a.m(), b.m());
  t.count_macs(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
  std::vector<ValuePtr> saved;
  if (a.needs_grad) saved.push_back(b.value);
  if (b.needs_grad) saved.push_back(a.value);
  ValuePtr av = a.value, bv = b.value;
  return t.make_op(std::move(out), {a, b}, std::move(saved),
                   [a, b, av, bv](const Matrix& g, BackwardCtx& ctx) {
                     if (a.needs_grad) ctx.to_var(a, matmul_nt(g, *bv));
                     if (b.needs_grad) ctx.to_var(b, matmul_tn(*av, g));
                   });
}

inline Var hadamard_vars(Tape& t, const Var& a, const Var& b) {
  Matrix out = hadamard(a.m(), b.m());
  std::vector<ValuePtr> saved;
  if (a.needs_grad) saved.push_back(b.value);
  if (b.needs_grad) saved.push_back(a.value);
  ValuePtr av = a.value, bv = b.value;
  return t.make_op(std::move(out), {a, b}, std::move(saved),
                   [a, b, av, bv](const Matrix& g, BackwardCtx& ctx) {
                     if (a.needs_grad) ctx.to_var(a, hadamard(g, *bv));
                     if (b.needs_grad) ctx.to_var(b, hadamard(g, *av));
                   });
}

// Row-wise RMS normalization with learnable gain: y = gain .* x / rms(x),
// rms(x) = sqrt(mean(x^2) + eps). Saves the input; the normalized output is
// recomputed from it in backward.
inline Var rmsnorm(Tape& t, const Var& x, const ParamPtr& gain, double eps = 1e-6) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gain->value.size() != d) throw ShapeError("rmsnorm: gain dim mismatch");
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.m().row(i);
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) ms += xi[j] * xi[j];
    const double r = std::sqrt(ms / static_cast<double>(d) + eps);
    double* oi = out.row(i);
    for (std::size_t j = 0; j < d; ++j) oi[j] = gain->value.data()[j] * xi[j] / r;
  }
  const bool ggrad = t.param_grad_enabled(*gain);
  const bool need = x.needs_grad || ggrad;
  std::vector<ValuePtr> saved;
  if (need) saved.push_back(x.value);
  ValuePtr xin = x.value;
  return t.make_op(
      std::move(out), {x}, std::move(saved),
      need ? Tape::BackwardFn([x, gain, ggrad, xin, eps, n, d](const Matrix& g,
                                                               BackwardCtx& ctx) {
        Matrix gx(x.needs_grad ? n : 0, x.needs_grad ? d : 0);
        Matrix ggain(ggrad ? 1 : 0, ggrad ? d : 0);
        for (std::size_t i = 0; i < n; ++i) {
          const double* xi = xin->row(i);
          const double* gi = g.row(i);
          double ms = 0.0;
          for (std::size_t j = 0; j < d; ++j) ms += xi[j] * xi[j];
          const double r = std::sqrt(ms / static_cast<double>(d) + eps);
          if (ggrad) {
            for (std::size_t j = 0; j < d; ++j) ggain(0, j) += gi[j] * xi[j] / r;
          }
          if (x.needs_grad) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j)
              dot += gi[j] * gain->value.data()[j] * xi[j];
            const double coef = dot / (static_cast<double>(d) * r * r * r);
            double* go = gx.row(i);
            for (std::size_t j = 0; j < d; ++j)
              go[j] = gi[j] * gain->value.data()[j] / r - coef * xi[j];
          }
        }
        if (x.needs_grad) ctx.to_var(x, std::move(gx));
        if (ggrad) ctx.to_param(gain, ggain);
      })
           : Tape::BackwardFn(nullptr));
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// SiLU z*sigmoid(z); saves its pre-activation.
inline Var silu(Tape& t, const Var& x) {
  Matrix out = x.m();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= sigmoid(out.data()[i]);
  std::vector<ValuePtr> saved;
  if (x.needs_grad) saved.push_back(x.value);
  ValuePtr xin = x.value;
  return t.make_op(std::move(out), {x}, std::move(saved),
                   [x, xin](const Matrix& g, BackwardCtx& ctx) {
                     Matrix gx = g;
                     for (std::size_t i = 0; i < gx.size(); ++i) {
                       const double z = xin->data()[i];
                       const double s = sigmoid(z);
                       gx.data()[i] *= s + z * s * (1.0 - s);
                     }
                     ctx.to_var(x, std::move(gx));
                   });
}

inline Var relu(Tape& t, const Var& x) {
  Matrix out = x.m();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::max(out.data()[i], 0.0);
  std::vector<ValuePtr> saved;
  if (x.needs_grad) saved.push_back(x.value);
  ValuePtr xin = x.value;
  return t.make_op(std::move(out), {x}, std::move(saved),
                   [x, xin](const Matrix& g, BackwardCtx& ctx) {
                     Matrix gx = g;
                     for (std::size_t i = 0; i < gx.size(); ++i)
                       if (xin->data()[i] <= 0.0) gx.data()[i] = 0.0;
                     ctx.to_var(x, std::move(gx));
                   });
}

// out = alpha * x with a learnable scalar (1x1 parameter). Saves x (the
// branch output) only when alpha wants its gradient.
inline Var scale_by_scalar_param(Tape& t, const Var& x, const ParamPtr& alpha) {
  if (alpha->value.size() != 1) throw ShapeError("scale_by_scalar_param: alpha must be 1x1");
  const double a = alpha->value(0, 0);
  const bool agrad = t.param_grad_enabled(*alpha);
  std::vector<ValuePtr> saved;
  if (agrad) saved.push_back(x.value);
  ValuePtr xin = x.value;
  return t.make_op(x.m() * a, {x}, std::move(saved),
                   (x.needs_grad || agrad)
                       ? Tape::BackwardFn([x, alpha, agrad, xin](const Matrix& g, BackwardCtx& ctx) {
                           if (x.needs_grad)
                             ctx.to_var(x, g * alpha->value(0, 0));
                           if (agrad) ctx.to_param(alpha, Matrix{{frob_dot(g, *xin)}});
                         })
                       : Tape::BackwardFn(nullptr));
}

inline Var slice_cols(Tape& t, const Var& x, std::size_t c0, std::size_t c1) {
  if (c1 > x.cols() || c0 >= c1) throw ShapeError("slice_cols: bad range");
  const std::size_t n = x.rows(), w = c1 - c0, full = x.cols();
  Matrix out(n, w);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(x.m().row(i) + c0, x.m().row(i) + c1, out.row(i));
  return t.make_op(std::move(out), {x}, {},
                   [x, c0, w, full, n](const Matrix& g, BackwardCtx& ctx) {
                     Matrix gx(n, full);
                     for (std::size_t i = 0; i < n; ++i)
                       std::copy(g.row(i), g.row(i) + w, gx.row(i) + c0);
                     ctx.to_var(x, std::move(gx));
                   });
}

inline Var concat_cols(Tape& t, const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_cols: empty");
  const std::size_t n = xs[0].rows();
  std::size_t total = 0;
  for (const auto& v : xs) {
    if (v.rows() != n) throw ShapeError("concat_cols: row mismatch");
    total += v.cols();
  }
  Matrix out(n, total);
  std::size_t off = 0;
  for (const auto& v : xs) {
    for (std::size_t i = 0; i < n; ++i)
      std::copy(v.m().row(i), v.m().row(i) + v.cols(), out.row(i) + off);
    off += v.cols();
  }
  std::vector<std::size_t> offs;
  offs.reserve(xs.size());
  std::size_t o = 0;
  for (const auto& v : xs) {
    offs.push_back(o);
    o += v.cols();
  }
  auto parts = xs;
  return t.make_op(std::move(out), xs, {},
                   [parts, offs](const Matrix& g, BackwardCtx& ctx) {
                     for (std::size_t k = 0; k < parts.size(); ++k) {
                       if (!(parts[k].id >= 0 && parts[k].needs_grad)) continue;
                       Matrix gk(parts[k].rows(), parts[k].cols());
                       for (std::size_t i = 0; i < gk.rows(); ++i)
                         std::copy(g.row(i) + offs[k], g.row(i) + offs[k] + gk.cols(),
                                   gk.row(i));
                       ctx.to_var(parts[k], std::move(gk));
                     }
                   });
}

// Row softmax with optional causal mask (row i attends to columns <= i).
// Saves the probabilities.
inline Var softmax_rows(Tape& t, const Var& scores, bool causal) {
  const std::size_t n = scores.rows(), m = scores.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lim = causal ? std::min(i + 1, m) : m;
    const double* si = scores.m().row(i);
    double mx = -1e300;
    for (std::size_t j = 0; j < lim; ++j) mx = std::max(mx, si[j]);
    double z = 0.0;
    double* oi = out.row(i);
    for (std::size_t j = 0; j < lim; ++j) {
      oi[j] = std::exp(si[j] - mx);
      z += oi[j];
    }
    for (std::size_t j = 0; j < lim; ++j) oi[j] /= z;
  }
  std::vector<ValuePtr> saved;
  auto probs = std::make_shared<Matrix>(out);
  if (scores.needs_grad) saved.push_back(probs);
  return t.make_op(std::move(out), {scores}, std::move(saved),
                   [scores, probs, causal](const Matrix& g, BackwardCtx& ctx) {
                     const std::size_t n = g.rows(), m = g.cols();
                     Matrix gs(n, m);
                     for (std::size_t i = 0; i < n; ++i) {
                       const std::size_t lim = causal ? std::min(i + 1, m) : m;
                       const double* pi = probs->row(i);
                       const double* gi = g.row(i);
                       double dot = 0.0;
                       for (std::size_t j = 0; j < lim; ++j) dot += gi[j] * pi[j];
                       double* oi = gs.row(i);
                       for (std::size_t j = 0; j < lim; ++j)
                         oi[j] = pi[j] * (gi[j] - dot);
                     }
                     ctx.to_var(scores, std::move(gs));
                   });
}

// Embedding row gather. Index rows of the table; backward scatter-adds.
inline Var gather_rows(Tape& t, const ParamPtr& table, const std::vector<std::size_t>& idx) {
  const std::size_t d = table->value.cols();
  Matrix out(idx.size(), d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= table->value.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy(table->value.row(idx[i]), table->value.row(idx[i]) + d, out.row(i));
  }
  if (!t.param_grad_enabled(*table)) return t.constant(std::move(out));
  return t.make_op(std::move(out), {}, {},
                   [table, idx, d](const Matrix& g, BackwardCtx& ctx) {
                     Matrix& acc = ctx.store().accum(table->id, table->value.rows(), d);
                     for (std::size_t i = 0; i < idx.size(); ++i) {
                       double* row = acc.row(idx[i]);
                       const double* gi = g.row(i);
                       for (std::size_t j = 0; j < d; ++j) row[j] += gi[j];
                     }
                   });
}

// First n rows of a table (learned position embeddings).
inline Var first_rows(Tape& t, const ParamPtr& table, std::size_t n) {
  if (n > table->value.rows()) throw ShapeError("first_rows: n too large");
  const std::size_t d = table->value.cols();
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(table->value.row(i), table->value.row(i) + d, out.row(i));
  if (!t.param_grad_enabled(*table)) return t.constant(std::move(out));
  return t.make_op(std::move(out), {}, {},
                   [table, n, d](const Matrix& g, BackwardCtx& ctx) {
                     Matrix& acc = ctx.store().accum(table->id, table->value.rows(), d);
                     for (std::size_t i = 0; i < n; ++i) {
                       double* row = acc.row(i);
                       for (std::size_t j = 0; j < d; ++j) row[j] += g(i, j);
                     }
                   });
}

// Fused SwiGLU core on a pre-normalized input:
//   out = (x W_up^T .* silu(x W_gate^T)) W_down^T
// Saved buffers: x (once, for all weight grads), gate pre-activation, up
// output, silu output. The elementwise product is recomputed in backward.
inline Var swiglu_core(Tape& t, const Var& x, const ParamPtr& w_gate,
                       const ParamPtr& w_up, const ParamPtr& w_down) {
  const std::size_t n = x.rows(), d = x.cols(), dff = w_gate->value.rows();
  if (w_up->value.rows() != dff || w_down->value.cols() != dff ||
      w_up->value.cols() != d || w_gate->value.cols() != d || w_down->value.rows() != d)
    throw ShapeError("swiglu_core: weight shapes inconsistent");
  auto gate_pre = std::make_shared<Matrix>(matmul_nt(x.m(), w_gate->value));
  auto up_out = std::make_shared<Matrix>(matmul_nt(x.m(), w_up->value));
  auto silu_out = std::make_shared<Matrix>(*gate_pre);
  for (std::size_t i = 0; i < silu_out->size(); ++i) {
    double& z = silu_out->data()[i];
    z *= sigmoid(z);
  }
  Matrix prod = hadamard(*up_out, *silu_out);
  Matrix out = matmul(prod, transpose(w_down->value));
  t.count_macs(static_cast<std::uint64_t>(n) * d * dff * 3);

  const bool wgrad = t.param_grad_enabled(*w_gate) || t.param_grad_enabled(*w_up) ||
                     t.param_grad_enabled(*w_down);
  const bool need = x.needs_grad || wgrad;
  std::vector<ValuePtr> saved;
  if (need) {
    if (wgrad) saved.push_back(x.value);
    saved.push_back(gate_pre);
    saved.push_back(up_out);
    saved.push_back(silu_out);
  }
  ValuePtr xin = x.value;
  return t.make_op(
      std::move(out), {x}, std::move(saved),
      need ? Tape::BackwardFn([&t, x, w_gate, w_up, w_down, xin, gate_pre, up_out,
                               silu_out](const Matrix& g, BackwardCtx& ctx) {
        Matrix g_prod = matmul(g, w_down->value);
        Matrix g_up = hadamard(g_prod, *silu_out);
        Matrix g_silu = hadamard(g_prod, *up_out);
        Matrix g_gate = g_silu;
        for (std::size_t i = 0; i < g_gate.size(); ++i) {
          const double z = gate_pre->data()[i];
          const double s = sigmoid(z);
          g_gate.data()[i] *= s + z * s * (1.0 - s);
        }
        if (t.param_grad_enabled(*w_down)) {
          Matrix prod = hadamard(*up_out, *silu_out);
          ctx.to_param(w_down, matmul_tn(g, prod));
        }
        if (t.param_grad_enabled(*w_gate)) ctx.to_param(w_gate, matmul_tn(g_gate, *xin));
        if (t.param_grad_enabled(*w_up)) ctx.to_param(w_up, matmul_tn(g_up, *xin));
        if (x.needs_grad) {
          Matrix gx = matmul(g_gate, w_gate->value);
          gx += matmul(g_up, w_up->value);
          ctx.to_var(x, std::move(gx));
        }
      })
           : Tape::BackwardFn(nullptr));
}

// Scalar mean of per-row relative squared error against a constant target:
//   (1/n) sum_i ||g_i - f_i||^2 / ||f_i||^2.
// Rows with zero-norm target are excluded from the mean (reported via
// *excluded when given).
inline Var relative_mse(Tape& t, const Var& pred, const Matrix& target,
                        std::size_t* excluded = nullptr) {
  if (!pred.m().same_shape(target)) throw ShapeError("relative_mse: shape mismatch");
  const std::size_t n = pred.rows(), d = pred.cols();
  auto weights = std::make_shared<std::vector<double>>(n, 0.0);
  std::size_t counted = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* fi = target.row(i);
    double fn = 0.0;
    for (std::size_t j = 0; j < d; ++j) fn += fi[j] * fi[j];
    if (fn == 0.0) continue;
    ++counted;
    (*weights)[i] = 1.0 / fn;
    const double* gi = pred.m().row(i);
    double e = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dlt = gi[j] - fi[j];
      e += dlt * dlt;
    }
    acc += e / fn;
  }
  if (excluded) *excluded = n - counted;
  if (counted == 0) throw ValueError("relative_mse: all target rows have zero norm");
  Matrix out{{acc / static_cast<double>(counted)}};
  std::vector<ValuePtr> saved;
  auto diff = std::make_shared<Matrix>(pred.m() - target);
  if (pred.needs_grad) saved.push_back(diff);
  return t.make_op(std::move(out), {pred}, std::move(saved),
                   [pred, diff, weights, counted](const Matrix& g, BackwardCtx& ctx) {
                     const double go = g(0, 0) * 2.0 / static_cast<double>(counted);
                     Matrix gx = *diff;
                     for (std::size_t i = 0; i < gx.rows(); ++i) {
                       const double w = (*weights)[i] * go;
                       double* r = gx.row(i);
                       for (std::size_t j = 0; j < gx.cols(); ++j) r[j] *= w;
                     }
                     ctx.to_var(pred, std::move(gx));
                   });
}

// Scalar mean squared error against a constant target (sum over columns,
// mean over rows).
inline Var mse_mean(Tape& t, const Var& pred, const Matrix& target) {
  if (!pred.m().same_shape(target)) throw ShapeError("mse_mean: shape mismatch");
  const double n = static_cast<double>(pred.rows());
  auto diff = std::make_shared<Matrix>(pred.m() - target);
  Matrix out{{frob_norm_sq(*diff) / n}};
  std::vector<ValuePtr> saved;
  if (pred.needs_grad) saved.push_back(diff);
  return t.make_op(std::move(out), {pred}, std::move(saved),
                   [pred, diff, n](const Matrix& g, BackwardCtx& ctx) {
                     ctx.to_var(pred, *diff * (2.0 * g(0, 0) / n));
                   });
}

// Sum of squares of a parameter (for norm penalties), as a scalar var.
inline Var param_sum_sq(Tape& t, const ParamPtr& p) {
  Matrix out{{frob_norm_sq(p->value)}};
  if (!t.param_grad_enabled(*p)) return t.constant(std::move(out));
  return t.make_op(std::move(out), {}, {},
                   [p](const Matrix& g, BackwardCtx& ctx) {
                     ctx.to_param(p, p->value * (2.0 * g(0, 0)));
                   });
}

// Mean token cross-entropy of logits rows against integer targets. Saves the
// softmax probabilities.
inline Var cross_entropy_mean(Tape& t, const Var& logits,
                              const std::vector<std::size_t>& targets) {
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n) throw ShapeError("cross_entropy_mean: target count mismatch");
  auto probs = std::make_shared<Matrix>(n, v);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = logits.m().row(i);
    double mx = li[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, li[j]);
    double z = 0.0;
    double* pi = probs->row(i);
    for (std::size_t j = 0; j < v; ++j) {
      pi[j] = std::exp(li[j] - mx);
      z += pi[j];
    }
    for (std::size_t j = 0; j < v; ++j) pi[j] /= z;
    loss -= std::log(std::max(pi[targets[i]], 1e-300));
  }
  Matrix out{{loss / static_cast<double>(n)}};
  std::vector<ValuePtr> saved;
  if (logits.needs_grad) saved.push_back(probs);
  return t.make_op(std::move(out), {logits}, std::move(saved),
                   [logits, probs, targets](const Matrix& g, BackwardCtx& ctx) {
                     const std::size_t n = probs->rows(), v = probs->cols();
                     const double go = g(0, 0) / static_cast<double>(n);
                     Matrix gx = *probs;
                     for (std::size_t i = 0; i < n; ++i) {
                       gx(i, targets[i]) -= 1.0;
                       double* r = gx.row(i);
                       for (std::size_t j = 0; j < v; ++j) r[j] *= go;
                     }
                     ctx.to_var(logits, std::move(gx));
                   });
}

}  // namespace ops

}  // namespace dlrlock
