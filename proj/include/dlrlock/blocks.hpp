// Architecture components: RMSNorm + SwiGLU FFN blocks, deep low-rank
// residual networks, multi-head attention and the byte-level toy transformer,
// plus the depth-for-budget formula, initialization and LoRA adapters.
#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dlrlock/chain.hpp"
#include "dlrlock/rng.hpp"
#include "dlrlock/tape.hpp"

namespace dlrlock {

inline constexpr double kRmsEps = 1e-6;

// ---------------------------------------------------------------------------
// Parameter bundles

struct SwigluParams {
  std::size_t d = 0, d_ff = 0;
  ParamPtr norm_gain;  // d
  ParamPtr w_gate;     // d_ff x d
  ParamPtr w_up;       // d_ff x d
  ParamPtr w_down;     // d x d_ff
};

struct DlrLayerParams {
  ParamPtr norm_gain;  // d
  ParamPtr v;          // r x d
  ParamPtr u;          // d x r
  ParamPtr alpha;      // 1x1, zero at construction
};

struct DlrNetParams {
  std::size_t d = 0, r = 0;
  std::vector<DlrLayerParams> layers;
  std::size_t depth() const { return layers.size(); }
};

struct AttentionParams {
  std::size_t d = 0, heads = 1;
  ParamPtr norm_gain;           // d
  ParamPtr wq, wk, wv, wo;      // d x d each
};

struct LoraAdapter {
  int target_param_id = -1;
  ParamPtr a;  // rank_l x in
  ParamPtr b;  // out x rank_l
  double scaling = 1.0;
};

struct FfnBlock {
  enum class Kind { swiglu, dlr };
  Kind kind = Kind::swiglu;
  SwigluParams swiglu;
  DlrNetParams dlr;
};

struct TransformerParams {
  std::size_t vocab = 0, d = 0, n_max = 0, heads = 1, d_ff = 0, n_layers = 0;
  ParamPtr tok_emb;  // vocab x d
  ParamPtr pos_emb;  // n_max x d
  std::vector<AttentionParams> attn;
  std::vector<FfnBlock> ffn;
  ParamPtr final_gain;  // d
  ParamPtr head;        // vocab x d
  std::map<int, LoraAdapter> lora;  // keyed by target attention param id
};

// ---------------------------------------------------------------------------
// Budget arithmetic

inline std::size_t swiglu_param_count(std::size_t d, std::size_t d_ff) {
  return 3 * d * d_ff + d;
}
inline std::size_t dlr_layer_param_count(std::size_t d, std::size_t r) {
  return 2 * d * r + d + 1;  // V + U, norm gain, ReZero scalar
}
inline std::size_t dlr_param_count(std::size_t d, std::size_t r, std::size_t depth) {
  return depth * dlr_layer_param_count(d, r);
}

// L = floor(P / (2dr + c_norm)) with c_norm = d + 1 (gain plus ReZero scalar).
inline std::size_t depth_for_budget(std::size_t budget, std::size_t d, std::size_t r) {
  if (d < 1 || r < 1) throw ValueError("depth_for_budget: d and r must be >= 1");
  const std::size_t per_layer = dlr_layer_param_count(d, r);
  const std::size_t depth = budget / per_layer;
  if (depth == 0)
    throw ValueError("depth_for_budget: budget " + std::to_string(budget) +
                     " below one layer (" + std::to_string(per_layer) + ")");
  return depth;
}

// ---------------------------------------------------------------------------
// Initialization

inline SwigluParams init_swiglu(std::size_t d, std::size_t d_ff, Rng rng,
                                const std::string& prefix = "swiglu") {
  SwigluParams p;
  p.d = d;
  p.d_ff = d_ff;
  p.norm_gain = make_param(prefix + ".gain", Matrix(1, d, 1.0));
  const double s = std::sqrt(1.0 / static_cast<double>(d));
  const double s2 = std::sqrt(1.0 / static_cast<double>(d_ff));
  p.w_gate = make_param(prefix + ".w_gate", rng_fill(rng, d_ff, d, NormalDist{0.0, s}));
  p.w_up = make_param(prefix + ".w_up", rng_fill(rng, d_ff, d, NormalDist{0.0, s}));
  p.w_down = make_param(prefix + ".w_down", rng_fill(rng, d, d_ff, NormalDist{0.0, s2}));
  return p;
}

// U_i ~ N(0, 1/(d sqrt(L))), V_i ~ N(0, 1/r) -- the stated second arguments
// are variances -- alpha_i = 0, gains 1. Identity map at construction.
inline DlrNetParams init_dlrnet(std::size_t d, std::size_t r, std::size_t depth, Rng rng,
                                const std::string& prefix = "dlr") {
  if (depth < 1) throw ValueError("init_dlrnet: depth must be >= 1");
  DlrNetParams p;
  p.d = d;
  p.r = r;
  const double u_std = std::sqrt(1.0 / (static_cast<double>(d) * std::sqrt(static_cast<double>(depth))));
  const double v_std = std::sqrt(1.0 / static_cast<double>(r));
  p.layers.reserve(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    DlrLayerParams lp;
    const std::string nm = prefix + ".l" + std::to_string(i);
    lp.norm_gain = make_param(nm + ".gain", Matrix(1, d, 1.0));
    lp.v = make_param(nm + ".v", rng_fill(rng, r, d, NormalDist{0.0, v_std}));
    lp.u = make_param(nm + ".u", rng_fill(rng, d, r, NormalDist{0.0, u_std}));
    lp.alpha = make_param(nm + ".alpha", Matrix(1, 1, 0.0));
    p.layers.push_back(std::move(lp));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Tape builders

// One low-rank residual layer: h + alpha * U silu(V rmsnorm(h)).
inline Var dlr_layer(Tape& t, const Var& h, const DlrLayerParams& lp) {
  Var n = ops::rmsnorm(t, h, lp.norm_gain, kRmsEps);
  Var z = ops::linear(t, n, lp.v);
  Var s = ops::silu(t, z);
  Var u = ops::linear(t, s, lp.u);
  Var branch = ops::scale_by_scalar_param(t, u, lp.alpha);
  return ops::add(t, h, branch);
}

inline Var dlrnet_forward(Tape& t, Var h, const DlrNetParams& p) {
  for (const auto& lp : p.layers) h = dlr_layer(t, h, lp);
  return h;
}

// The stop-gradient form of a DLR block: the value is the ordinary forward,
// but backward treats the whole branch as constant so the upstream gradient
// is exactly the skip-path gradient.
inline Var dlrnet_forward_stopgrad(Tape& t, const Var& z, const DlrNetParams& p) {
  Var y = dlrnet_forward(t, stop_grad(z), p);
  return ops::value_with_grad_of(t, y, z);
}

// Full SwiGLU residual sub-block: z + W_down((W_up n) .* silu(W_gate n)),
// n = rmsnorm(z).
inline Var swiglu_block(Tape& t, const Var& z, const SwigluParams& p) {
  Var n = ops::rmsnorm(t, z, p.norm_gain, kRmsEps);
  Var f = ops::swiglu_core(t, n, p.w_gate, p.w_up, p.w_down);
  return ops::add(t, z, f);
}

// FFN value without the residual/pre-norm wiring (the bare formula).
inline Matrix swiglu_forward(const Matrix& x, const SwigluParams& p) {
  Tape t(TapeMode::inference);
  Var xv = t.constant(x);
  return ops::swiglu_core(t, xv, p.w_gate, p.w_up, p.w_down).m();
}

inline Var linear_maybe_lora(Tape& t, const Var& x, const ParamPtr& w,
                             const std::map<int, LoraAdapter>& lora) {
  Var base = ops::linear(t, x, w);
  auto it = lora.find(w->id);
  if (it == lora.end()) return base;
  Var a = ops::linear(t, x, it->second.a);
  Var b = ops::linear(t, a, it->second.b);
  return ops::add(t, base, ops::scale(t, b, it->second.scaling));
}

// Pre-norm attention block: X + Attn(rmsnorm(X)), causal softmax over rows.
inline Var attention_block(Tape& t, const Var& x, const AttentionParams& p, bool causal,
                           const std::map<int, LoraAdapter>& lora = {}) {
  const std::size_t d = p.d, H = p.heads;
  if (d % H != 0) throw ShapeError("attention_block: d not divisible by heads");
  const std::size_t dh = d / H;
  Var n = ops::rmsnorm(t, x, p.norm_gain, kRmsEps);
  Var q = linear_maybe_lora(t, n, p.wq, lora);
  Var k = linear_maybe_lora(t, n, p.wk, lora);
  Var v = linear_maybe_lora(t, n, p.wv, lora);
  std::vector<Var> heads_out;
  heads_out.reserve(H);
  for (std::size_t h = 0; h < H; ++h) {
    Var qh = ops::slice_cols(t, q, h * dh, (h + 1) * dh);
    Var kh = ops::slice_cols(t, k, h * dh, (h + 1) * dh);
    Var vh = ops::slice_cols(t, v, h * dh, (h + 1) * dh);
    Var scores = ops::scale(t, ops::matmul_vars(t, qh, ops::transpose_var(t, kh)),
                            1.0 / std::sqrt(static_cast<double>(dh)));
    Var probs = ops::softmax_rows(t, scores, causal);
    heads_out.push_back(ops::matmul_vars(t, probs, vh));
  }
  Var ctx = H == 1 ? heads_out[0] : ops::concat_cols(t, heads_out);
  Var out = linear_maybe_lora(t, ctx, p.wo, lora);
  return ops::add(t, x, out);
}

// ---------------------------------------------------------------------------
// Toy byte-level transformer

struct ToyModelConfig {
  std::size_t vocab = 256;
  std::size_t d = 64;
  std::size_t n_layers = 4;
  std::size_t heads = 2;
  std::size_t d_ff = 256;
  std::size_t n_max = 128;
};

inline TransformerParams init_transformer(const ToyModelConfig& cfg, Rng rng) {
  TransformerParams m;
  m.vocab = cfg.vocab;
  m.d = cfg.d;
  m.n_max = cfg.n_max;
  m.heads = cfg.heads;
  m.d_ff = cfg.d_ff;
  m.n_layers = cfg.n_layers;
  m.tok_emb = make_param("tok_emb", rng_fill(rng, cfg.vocab, cfg.d, NormalDist{0.0, 0.02}));
  m.pos_emb = make_param("pos_emb", rng_fill(rng, cfg.n_max, cfg.d, NormalDist{0.0, 0.02}));
  const double s = std::sqrt(1.0 / static_cast<double>(cfg.d));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string nm = "layer" + std::to_string(l);
    AttentionParams a;
    a.d = cfg.d;
    a.heads = cfg.heads;
    a.norm_gain = make_param(nm + ".attn.gain", Matrix(1, cfg.d, 1.0));
    a.wq = make_param(nm + ".attn.wq", rng_fill(rng, cfg.d, cfg.d, NormalDist{0.0, s}));
    a.wk = make_param(nm + ".attn.wk", rng_fill(rng, cfg.d, cfg.d, NormalDist{0.0, s}));
    a.wv = make_param(nm + ".attn.wv", rng_fill(rng, cfg.d, cfg.d, NormalDist{0.0, s}));
    a.wo = make_param(nm + ".attn.wo", rng_fill(rng, cfg.d, cfg.d, NormalDist{0.0, s}));
    m.attn.push_back(std::move(a));
    FfnBlock f;
    f.kind = FfnBlock::Kind::swiglu;
    f.swiglu = init_swiglu(cfg.d, cfg.d_ff, rng.substream("swiglu", l), nm + ".ffn");
    m.ffn.push_back(std::move(f));
  }
  m.final_gain = make_param("final.gain", Matrix(1, cfg.d, 1.0));
  m.head = make_param("head", rng_fill(rng, cfg.vocab, cfg.d, NormalDist{0.0, s}));
  return m;
}

// The residual-stream chain of a model: one stage per attention block, one
// stage per SwiGLU block or per DLR layer. With stop_grad_dlr each DLR block
// collapses to a single constant-branch stage.
inline ChainProgram transformer_stages(const TransformerParams& m, bool causal = true,
                                       bool stop_grad_dlr = false) {
  ChainProgram prog;
  for (std::size_t l = 0; l < m.n_layers; ++l) {
    const AttentionParams* ap = &m.attn[l];
    const std::map<int, LoraAdapter>* lora = &m.lora;
    prog.push_back(Stage{[ap, causal, lora](Tape& t, const Var& x) {
                           return attention_block(t, x, *ap, causal, *lora);
                         },
                         "layer" + std::to_string(l) + ".attn"});
    const FfnBlock* fb = &m.ffn[l];
    if (fb->kind == FfnBlock::Kind::swiglu) {
      prog.push_back(Stage{[fb](Tape& t, const Var& x) { return swiglu_block(t, x, fb->swiglu); },
                           "layer" + std::to_string(l) + ".ffn"});
    } else if (stop_grad_dlr) {
      const DlrNetParams* net = &fb->dlr;
      prog.push_back(
          Stage{[net](Tape& t, const Var& x) { return dlrnet_forward_stopgrad(t, x, *net); },
                "layer" + std::to_string(l) + ".dlr_sg"});
    } else {
      for (std::size_t i = 0; i < fb->dlr.layers.size(); ++i) {
        const DlrLayerParams* lp = &fb->dlr.layers[i];
        prog.push_back(Stage{[lp](Tape& t, const Var& x) { return dlr_layer(t, x, *lp); },
                             "layer" + std::to_string(l) + ".dlr" + std::to_string(i)});
      }
    }
  }
  return prog;
}

// Embedding of one token sequence: tok_emb rows plus learned positions.
inline Var embed_sequence(Tape& t, const TransformerParams& m,
                          const std::vector<std::size_t>& tokens) {
  if (tokens.size() > m.n_max) throw ShapeError("embed_sequence: sequence too long");
  Var te = ops::gather_rows(t, m.tok_emb, tokens);
  Var pe = ops::first_rows(t, m.pos_emb, tokens.size());
  return ops::add(t, te, pe);
}

struct ForwardOptions {
  std::size_t checkpoint_interval = 0;  // 0: no checkpointing
  bool stop_grad_dlr = false;           // sever DLR branches in backward
};

// Logits (n x vocab) for one sequence. The per-layer chain is either run
// plainly or through checkpoint_chain.
inline Var transformer_logits(Tape& t, const TransformerParams& m,
                              const std::vector<std::size_t>& tokens,
                              const ForwardOptions& opt = {}) {
  Var x = embed_sequence(t, m, tokens);
  ChainProgram prog = transformer_stages(m, true, opt.stop_grad_dlr);
  if (opt.checkpoint_interval > 0)
    x = checkpoint_chain(t, prog, x, opt.checkpoint_interval);
  else
    x = run_chain(t, prog, x);
  Var n = ops::rmsnorm(t, x, m.final_gain, kRmsEps);
  return ops::linear(t, n, m.head);
}

// Residual stream right after layer `layer`'s attention sub-block (the z
// states module-wise distillation trains on).
inline Var transformer_hidden_after_attn(Tape& t, const TransformerParams& m,
                                         const std::vector<std::size_t>& tokens,
                                         std::size_t layer) {
  if (layer >= m.n_layers) throw ValueError("hidden_after_attn: layer out of range");
  Var x = embed_sequence(t, m, tokens);
  const ChainProgram all = transformer_stages(m);
  std::size_t li = 0;
  for (const auto& st : all) {
    const bool is_attn = st.scope == "layer" + std::to_string(li) + ".attn";
    t.push_scope(st.scope);
    x = st.apply(t, x);
    t.pop_scope();
    if (is_attn) {
      if (li == layer) return x;
      ++li;
    }
  }
  throw ValueError("hidden_after_attn: attention stage not found");
}

inline std::vector<ParamPtr> collect_params(const TransformerParams& m) {
  std::vector<ParamPtr> out;
  if (m.tok_emb) out.push_back(m.tok_emb);
  if (m.pos_emb) out.push_back(m.pos_emb);
  for (std::size_t l = 0; l < m.n_layers; ++l) {
    const auto& a = m.attn[l];
    out.insert(out.end(), {a.norm_gain, a.wq, a.wk, a.wv, a.wo});
    const auto& f = m.ffn[l];
    if (f.kind == FfnBlock::Kind::swiglu) {
      out.insert(out.end(), {f.swiglu.norm_gain, f.swiglu.w_gate, f.swiglu.w_up, f.swiglu.w_down});
    } else {
      for (const auto& lp : f.dlr.layers)
        out.insert(out.end(), {lp.norm_gain, lp.v, lp.u, lp.alpha});
    }
  }
  if (m.final_gain) out.push_back(m.final_gain);
  if (m.head) out.push_back(m.head);
  for (const auto& [id, ad] : m.lora) {
    out.push_back(ad.a);
    out.push_back(ad.b);
  }
  return out;
}

inline std::vector<ParamPtr> collect_params(const DlrNetParams& p) {
  std::vector<ParamPtr> out;
  for (const auto& lp : p.layers) out.insert(out.end(), {lp.norm_gain, lp.v, lp.u, lp.alpha});
  return out;
}

inline std::vector<ParamPtr> collect_params(const SwigluParams& p) {
  return {p.norm_gain, p.w_gate, p.w_up, p.w_down};
}

inline std::size_t param_count(const std::vector<ParamPtr>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p->value.size();
  return n;
}

inline std::size_t param_count(const TransformerParams& m) {
  std::size_t n = 0;
  for (const auto& p : collect_params(m))
    n += p->value.size();
  return n;
}

// Marks DLR parameters trainable and everything else frozen (or the reverse).
inline void set_dlr_only_trainable(TransformerParams& m, bool dlr_trainable = true) {
  for (const auto& p : collect_params(m)) p->requires_grad = !dlr_trainable;
  for (auto& f : m.ffn)
    if (f.kind == FfnBlock::Kind::dlr)
      for (auto& lp : f.dlr.layers) {
        lp.norm_gain->requires_grad = dlr_trainable;
        lp.v->requires_grad = dlr_trainable;
        lp.u->requires_grad = dlr_trainable;
        lp.alpha->requires_grad = dlr_trainable;
      }
}

inline void set_all_trainable(TransformerParams& m) {
  for (const auto& p : collect_params(m)) p->requires_grad = true;
}

// Attaches zero-initialized LoRA adapters to the named attention projections
// ("wq", "wk", "wv", "wo"); base weights are frozen.
inline std::vector<LoraAdapter> lora_attach(TransformerParams& m,
                                            const std::vector<std::string>& targets,
                                            std::size_t rank_l, Rng rng,
                                            double scaling = 1.0) {
  if (rank_l < 1) throw ValueError("lora_attach: rank must be >= 1");
  std::vector<LoraAdapter> out;
  for (const auto& p : collect_params(m)) p->requires_grad = false;
  for (std::size_t l = 0; l < m.n_layers; ++l) {
    auto& a = m.attn[l];
    for (const auto& tgt : targets) {
      ParamPtr w;
      if (tgt == "wq") w = a.wq;
      else if (tgt == "wk") w = a.wk;
      else if (tgt == "wv") w = a.wv;
      else if (tgt == "wo") w = a.wo;
      else throw ValueError("lora_attach: unknown target '" + tgt + "'");
      LoraAdapter ad;
      ad.target_param_id = w->id;
      const double s = std::sqrt(1.0 / static_cast<double>(w->value.cols()));
      ad.a = make_param(w->name + ".lora_a",
                        rng_fill(rng, rank_l, w->value.cols(), NormalDist{0.0, s}));
      ad.b = make_param(w->name + ".lora_b", Matrix(w->value.rows(), rank_l, 0.0));
      ad.scaling = scaling;
      m.lora[w->id] = ad;
      out.push_back(ad);
    }
  }
  return out;
}

}  // namespace dlrlock
