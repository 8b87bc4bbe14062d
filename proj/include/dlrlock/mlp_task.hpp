// Bias-free two-layer ReLU classifier used by the penalty-locking study:
// f(x) = W2 relu(W1 x). Analytic cross-entropy and function-matching
// gradients, plus the exact per-sample trace of the cross-entropy Hessian.
// The network is piecewise linear in its parameters, so the Hessian trace
// equals the Gauss-Newton trace Tr(H_f J J^T) exactly (almost everywhere);
// J J^T has the closed form ||h||^2 I + ||x||^2 W2 D W2^T.
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "dlrlock/data.hpp"
#include "dlrlock/matrix.hpp"
#include "dlrlock/rng.hpp"

namespace dlrlock {

struct TwoLayerMlp {
  Matrix w1;  // hidden x in
  Matrix w2;  // out x hidden

  std::size_t n_params() const { return w1.size() + w2.size(); }
};

inline TwoLayerMlp init_mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng rng) {
  TwoLayerMlp m;
  m.w1 = rng_fill(rng, hidden, in, NormalDist{0.0, std::sqrt(2.0 / static_cast<double>(in))});
  m.w2 = rng_fill(rng, out, hidden, NormalDist{0.0, std::sqrt(2.0 / static_cast<double>(hidden))});
  return m;
}

struct MlpForward {
  Matrix z;  // n x hidden pre-activations
  Matrix h;  // n x hidden relu outputs
  Matrix f;  // n x out logits
};

inline MlpForward mlp_forward(const TwoLayerMlp& m, const Matrix& x) {
  MlpForward r;
  r.z = matmul_nt(x, m.w1);
  r.h = r.z;
  for (std::size_t i = 0; i < r.h.size(); ++i) r.h.data()[i] = std::max(r.h.data()[i], 0.0);
  r.f = matmul_nt(r.h, m.w2);
  return r;
}

inline std::vector<std::size_t> mlp_predict(const TwoLayerMlp& m, const Matrix& x) {
  const Matrix f = mlp_forward(m, x).f;
  std::vector<std::size_t> out(f.rows());
  for (std::size_t i = 0; i < f.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < f.cols(); ++j)
      if (f(i, j) > f(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

struct MlpGrads {
  double loss = 0.0;
  Matrix g1, g2;
};

namespace detail {
inline Matrix softmax_of(const Matrix& f) {
  Matrix p = f;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double* r = p.row(i);
    double mx = r[0];
    for (std::size_t j = 1; j < p.cols(); ++j) mx = std::max(mx, r[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      r[j] = std::exp(r[j] - mx);
      s += r[j];
    }
    for (std::size_t j = 0; j < p.cols(); ++j) r[j] /= s;
  }
  return p;
}

// Backprop a logit-space gradient G (n x out) through the MLP.
inline void backprop_logits(const TwoLayerMlp& m, const Matrix& x, const MlpForward& fw,
                            const Matrix& g, MlpGrads& out) {
  out.g2 = matmul_tn(g, fw.h);
  Matrix gh = matmul(g, m.w2);
  for (std::size_t i = 0; i < gh.size(); ++i)
    if (fw.z.data()[i] <= 0.0) gh.data()[i] = 0.0;
  out.g1 = matmul_tn(gh, x);
}
}  // namespace detail

// Mean cross-entropy and gradients.
inline MlpGrads mlp_ce_grads(const TwoLayerMlp& m, const Matrix& x,
                             const std::vector<std::size_t>& y) {
  MlpForward fw = mlp_forward(m, x);
  Matrix p = detail::softmax_of(fw.f);
  const std::size_t n = x.rows();
  MlpGrads out;
  Matrix g = p;
  for (std::size_t i = 0; i < n; ++i) {
    out.loss -= std::log(std::max(p(i, y[i]), 1e-300));
    g(i, y[i]) -= 1.0;
  }
  out.loss /= static_cast<double>(n);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] /= static_cast<double>(n);
  detail::backprop_logits(m, x, fw, g, out);
  return out;
}

// Mean squared distance to reference logits: (1/n) sum_i ||f_i - f0_i||^2.
inline MlpGrads mlp_match_grads(const TwoLayerMlp& m, const Matrix& x, const Matrix& f0) {
  MlpForward fw = mlp_forward(m, x);
  const std::size_t n = x.rows();
  MlpGrads out;
  Matrix g = fw.f - f0;
  out.loss = frob_norm_sq(g) / static_cast<double>(n);
  for (std::size_t i = 0; i < g.size(); ++i)
    g.data()[i] *= 2.0 / static_cast<double>(n);
  detail::backprop_logits(m, x, fw, g, out);
  return out;
}

// ---------------------------------------------------------------------------
// Scope masks for restricted Hessian traces and probes

struct ScopeMask {
  // empty matrices mean "all coordinates of that block"
  std::optional<Matrix> m1, m2;  // 0/1 masks over w1 / w2; nullopt -> all ones
  bool w2_included = true;       // first_layer scope drops the w2 block

  static ScopeMask all() { return {}; }
  static ScopeMask first_layer() {
    ScopeMask s;
    s.w2_included = false;
    return s;
  }
  static ScopeMask random_fraction(const TwoLayerMlp& shape, double frac, Rng rng) {
    ScopeMask s;
    Matrix a(shape.w1.rows(), shape.w1.cols());
    Matrix b(shape.w2.rows(), shape.w2.cols());
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform01() < frac ? 1.0 : 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform01() < frac ? 1.0 : 0.0;
    s.m1 = std::move(a);
    s.m2 = std::move(b);
    return s;
  }
  double mask1(std::size_t i, std::size_t j) const { return m1 ? (*m1)(i, j) : 1.0; }
  double mask2(std::size_t i, std::size_t j) const {
    if (!w2_included) return 0.0;
    return m2 ? (*m2)(i, j) : 1.0;
  }
};

// Exact per-sample trace of the cross-entropy Hessian restricted to the
// scope: sum over in-scope coordinates of (J e_c)^T H_f (J e_c).
inline double mlp_ce_trace_sample(const TwoLayerMlp& m, const double* x, std::size_t in_dim,
                                  const ScopeMask& scope) {
  const std::size_t hidden = m.w1.rows(), out = m.w2.rows();
  std::vector<double> z(hidden, 0.0), h(hidden, 0.0);
  for (std::size_t i = 0; i < hidden; ++i) {
    const double* wi = m.w1.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < in_dim; ++j) acc += wi[j] * x[j];
    z[i] = acc;
    h[i] = std::max(acc, 0.0);
  }
  std::vector<double> f(out, 0.0);
  for (std::size_t k = 0; k < out; ++k) {
    const double* wk = m.w2.row(k);
    double acc = 0.0;
    for (std::size_t i = 0; i < hidden; ++i) acc += wk[i] * h[i];
    f[k] = acc;
  }
  double mx = f[0];
  for (double v : f) mx = std::max(mx, v);
  double s = 0.0;
  std::vector<double> p(out);
  for (std::size_t k = 0; k < out; ++k) {
    p[k] = std::exp(f[k] - mx);
    s += p[k];
  }
  for (auto& v : p) v /= s;

  double tr = 0.0;
  // W2 block: coordinate (k, j) contributes (p_k - p_k^2) h_j^2
  if (scope.w2_included) {
    if (scope.m2) {
      for (std::size_t k = 0; k < out; ++k)
        for (std::size_t j = 0; j < hidden; ++j)
          if ((*scope.m2)(k, j) != 0.0) tr += (p[k] - p[k] * p[k]) * h[j] * h[j];
    } else {
      double hs = 0.0, ps = 0.0;
      for (double v : h) hs += v * v;
      for (double v : p) ps += v * v;
      double psum = 0.0;
      for (double v : p) psum += v;
      tr += hs * (psum - ps);
    }
  }
  // W1 block: coordinate (i, j) contributes sigma'_i x_j^2 c_i with
  // c_i = w2col_i^T H_f w2col_i
  std::vector<double> c(hidden, 0.0);
  for (std::size_t i = 0; i < hidden; ++i) {
    if (z[i] <= 0.0) continue;
    double quad = 0.0, lin = 0.0;
    for (std::size_t k = 0; k < out; ++k) {
      const double w = m.w2(k, i);
      quad += p[k] * w * w;
      lin += p[k] * w;
    }
    c[i] = quad - lin * lin;
  }
  if (scope.m1) {
    for (std::size_t i = 0; i < hidden; ++i) {
      if (c[i] == 0.0) continue;
      for (std::size_t j = 0; j < in_dim; ++j)
        if ((*scope.m1)(i, j) != 0.0) tr += c[i] * x[j] * x[j];
    }
  } else {
    double xs = 0.0;
    for (std::size_t j = 0; j < in_dim; ++j) xs += x[j] * x[j];
    double cs = 0.0;
    for (double v : c) cs += v;
    tr += xs * cs;
  }
  return tr;
}

inline std::vector<double> mlp_ce_trace_batch(const TwoLayerMlp& m, const Matrix& x,
                                              const ScopeMask& scope) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    out[i] = mlp_ce_trace_sample(m, x.row(i), x.cols(), scope);
  return out;
}

}  // namespace dlrlock
