#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lqt/array.hpp"
#include "lqt/error.hpp"
#include "lqt/graph.hpp"
#include "lqt/rng.hpp"

// Whole-array differentiable operations. Binary ops accept identical shapes or
// a single-element operand broadcast against the other side; no general
// broadcasting. Every op checks its output for NaN/Inf.

namespace lqt::ops {

namespace detail {

template <class S>
inline Var<S> make_var(Graph<S>* g, Array<S> value, int node = -1) {
  return Var<S>{g, std::make_shared<const Array<S>>(std::move(value)), node};
}

template <class S>
inline const std::vector<std::size_t>& binary_shape(const Array<S>& a, const Array<S>& b,
                                                    const char* op) {
  if (a.same_shape(b)) return a.shape();
  if (a.is_scalar()) return b.shape();
  if (b.is_scalar()) return a.shape();
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " are not broadcastable");
}

// out[t,n] += sum_k a[t,k] * b[k,n]
template <class S>
inline void matmul_nn_acc(const Array<S>& a, const Array<S>& b, Array<S>& out) {
  const std::size_t T = a.rows(), K = a.cols(), N = b.cols();
  const S* ap = a.data();
  const S* bp = b.data();
  S* op = out.data();
  for (std::size_t t = 0; t < T; ++t) {
    S* orow = op + t * N;
    const S* arow = ap + t * K;
    for (std::size_t k = 0; k < K; ++k) {
      const S av = arow[k];
      const S* brow = bp + k * N;
      for (std::size_t n = 0; n < N; ++n) orow[n] += av * brow[n];
    }
  }
}

// out[t,n] += sum_k a[t,k] * b[n,k]   (B used transposed)
template <class S>
inline void matmul_nt_acc(const Array<S>& a, const Array<S>& b, Array<S>& out) {
  const std::size_t T = a.rows(), K = a.cols(), N = b.rows();
  for (std::size_t t = 0; t < T; ++t) {
    const S* arow = a.data() + t * K;
    S* orow = out.data() + t * N;
    for (std::size_t n = 0; n < N; ++n) {
      const S* brow = b.data() + n * K;
      S acc = S(0);
      for (std::size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
      orow[n] += acc;
    }
  }
}

// out[i,j] += sum_t a[t,i] * b[t,j]   (A used transposed)
template <class S>
inline void matmul_tn_acc(const Array<S>& a, const Array<S>& b, Array<S>& out) {
  const std::size_t T = a.rows(), I = a.cols(), J = b.cols();
  for (std::size_t t = 0; t < T; ++t) {
    const S* arow = a.data() + t * I;
    const S* brow = b.data() + t * J;
    for (std::size_t i = 0; i < I; ++i) {
      const S av = arow[i];
      S* orow = out.data() + i * J;
      for (std::size_t j = 0; j < J; ++j) orow[j] += av * brow[j];
    }
  }
}

template <class S>
inline S sigmoid_scalar(S x) {
  if (x >= S(0)) {
    return S(1) / (S(1) + std::exp(-x));
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
inline S softplus_scalar(S x) {
  if (x > S(30)) return x;
  if (x < S(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// binary elementwise
// ---------------------------------------------------------------------------

// FwdK(a, b) -> value; DaK(up, a, b) -> d/da contribution; DbK likewise.
template <class S, class FwdK, class DaK, class DbK>
Var<S> binary_op(const char* name, const Var<S>& a, const Var<S>& b, FwdK fwd, DaK da, DbK db) {
  Graph<S>* g = require_same_graph(a, b);
  const Array<S>& av = a.v();
  const Array<S>& bv = b.v();
  Array<S> out(detail::binary_shape(av, bv, name));
  const bool as = av.is_scalar(), bs = bv.is_scalar();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fwd(av[as ? 0 : i], bv[bs ? 0 : i]);
  }
  ensure_finite(out, name);
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && (a.tracked() || b.tracked())) {
    r.node = g->record(r.v().shape(), [va = a.value, vb = b.value, ia = a.node, ib = b.node, da,
                                       db, as, bs](Graph<S>& gg, const Array<S>& up) {
      if (ia >= 0) {
        Array<S>& ga = gg.grad(ia);
        for (std::size_t i = 0; i < up.size(); ++i) {
          ga[as ? 0 : i] += da(up[i], (*va)[as ? 0 : i], (*vb)[bs ? 0 : i]);
        }
      }
      if (ib >= 0) {
        Array<S>& gb = gg.grad(ib);
        for (std::size_t i = 0; i < up.size(); ++i) {
          gb[bs ? 0 : i] += db(up[i], (*va)[as ? 0 : i], (*vb)[bs ? 0 : i]);
        }
      }
    });
  }
  return r;
}

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  return binary_op<S>(
      "add", a, b, [](S x, S y) { return x + y; }, [](S u, S, S) { return u; },
      [](S u, S, S) { return u; });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  return binary_op<S>(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S u, S, S) { return u; },
      [](S u, S, S) { return -u; });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  return binary_op<S>(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S u, S, S y) { return u * y; },
      [](S u, S x, S) { return u * x; });
}

template <class S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  return binary_op<S>(
      "div", a, b, [](S x, S y) { return x / y; }, [](S u, S, S y) { return u / y; },
      [](S u, S x, S y) { return -u * x / (y * y); });
}

// Subgradient convention for ties: the first operand wins.
template <class S>
Var<S> minimum(const Var<S>& a, const Var<S>& b) {
  return binary_op<S>(
      "minimum", a, b, [](S x, S y) { return x <= y ? x : y; },
      [](S u, S x, S y) { return x <= y ? u : S(0); },
      [](S u, S x, S y) { return x <= y ? S(0) : u; });
}

template <class S>
Var<S> maximum(const Var<S>& a, const Var<S>& b) {
  return binary_op<S>(
      "maximum", a, b, [](S x, S y) { return x >= y ? x : y; },
      [](S u, S x, S y) { return x >= y ? u : S(0); },
      [](S u, S x, S y) { return x >= y ? S(0) : u; });
}

// ---------------------------------------------------------------------------
// unary elementwise
// ---------------------------------------------------------------------------

// DK(up, x, y) where y is the forward output (lets sigmoid/exp reuse it).
template <class S, class FwdK, class DK>
Var<S> unary_op(const char* name, const Var<S>& x, FwdK fwd, DK dk) {
  Graph<S>* g = x.graph;
  const Array<S>& xv = x.v();
  Array<S> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  ensure_finite(out, name);
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && x.tracked()) {
    r.node = g->record(
        r.v().shape(), [vx = x.value, vy = r.value, ix = x.node, dk](Graph<S>& gg, const Array<S>& up) {
          Array<S>& gx = gg.grad(ix);
          for (std::size_t i = 0; i < up.size(); ++i) gx[i] += dk(up[i], (*vx)[i], (*vy)[i]);
        });
  }
  return r;
}

template <class S>
Var<S> neg(const Var<S>& x) {
  return unary_op<S>(
      "neg", x, [](S v) { return -v; }, [](S u, S, S) { return -u; });
}

template <class S>
Var<S> exp(const Var<S>& x) {
  return unary_op<S>(
      "exp", x, [](S v) { return std::exp(v); }, [](S u, S, S y) { return u * y; });
}

template <class S>
Var<S> sigmoid(const Var<S>& x) {
  return unary_op<S>(
      "sigmoid", x, [](S v) { return detail::sigmoid_scalar(v); },
      [](S u, S, S y) { return u * y * (S(1) - y); });
}

template <class S>
Var<S> softplus(const Var<S>& x) {
  return unary_op<S>(
      "softplus", x, [](S v) { return detail::softplus_scalar(v); },
      [](S u, S v, S) { return u * detail::sigmoid_scalar(v); });
}

template <class S>
Var<S> relu(const Var<S>& x) {
  return unary_op<S>(
      "relu", x, [](S v) { return v > S(0) ? v : S(0); },
      [](S u, S v, S) { return v > S(0) ? u : S(0); });
}

template <class S>
Var<S> mul_scalar(const Var<S>& x, S c) {
  return unary_op<S>(
      "mul_scalar", x, [c](S v) { return v * c; }, [c](S u, S, S) { return u * c; });
}

template <class S>
Var<S> add_scalar(const Var<S>& x, S c) {
  return unary_op<S>(
      "add_scalar", x, [c](S v) { return v + c; }, [](S u, S, S) { return u; });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class S>
Var<S> sum(const Var<S>& x) {
  Graph<S>* g = x.graph;
  S acc = S(0);
  for (const S v : x.v().values()) acc += v;
  Array<S> out = Array<S>::from({1}, {acc});
  ensure_finite(out, "sum");
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && x.tracked()) {
    r.node = g->record({1}, [ix = x.node, n = x.v().size()](Graph<S>& gg, const Array<S>& up) {
      Array<S>& gx = gg.grad(ix);
      const S u = up[0];
      for (std::size_t i = 0; i < n; ++i) gx[i] += u;
    });
  }
  return r;
}

// ---------------------------------------------------------------------------
// sequence ops
// ---------------------------------------------------------------------------

// Per-timestep normalization over the channel axis followed by affine (gamma,
// beta are per-channel). Variance is the biased estimate.
template <class S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps) {
  Graph<S>* g = x.graph;
  const Array<S>& xv = x.v();
  const std::size_t T = xv.rows(), C = xv.cols();
  if (C == 0) throw ShapeError("layer_norm: channel count must be >= 1");
  if (gamma.v().size() != C || beta.v().size() != C) {
    throw ShapeError("layer_norm: gamma/beta must have length C=" + std::to_string(C));
  }
  if (eps <= S(0)) throw ShapeError("layer_norm: eps must be positive");

  Array<S> out(xv.shape());
  auto xhat = std::make_shared<Array<S>>(xv.shape());
  auto rstd = std::make_shared<Array<S>>(std::vector<std::size_t>{T});
  const S* gp = gamma.v().data();
  const S* bp = beta.v().data();
  for (std::size_t t = 0; t < T; ++t) {
    const S* row = xv.data() + t * C;
    S mean = S(0);
    for (std::size_t c = 0; c < C; ++c) mean += row[c];
    mean /= static_cast<S>(C);
    S var = S(0);
    for (std::size_t c = 0; c < C; ++c) {
      const S d = row[c] - mean;
      var += d * d;
    }
    var /= static_cast<S>(C);
    const S rs = S(1) / std::sqrt(var + eps);
    (*rstd)[t] = rs;
    S* hrow = xhat->data() + t * C;
    S* orow = out.data() + t * C;
    for (std::size_t c = 0; c < C; ++c) {
      hrow[c] = (row[c] - mean) * rs;
      orow[c] = gp[c] * hrow[c] + bp[c];
    }
  }
  ensure_finite(out, "layer_norm");
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && (x.tracked() || gamma.tracked() || beta.tracked())) {
    r.node = g->record(
        r.v().shape(), [ix = x.node, ig = gamma.node, ib = beta.node, vgamma = gamma.value, xhat,
                        rstd, T, C](Graph<S>& gg, const Array<S>& up) {
          if (ib >= 0) {
            Array<S>& gb = gg.grad(ib);
            for (std::size_t t = 0; t < T; ++t) {
              const S* urow = up.data() + t * C;
              for (std::size_t c = 0; c < C; ++c) gb[c] += urow[c];
            }
          }
          if (ig >= 0) {
            Array<S>& ggm = gg.grad(ig);
            for (std::size_t t = 0; t < T; ++t) {
              const S* urow = up.data() + t * C;
              const S* hrow = xhat->data() + t * C;
              for (std::size_t c = 0; c < C; ++c) ggm[c] += urow[c] * hrow[c];
            }
          }
          if (ix >= 0) {
            Array<S>& gx = gg.grad(ix);
            const S* gp2 = vgamma->data();
            for (std::size_t t = 0; t < T; ++t) {
              const S* urow = up.data() + t * C;
              const S* hrow = xhat->data() + t * C;
              S* grow = gx.data() + t * C;
              S mean_u = S(0), mean_uh = S(0);
              for (std::size_t c = 0; c < C; ++c) {
                const S ug = urow[c] * gp2[c];
                mean_u += ug;
                mean_uh += ug * hrow[c];
              }
              mean_u /= static_cast<S>(C);
              mean_uh /= static_cast<S>(C);
              const S rs = (*rstd)[t];
              for (std::size_t c = 0; c < C; ++c) {
                const S ug = urow[c] * gp2[c];
                grow[c] += rs * (ug - mean_u - hrow[c] * mean_uh);
              }
            }
          }
        });
  }
  return r;
}

// Depthwise 1-D convolution over the time axis, zero padding outside [0, T),
// odd kernel length, one length-K kernel per channel (kernel is K x C).
template <class S>
Var<S> conv1d_depthwise(const Var<S>& x, const Var<S>& kernel) {
  Graph<S>* g = require_same_graph(x, kernel);
  const Array<S>& xv = x.v();
  const Array<S>& kv = kernel.v();
  const std::size_t T = xv.rows(), C = xv.cols();
  const std::size_t K = kv.rows();
  if (K % 2 == 0) throw ShapeError("conv1d_depthwise: kernel length must be odd");
  if (K > 2 * T - 1) throw ShapeError("conv1d_depthwise: kernel length exceeds 2T-1");
  if (kv.cols() != C) throw ShapeError("conv1d_depthwise: kernel channels must match input");
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(K / 2);

  Array<S> out(xv.shape());
  const std::ptrdiff_t Ts = static_cast<std::ptrdiff_t>(T);
  for (std::ptrdiff_t t = 0; t < Ts; ++t) {
    S* orow = out.data() + t * C;
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(K); ++k) {
      const std::ptrdiff_t src = t + k - H;
      if (src < 0 || src >= Ts) continue;
      const S* xrow = xv.data() + src * C;
      const S* krow = kv.data() + k * C;
      for (std::size_t c = 0; c < C; ++c) orow[c] += krow[c] * xrow[c];
    }
  }
  ensure_finite(out, "conv1d_depthwise");
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && (x.tracked() || kernel.tracked())) {
    r.node = g->record(r.v().shape(), [ix = x.node, ik = kernel.node, vx = x.value,
                                       vk = kernel.value, T, C, K, H](Graph<S>& gg,
                                                                      const Array<S>& up) {
      const std::ptrdiff_t Ts = static_cast<std::ptrdiff_t>(T);
      if (ix >= 0) {
        Array<S>& gx = gg.grad(ix);
        for (std::ptrdiff_t t = 0; t < Ts; ++t) {
          const S* urow = up.data() + t * C;
          for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(K); ++k) {
            const std::ptrdiff_t src = t + k - H;
            if (src < 0 || src >= Ts) continue;
            const S* krow = vk->data() + k * C;
            S* grow = gx.data() + src * C;
            for (std::size_t c = 0; c < C; ++c) grow[c] += krow[c] * urow[c];
          }
        }
      }
      if (ik >= 0) {
        Array<S>& gk = gg.grad(ik);
        for (std::ptrdiff_t t = 0; t < Ts; ++t) {
          const S* urow = up.data() + t * C;
          for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(K); ++k) {
            const std::ptrdiff_t src = t + k - H;
            if (src < 0 || src >= Ts) continue;
            const S* xrow = vx->data() + src * C;
            S* grow = gk.data() + k * C;
            for (std::size_t c = 0; c < C; ++c) grow[c] += xrow[c] * urow[c];
          }
        }
      }
    });
  }
  return r;
}

// Single depthwise tap: window is K x C (already zero-padded by the caller),
// produces the 1 x C response at the window center. Used by the sequential
// backends that evaluate the stimulus one timestep at a time.
template <class S>
Var<S> depthwise_window(const Var<S>& window, const Var<S>& kernel) {
  Graph<S>* g = require_same_graph(window, kernel);
  const Array<S>& wv = window.v();
  const Array<S>& kv = kernel.v();
  if (!wv.same_shape(kv)) {
    throw ShapeError("depthwise_window: window and kernel must both be K x C");
  }
  const std::size_t K = wv.rows(), C = wv.cols();
  Array<S> out({std::size_t{1}, C});
  for (std::size_t k = 0; k < K; ++k) {
    const S* xrow = wv.data() + k * C;
    const S* krow = kv.data() + k * C;
    for (std::size_t c = 0; c < C; ++c) out[c] += krow[c] * xrow[c];
  }
  ensure_finite(out, "depthwise_window");
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && (window.tracked() || kernel.tracked())) {
    r.node = g->record(r.v().shape(), [iw = window.node, ik = kernel.node, vw = window.value,
                                       vk = kernel.value, K, C](Graph<S>& gg, const Array<S>& up) {
      if (iw >= 0) {
        Array<S>& gw = gg.grad(iw);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t c = 0; c < C; ++c) gw[k * C + c] += (*vk)[k * C + c] * up[c];
      }
      if (ik >= 0) {
        Array<S>& gk = gg.grad(ik);
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t c = 0; c < C; ++c) gk[k * C + c] += (*vw)[k * C + c] * up[c];
      }
    });
  }
  return r;
}

// Same affine map applied at every timestep: y = x @ w + b.
template <class S>
Var<S> linear_per_timestep(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  Graph<S>* g = require_same_graph(x, w);
  const Array<S>& xv = x.v();
  const Array<S>& wv = w.v();
  const Array<S>& bv = b.v();
  const std::size_t T = xv.rows(), Cin = xv.cols();
  const std::size_t Cout = wv.cols();
  if (wv.rows() != Cin) {
    throw ShapeError("linear_per_timestep: x cols " + std::to_string(Cin) +
                     " != w rows " + std::to_string(wv.rows()));
  }
  if (bv.size() != Cout) throw ShapeError("linear_per_timestep: bias length must equal w cols");

  Array<S> out({T, Cout});
  for (std::size_t t = 0; t < T; ++t) {
    S* orow = out.data() + t * Cout;
    for (std::size_t c = 0; c < Cout; ++c) orow[c] = bv[c];
  }
  detail::matmul_nn_acc(xv, wv, out);
  ensure_finite(out, "linear_per_timestep");
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && (x.tracked() || w.tracked() || b.tracked())) {
    r.node = g->record(r.v().shape(), [ix = x.node, iw = w.node, ib = b.node, vx = x.value,
                                       vw = w.value, T, Cout](Graph<S>& gg, const Array<S>& up) {
      if (ix >= 0) detail::matmul_nt_acc(up, *vw, gg.grad(ix));
      if (iw >= 0) detail::matmul_tn_acc(*vx, up, gg.grad(iw));
      if (ib >= 0) {
        Array<S>& gb = gg.grad(ib);
        for (std::size_t t = 0; t < T; ++t) {
          const S* urow = up.data() + t * Cout;
          for (std::size_t c = 0; c < Cout; ++c) gb[c] += urow[c];
        }
      }
    });
  }
  return r;
}

// Inverted dropout: in training mode each element is zeroed with probability
// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
template <class S>
Var<S> dropout(const Var<S>& x, double rate, std::uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ShapeError("dropout: rate must be in [0, 1)");
  }
  if (!training || rate == 0.0) return x;
  Graph<S>* g = x.graph;
  const Array<S>& xv = x.v();
  auto mask = std::make_shared<Array<S>>(xv.shape());
  const S scale = S(1.0/ (1.0 - rate));
  Array<S> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double u = static_cast<double>(rng::mix(seed, i) >> 11) * 0x1.0p-53;
    const S m = u >= rate ? scale : S(0);
    (*mask)[i] = m;
    out[i] = xv[i] * m;
  }
  ensure_finite(out, "dropout");
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && x.tracked()) {
    r.node = g->record(r.v().shape(), [ix = x.node, mask](Graph<S>& gg, const Array<S>& up) {
      Array<S>& gx = gg.grad(ix);
      for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i] * (*mask)[i];
    });
  }
  return r;
}

// Max-pool over the time axis with window == stride (pyramid downsampling).
// Ties route the gradient to the earliest element of the window.
template <class S>
Var<S> maxpool_rows(const Var<S>& x, std::size_t stride) {
  Graph<S>* g = x.graph;
  const Array<S>& xv = x.v();
  const std::size_t T = xv.rows(), C = xv.cols();
  if (stride == 0 || T % stride != 0) {
    throw ShapeError("maxpool_rows: T=" + std::to_string(T) + " not divisible by stride " +
                     std::to_string(stride));
  }
  const std::size_t To = T / stride;
  Array<S> out({To, C});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(To * C);
  for (std::size_t r = 0; r < To; ++r) {
    S* orow = out.data() + r * C;
    std::uint32_t* arow = argmax->data() + r * C;
    const std::size_t t0 = r * stride;
    for (std::size_t c = 0; c < C; ++c) {
      S best = xv(t0, c);
      std::uint32_t bi = static_cast<std::uint32_t>(t0);
      for (std::size_t w = 1; w < stride; ++w) {
        const S v = xv(t0 + w, c);
        if (v > best) {
          best = v;
          bi = static_cast<std::uint32_t>(t0 + w);
        }
      }
      orow[c] = best;
      arow[c] = bi;
    }
  }
  ensure_finite(out, "maxpool_rows");
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && x.tracked()) {
    r.node =
        g->record(r.v().shape(), [ix = x.node, argmax, C](Graph<S>& gg, const Array<S>& up) {
          Array<S>& gx = gg.grad(ix);
          for (std::size_t i = 0; i < up.size(); ++i) {
            gx[(*argmax)[i] * C + (i % C)] += up[i];
          }
        });
  }
  return r;
}

// Rows [r0, r1) as a new (r1-r0) x C array.
template <class S>
Var<S> slice_rows(const Var<S>& x, std::size_t r0, std::size_t r1) {
  Graph<S>* g = x.graph;
  const Array<S>& xv = x.v();
  const std::size_t T = xv.rows(), C = xv.cols();
  if (r0 >= r1 || r1 > T) throw ShapeError("slice_rows: invalid row range");
  Array<S> out({r1 - r0, C});
  std::copy(xv.data() + r0 * C, xv.data() + r1 * C, out.data());
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && x.tracked()) {
    r.node = g->record(r.v().shape(), [ix = x.node, r0, C](Graph<S>& gg, const Array<S>& up) {
      Array<S>& gx = gg.grad(ix);
      S* base = gx.data() + r0 * C;
      for (std::size_t i = 0; i < up.size(); ++i) base[i] += up[i];
    });
  }
  return r;
}

// Columns [c0, c1) as a new T x (c1-c0) array.
template <class S>
Var<S> slice_cols(const Var<S>& x, std::size_t c0, std::size_t c1) {
  Graph<S>* g = x.graph;
  const Array<S>& xv = x.v();
  const std::size_t T = xv.rows(), C = xv.cols();
  if (c0 >= c1 || c1 > C) throw ShapeError("slice_cols: invalid column range");
  const std::size_t W = c1 - c0;
  Array<S> out({T, W});
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(xv.data() + t * C + c0, xv.data() + t * C + c1, out.data() + t * W);
  }
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && x.tracked()) {
    r.node = g->record(r.v().shape(), [ix = x.node, c0, C, W](Graph<S>& gg, const Array<S>& up) {
      Array<S>& gx = gg.grad(ix);
      const std::size_t T2 = up.size() / W;
      for (std::size_t t = 0; t < T2; ++t)
        for (std::size_t w = 0; w < W; ++w) gx[t * C + c0 + w] += up[t * W + w];
    });
  }
  return r;
}

// Stack T row vars (each 1 x C) into a T x C array.
template <class S>
Var<S> stack_rows(const std::vector<Var<S>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  Graph<S>* g = rows.front().graph;
  const std::size_t C = rows.front().v().cols();
  const std::size_t T = rows.size();
  Array<S> out({T, C});
  bool tracked = false;
  for (std::size_t t = 0; t < T; ++t) {
    if (rows[t].v().size() != C) throw ShapeError("stack_rows: inconsistent row widths");
    std::copy(rows[t].v().data(), rows[t].v().data() + C, out.data() + t * C);
    tracked = tracked || rows[t].tracked();
  }
  Var<S> r = detail::make_var(g, std::move(out));
  if (g->recording() && tracked) {
    std::vector<int> ids(T);
    for (std::size_t t = 0; t < T; ++t) ids[t] = rows[t].node;
    r.node = g->record(r.v().shape(), [ids = std::move(ids), C](Graph<S>& gg, const Array<S>& up) {
      for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0) continue;
        Array<S>& gr = gg.grad(ids[t]);
        const S* urow = up.data() + t * C;
        for (std::size_t c = 0; c < C; ++c) gr[c] += urow[c];
      }
    });
  }
  return r;
}

}  // namespace lqt::ops
