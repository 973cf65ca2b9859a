#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lqt/decay.hpp"
#include "lqt/graph.hpp"
#include "lqt/ops.hpp"
#include "lqt/rng.hpp"

// Liquid parallel temporal block: a time-scale adaptive relaxation filter.
// Each timestep's output is a convex blend of the input token (retention,
// weight alpha) and a gated local stimulus (injection, weight 1-alpha), where
// alpha = exp(-lambda * dt) comes from a learnable decay rate. The Parallel
// backend evaluates the blend fully vectorized over the sequence; the
// CfcSequential and OdeEuler backends are step-by-step reference
// implementations of the underlying recurrence used for equivalence and
// efficiency comparisons.

namespace lqt {

inline constexpr double kLayerNormEps = 1e-5;

enum class BackendKind { Parallel, CfcSequential, OdeEuler };

inline const char* to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Parallel: return "parallel";
    case BackendKind::CfcSequential: return "cfc_sequential";
    default: return "ode_euler";
  }
}

struct Backend {
  BackendKind kind = BackendKind::Parallel;
  int substeps = 16;  // OdeEuler only: explicit Euler steps per token interval
};

template <class S>
struct LptbWeights {
  Parameter<S> ln_gamma, ln_beta;      // C
  Parameter<S> dw_kernel;              // K x C
  Parameter<S> pw_weight, pw_bias;     // C x C, C
  Parameter<S> gate_weight, gate_bias; // C x C, C
  double dropout_rate = 0.1;
  DecayParams<S> decay;

  std::size_t channels() const { return ln_gamma.size(); }
  std::size_t kernel_size() const { return dw_kernel.value.rows(); }

  static LptbWeights init(const std::string& prefix, std::size_t C, std::size_t K,
                          DecaySharingMode sharing, DtPolicy dt, int level, int stride,
                          double epsilon, double dropout_rate, std::uint64_t seed) {
    LptbWeights w;
    w.dropout_rate = dropout_rate;
    w.ln_gamma = Parameter<S>(prefix + ".ln_gamma", Array<S>({C}, S(1)));
    w.ln_beta = Parameter<S>(prefix + ".ln_beta", Array<S>({C}, S(0)));

    rng::Counter rc(rng::mix(seed, 0x17b));
    auto uniform_init = [&rc](std::vector<std::size_t> shape, double bound) {
      Array<S> a(std::move(shape));
      for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<S>((rc.next_uniform() * 2.0 - 1.0) * bound);
      }
      return a;
    };
    w.dw_kernel = Parameter<S>(prefix + ".dw_kernel",
                               uniform_init({K, C}, 1.0 / std::sqrt(static_cast<double>(K))));
    const double wb = 1.0 / std::sqrt(static_cast<double>(C));
    w.pw_weight = Parameter<S>(prefix + ".pw_weight", uniform_init({C, C}, wb));
    w.pw_bias = Parameter<S>(prefix + ".pw_bias", Array<S>({C}, S(0)));
    w.gate_weight = Parameter<S>(prefix + ".gate_weight", uniform_init({C, C}, wb));
    w.gate_bias = Parameter<S>(prefix + ".gate_bias", Array<S>({C}, S(0)));
    w.decay = DecayParams<S>::init(prefix + ".rho", sharing, C, dt, level, stride, epsilon);
    return w;
  }

  void collect(std::vector<std::pair<std::string, Parameter<S>*>>& out) {
    out.emplace_back(ln_gamma.name, &ln_gamma);
    out.emplace_back(ln_beta.name, &ln_beta);
    out.emplace_back(dw_kernel.name, &dw_kernel);
    out.emplace_back(pw_weight.name, &pw_weight);
    out.emplace_back(pw_bias.name, &pw_bias);
    out.emplace_back(gate_weight.name, &gate_weight);
    out.emplace_back(gate_bias.name, &gate_bias);
    out.emplace_back(decay.rho.name, &decay.rho);
  }

  std::size_t param_count() const {
    const std::size_t C = channels(), K = kernel_size();
    return 2 * C + K * C + 2 * (C * C + C) + decay.count();
  }
};

// Parameters bound into a graph once per forward pass.
template <class S>
struct LptbVars {
  Var<S> ln_gamma, ln_beta, dw_kernel, pw_weight, pw_bias, gate_weight, gate_bias;
};

template <class S>
LptbVars<S> bind(Graph<S>& g, LptbWeights<S>& w) {
  return LptbVars<S>{g.leaf(w.ln_gamma),    g.leaf(w.ln_beta),  g.leaf(w.dw_kernel),
                     g.leaf(w.pw_weight),   g.leaf(w.pw_bias),  g.leaf(w.gate_weight),
                     g.leaf(w.gate_bias)};
}

// out = alpha (.) x + (1 - alpha) (.) s with alpha of one element (block
// shared) or C elements (per channel). No range restriction on alpha; the
// OdeEuler substep uses values outside (0,1) when the step is unstable.
template <class S>
Var<S> blend_channels(const Var<S>& x, const Var<S>& s, const Var<S>& alpha) {
  Graph<S>* g = require_same_graph(x, s);
  const Array<S>& xv = x.v();
  const Array<S>& sv = s.v();
  const Array<S>& av = alpha.v();
  if (!xv.same_shape(sv)) {
    throw ShapeError("blend_channels: x and s shapes differ: " + shape_str(xv.shape()) + " vs " +
                     shape_str(sv.shape()));
  }
  const std::size_t C = xv.cols();
  if (av.size() != 1 && av.size() != C) {
    throw ShapeError("blend_channels: alpha must be scalar or per-channel");
  }
  const bool as = av.size() == 1;
  Array<S> out(xv.shape());
  const std::size_t T = xv.size() / C;
  for (std::size_t t = 0; t < T; ++t) {
    const S* xr = xv.data() + t * C;
    const S* sr = sv.data() + t * C;
    S* orow = out.data() + t * C;
    for (std::size_t c = 0; c < C; ++c) {
      const S a = av[as ? 0 : c];
      // s + a*(x-s) rather than a*x + (1-a)*s: keeps the output inside
      // [min(x,s), max(x,s)] in floating point, and exact when x == s.
      orow[c] = sr[c] + a * (xr[c] - sr[c]);
    }
  }
  ensure_finite(out, "blend_channels");
  Var<S> r = ops::detail::make_var(g, std::move(out));
  if (g->recording() && (x.tracked() || s.tracked() || alpha.tracked())) {
    r.node = g->record(r.v().shape(), [ix = x.node, is = s.node, ia = alpha.node, vx = x.value,
                                       vs = s.value, va = alpha.value, C, T,
                                       as](Graph<S>& gg, const Array<S>& up) {
      Array<S>* gx = ix >= 0 ? &gg.grad(ix) : nullptr;
      Array<S>* gs = is >= 0 ? &gg.grad(is) : nullptr;
      Array<S>* ga = ia >= 0 ? &gg.grad(ia) : nullptr;
      for (std::size_t t = 0; t < T; ++t) {
        const S* ur = up.data() + t * C;
        for (std::size_t c = 0; c < C; ++c) {
          const S a = (*va)[as ? 0 : c];
          const std::size_t i = t * C + c;
          if (gx) (*gx)[i] += a * ur[c];
          if (gs) (*gs)[i] += (S(1) - a) * ur[c];
          if (ga) (*ga)[as ? 0 : c] += ur[c] * ((*vx)[i] - (*vs)[i]);
        }
      }
    });
  }
  return r;
}

// The relaxation update out = alpha x + (1-alpha) s. alpha outside (0,1)
// signals a decay parameterization bug and is rejected.
template <class S>
Var<S> parallel_relax(const Var<S>& x, const Var<S>& s, const Var<S>& alpha) {
  for (const S a : alpha.v().values()) {
    if (!(a > S(0) && a < S(1))) {
      throw NumericalError("parallel_relax: alpha outside (0,1): " +
                           std::to_string(static_cast<double>(a)));
    }
  }
  return blend_channels(x, s, alpha);
}

// Gated stimulus over the whole sequence (Parallel backend path). The layer
// norm is computed once and shared by the mixing and gating branches.
template <class S>
Var<S> stimulus(Graph<S>& g, const Var<S>& x, LptbWeights<S>& w, bool training,
                std::uint64_t seed) {
  LptbVars<S> p = bind(g, w);
  Var<S> xh = ops::layer_norm(x, p.ln_gamma, p.ln_beta, static_cast<S>(kLayerNormEps));
  Var<S> mix = ops::dropout(
      ops::linear_per_timestep(ops::conv1d_depthwise(xh, p.dw_kernel), p.pw_weight, p.pw_bias),
      w.dropout_rate, seed, training);
  Var<S> gate = ops::sigmoid(ops::linear_per_timestep(xh, p.gate_weight, p.gate_bias));
  return ops::mul(mix, gate);
}

namespace detail {

// Stimulus at a single timestep, evaluated from scratch the way a step-by-step
// recurrent cell computes its input transformation: gather the depthwise
// window around t, normalize each row, convolve, project, gate.
template <class S>
Var<S> stimulus_row(Graph<S>& g, const Var<S>& x, const LptbVars<S>& p, double dropout_rate,
                    std::size_t t, bool training, std::uint64_t seed) {
  const std::size_t T = x.v().rows(), C = x.v().cols();
  const std::size_t K = p.dw_kernel.v().rows();
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(K / 2);
  std::vector<Var<S>> win;
  win.reserve(K);
  Var<S> ln_center;
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(K); ++k) {
    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + k - H;
    if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) {
      win.push_back(g.constant(Array<S>({std::size_t{1}, C})));
    } else {
      Var<S> row =
          ops::layer_norm(ops::slice_rows(x, static_cast<std::size_t>(src),
                                          static_cast<std::size_t>(src) + 1),
                          p.ln_gamma, p.ln_beta, static_cast<S>(kLayerNormEps));
      if (src == static_cast<std::ptrdiff_t>(t)) ln_center = row;
      win.push_back(row);
    }
  }
  Var<S> window = ops::stack_rows(win);
  Var<S> dw = ops::depthwise_window(window, p.dw_kernel);
  Var<S> mix = ops::dropout(ops::linear_per_timestep(dw, p.pw_weight, p.pw_bias), dropout_rate,
                            rng::mix(seed, t), training);
  Var<S> gate = ops::sigmoid(ops::linear_per_timestep(ln_center, p.gate_weight, p.gate_bias));
  return ops::mul(mix, gate);
}

}  // namespace detail

// Full block forward. Parallel: out = parallel_relax(x, stimulus(x), alpha).
// CfcSequential: state_0 = x_0, state_t = alpha state_{t-1} + (1-alpha) h_{t-1}
// with h the stimulus of the input sequence, evaluated one step at a time.
// OdeEuler: explicit Euler on dx/dt = -lambda (x - h_t), `substeps` steps per
// token interval; converges to the CfcSequential update as substeps grows.
template <class S>
Var<S> lptb_forward(Graph<S>& g, const Var<S>& x, LptbWeights<S>& w, int level, int stride,
                    const Backend& backend, bool training, std::uint64_t seed) {
  const std::size_t T = x.v().rows();
  const std::size_t C = x.v().cols();
  if (T == 0) throw ShapeError("lptb_forward: empty sequence");
  if (C != w.channels()) {
    throw ShapeError("lptb_forward: input channels " + std::to_string(C) +
                     " != block channels " + std::to_string(w.channels()));
  }
  auto [lambda, alpha] = decay_coefficients(g, w.decay, level, stride);

  if (backend.kind == BackendKind::Parallel) {
    Var<S> s = stimulus(g, x, w, training, seed);
    return parallel_relax(x, s, alpha);
  }

  // Sequential reference backends.
  LptbVars<S> p = bind(g, w);
  Var<S> alpha_step = alpha;
  int substeps = 1;
  if (backend.kind == BackendKind::OdeEuler) {
    substeps = backend.substeps;
    if (substeps < 1) throw ShapeError("lptb_forward: OdeEuler substeps must be >= 1");
    const double dt_eff = w.decay.dt.effective_dt(level, stride);
    alpha_step = ops::add_scalar(
        ops::mul_scalar(lambda, static_cast<S>(-dt_eff / static_cast<double>(substeps))), S(1));
  }

  std::vector<Var<S>> outs;
  outs.reserve(T);
  Var<S> state = ops::slice_rows(x, 0, 1);
  outs.push_back(state);
  for (std::size_t t = 1; t < T; ++t) {
    Var<S> h = detail::stimulus_row(g, x, p, w.dropout_rate, t - 1, training, seed);
    if (backend.kind == BackendKind::CfcSequential) {
      state = parallel_relax(state, h, alpha);
    } else {
      for (int ss = 0; ss < substeps; ++ss) state = blend_channels(state, h, alpha_step);
    }
    outs.push_back(state);
  }
  return ops::stack_rows(outs);
}

// Analytic multiply-accumulate count of one Parallel-backend block forward:
//   layer norm            4*T*C   (mean, variance, normalize, affine)
//   depthwise conv        T*C*K
//   pointwise projection  T*C*(C+1)
//   gate projection       T*C*(C+1)
//   sigmoid               T*C
//   stimulus gating       T*C
//   relaxation blend      2*T*C
// Every term is per-token; the per-block decay scalars are excluded, so the
// count is exactly linear in T.
inline std::uint64_t lptb_flops(std::uint64_t T, std::uint64_t C, std::uint64_t K) {
  return T * C * (2 * C + K + 10);
}

}  // namespace lqt
