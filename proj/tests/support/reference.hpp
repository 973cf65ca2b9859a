#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lqt/lptb.hpp"

// Independent scalar reference for the relaxation block: one timestep at a
// time, plain double loops, no engine code on the compute path. Used as the
// vectorization oracle for the Parallel backend.

namespace lqt::test {

struct NaiveLptb {
  std::size_t C = 0, K = 0;
  std::vector<double> ln_gamma, ln_beta;  // C
  std::vector<double> dw;                 // K*C
  std::vector<double> pw_w, pw_b;         // C*C, C
  std::vector<double> gate_w, gate_b;     // C*C, C
  std::vector<double> rho;                // 1 or C
  double epsilon = 1e-3;
  double eps_ln = 1e-5;
  double dt = 4.0 / 30.0;
};

inline NaiveLptb naive_from(const LptbWeights<double>& w, int level, int stride) {
  NaiveLptb n;
  n.C = w.channels();
  n.K = w.kernel_size();
  n.ln_gamma = w.ln_gamma.value.values();
  n.ln_beta = w.ln_beta.value.values();
  n.dw = w.dw_kernel.value.values();
  n.pw_w = w.pw_weight.value.values();
  n.pw_b = w.pw_bias.value.values();
  n.gate_w = w.gate_weight.value.values();
  n.gate_b = w.gate_bias.value.values();
  n.rho = w.decay.rho.value.values();
  n.epsilon = w.decay.epsilon;
  n.eps_ln = kLayerNormEps;
  n.dt = w.decay.dt.effective_dt(level, stride);
  return n;
}

inline double naive_alpha(const NaiveLptb& n, std::size_t c) {
  const double rho = n.rho.size() == 1 ? n.rho[0] : n.rho[c];
  const double lambda = std::log1p(std::exp(rho)) + n.epsilon;
  return std::exp(-lambda * n.dt);
}

// Normalized row at timestep t (C values).
inline std::vector<double> naive_ln_row(const NaiveLptb& n, const std::vector<double>& x,
                                        std::size_t T, std::size_t t) {
  (void)T;
  std::vector<double> out(n.C);
  double mean = 0.0;
  for (std::size_t c = 0; c < n.C; ++c) mean += x[t * n.C + c];
  mean /= static_cast<double>(n.C);
  double var = 0.0;
  for (std::size_t c = 0; c < n.C; ++c) {
    const double d = x[t * n.C + c] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n.C);
  for (std::size_t c = 0; c < n.C; ++c) {
    out[c] = n.ln_gamma[c] * (x[t * n.C + c] - mean) / std::sqrt(var + n.eps_ln) + n.ln_beta[c];
  }
  return out;
}

// out_t = alpha * x_t + (1 - alpha) * (mix_t (.) g_t), computed independently
// for each timestep with scalar loops (dropout off).
inline std::vector<double> naive_lptb_parallel(const NaiveLptb& n, const std::vector<double>& x,
                                               std::size_t T) {
  std::vector<double> out(T * n.C, 0.0);
  // Pre-normalize every row the same way the independent per-step math would.
  std::vector<std::vector<double>> ln(T);
  for (std::size_t t = 0; t < T; ++t) ln[t] = naive_ln_row(n, x, T, t);

  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(n.K / 2);
  for (std::size_t t = 0; t < T; ++t) {
    // depthwise over the window
    std::vector<double> dwv(n.C, 0.0);
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n.K); ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + k - H;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      for (std::size_t c = 0; c < n.C; ++c) {
        dwv[c] += n.dw[static_cast<std::size_t>(k) * n.C + c] * ln[static_cast<std::size_t>(src)][c];
      }
    }
    for (std::size_t cout = 0; cout < n.C; ++cout) {
      double mix = n.pw_b[cout];
      double gz = n.gate_b[cout];
      for (std::size_t cin = 0; cin < n.C; ++cin) {
        mix += dwv[cin] * n.pw_w[cin * n.C + cout];
        gz += ln[t][cin] * n.gate_w[cin * n.C + cout];
      }
      const double gate = 1.0 / (1.0 + std::exp(-gz));
      const double a = naive_alpha(n, cout);
      out[t * n.C + cout] = a * x[t * n.C + cout] + (1.0 - a) * (mix * gate);
    }
  }
  return out;
}

}  // namespace lqt::test
