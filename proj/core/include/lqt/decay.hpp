#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "lqt/graph.hpp"
#include "lqt/ops.hpp"

namespace lqt {

// How the learnable decay rate is shared within a block: one scalar for the
// whole block, or one value per channel.
enum class DecaySharingMode { BlockShared, PerChannel };

inline const char* to_string(DecaySharingMode m) {
  return m == DecaySharingMode::BlockShared ? "block_shared" : "per_channel";
}

// Structural time step policy. base_dt is the physical seconds represented by
// one token at pyramid level 0; with align_pyramid the step is scaled by the
// cumulative downsampling stride of the level.
struct DtPolicy {
  double base_dt = 4.0 / 30.0;
  bool align_pyramid = false;

  double effective_dt(int level, int stride) const {
    if (!align_pyramid) return base_dt;
    double dt = base_dt;
    for (int l = 0; l < level; ++l) dt *= static_cast<double>(stride);
    return dt;
  }
};

// Learnable decay parameterization of one block:
//   lambda = softplus(rho) + epsilon  (inverse time constant, always positive)
//   alpha  = exp(-lambda * dt)        (retention coefficient, in (0,1))
template <class S>
struct DecayParams {
  Parameter<S> rho;  // shape {1} (BlockShared) or {C} (PerChannel)
  double epsilon = 1e-3;
  DecaySharingMode sharing = DecaySharingMode::BlockShared;
  DtPolicy dt;

  std::size_t count() const { return rho.size(); }

  // rho0 solves softplus(rho0) = ln(2)/dt so that the initial retention is
  // close to one half at this block's own effective time step.
  static DecayParams init(const std::string& name, DecaySharingMode sharing, std::size_t channels,
                          DtPolicy dt, int level, int stride, double epsilon = 1e-3) {
    const double dt_eff = dt.effective_dt(level, stride);
    if (dt_eff <= 0.0) throw ShapeError("DecayParams: effective dt must be positive");
    const double rho0 = std::log(std::expm1(std::log(2.0) / dt_eff));
    DecayParams out;
    out.sharing = sharing;
    out.epsilon = epsilon;
    out.dt = dt;
    const std::size_t n = sharing == DecaySharingMode::BlockShared ? 1 : channels;
    out.rho = Parameter<S>(name, Array<S>({n}, static_cast<S>(rho0)));
    return out;
  }
};

// (lambda, alpha) for a block at the given pyramid level, differentiable with
// respect to rho.
template <class S>
std::pair<Var<S>, Var<S>> decay_coefficients(Graph<S>& g, DecayParams<S>& decay, int level,
                                             int stride) {
  const double dt_eff = decay.dt.effective_dt(level, stride);
  if (dt_eff <= 0.0) {
    throw ShapeError("decay_coefficients: non-positive effective dt");
  }
  Var<S> rho = g.leaf(decay.rho);
  Var<S> lambda = ops::add_scalar(ops::softplus(rho), static_cast<S>(decay.epsilon));
  Var<S> alpha = ops::exp(ops::mul_scalar(lambda, static_cast<S>(-dt_eff)));
  return {lambda, alpha};
}

}  // namespace lqt
