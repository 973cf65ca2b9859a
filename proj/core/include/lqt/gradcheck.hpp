#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lqt/graph.hpp"

// Central finite-difference verification of reverse-mode gradients. Always run
// in 64-bit; the analytic pass replays the tape, the numeric pass re-evaluates
// the forward function, so the two routes stay independent.

namespace lqt {

struct GradcheckEntry {
  std::string param;
  double max_rel = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> groups;
  double max_rel = 0.0;

  bool passed(double tol) const { return max_rel <= tol; }
};

// build must construct the scalar loss from scratch on each call (same seeds,
// same data) so perturbed evaluations see an identical computation.
inline GradcheckReport gradcheck(const std::vector<Parameter<double>*>& params,
                                 const std::function<Var<double>(Graph<double>&)>& build,
                                 double h = 1e-5, double denom_floor = 1e-8) {
  for (Parameter<double>* p : params) p->zero_grad();
  {
    Graph<double> g(true);
    Var<double> loss = build(g);
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter<double>* p : params) analytic.push_back(p->gradient.values());

  auto eval = [&build]() {
    Graph<double> g(false);
    return scalar_value(build(g));
  };

  GradcheckReport rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>* p = params[pi];
    GradcheckEntry entry;
    entry.param = p->name;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double fp = eval();
      p->value[i] = orig - h;
      const double fm = eval();
      p->value[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[pi][i];
      const double rel = std::abs(an - fd) / std::max({denom_floor, std::abs(an), std::abs(fd)});
      if (rel > entry.max_rel) {
        entry.max_rel = rel;
        entry.worst_index = i;
        entry.analytic = an;
        entry.numeric = fd;
      }
    }
    rep.max_rel = std::max(rep.max_rel, entry.max_rel);
    rep.groups.push_back(std::move(entry));
  }
  return rep;
}

}  // namespace lqt
