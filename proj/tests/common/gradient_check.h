#pragma once

// Central-difference gradient oracle. Wholly independent of the tape's
// backward pass: the loss closure rebuilds the computation from scratch for
// every perturbed evaluation.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mhal/tape.h"

namespace testutil {

inline double rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
}

struct GradCheck {
  double max_err = 0.0;
  std::string worst;  // "name[i]" of the worst entry
};

// `loss` evaluates the scalar objective at the parameters' current values;
// `grads` fills every parameter's grad analytically (zeroing first).
inline GradCheck check_gradients(const std::vector<mhal::Parameter*>& params,
                                 const std::function<double()>& loss,
                                 const std::function<void()>& grads, double step = 1e-5) {
  grads();
  GradCheck result;
  for (mhal::Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + step;
      const double hi = loss();
      p->value.data[i] = saved - step;
      const double lo = loss();
      p->value.data[i] = saved;
      const double numeric = (hi - lo) / (2.0 * step);
      const double err = rel_err(p->value.grad[i], numeric);
      if (err > result.max_err) {
        result.max_err = err;
        result.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

inline mhal::Tensor random_tensor(mhal::Shape shape, mhal::Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
  mhal::Tensor t(std::move(shape));
  for (double& v : t.data) v = mhal::uniform(rng, lo, hi);
  return t;
}

}  // namespace testutil
