#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fae/params.hpp"

namespace fae {

// One loss evaluation: scalar value plus analytic gradients per parameter store.
struct LossEval {
  double value = 0.0;
  std::vector<std::vector<double>> grads;
};

// Central-finite-difference check of an analytic gradient.
//
// `loss` must evaluate the loss (and its gradients) at the CURRENT contents of
// `stores`; the check perturbs each coordinate by ±step in place and restores
// it. Returns max over coordinates of |analytic − fd| / max(1, |analytic|).
inline double fd_gradient_check(const std::function<LossEval()>& loss,
                                std::vector<ParamStore*> stores, double step) {
  if (step <= 0.0) throw std::invalid_argument("fd_gradient_check: step must be positive");
  LossEval base = loss();
  if (!std::isfinite(base.value))
    throw std::runtime_error("fd_gradient_check: non-finite loss at base point");
  if (base.grads.size() != stores.size())
    throw std::invalid_argument("fd_gradient_check: gradient count != store count");
  double worst = 0.0;
  for (std::size_t s = 0; s < stores.size(); ++s) {
    std::vector<double>& flat = stores[s]->flat;
    if (base.grads[s].size() != flat.size())
      throw std::invalid_argument("fd_gradient_check: gradient length mismatch");
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double keep = flat[i];
      flat[i] = keep + step;
      const double up = loss().value;
      flat[i] = keep - step;
      const double dn = loss().value;
      flat[i] = keep;
      if (!std::isfinite(up) || !std::isfinite(dn))
        throw std::runtime_error("fd_gradient_check: non-finite loss during perturbation");
      const double fd = (up - dn) / (2.0 * step);
      const double analytic = base.grads[s][i];
      const double err = std::fabs(analytic - fd) / std::max(1.0, std::fabs(analytic));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

// One row of the standard gradient audit: a loss family name and the worst
// relative disagreement between the tape gradient and central differences.
struct GradcheckRow {
  std::string family;
  double max_rel_err = 0.0;
};

// FD-checks every loss family (vae_gaussian, sde, bip, whitenoise, fae) on
// small randomly-initialised models; deterministic in the seed.
std::vector<GradcheckRow> gradcheck_losses(std::uint64_t seed);

// Worst relative error of the decoder's analytic time derivative against
// central differences in t.
double gradcheck_time_derivative(std::uint64_t seed);

}  // namespace fae
