#include "fae/gelu.hpp"

namespace fae {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;
}

PhiTable::PhiTable() {
  for (int i = 0; i <= kN + 1; ++i) {
    double t = i * kStep;
    f_[i] = phi_cdf_reference(t);
    d_[i] = kInvSqrt2Pi * std::exp(-0.5 * t * t);
  }
}

const PhiTable& PhiTable::instance() {
  static const PhiTable table;
  return table;
}

void PhiTable::eval(double x, double& cdf, double& pdf, double& dpdf) const {
  double a = std::fabs(x);
  if (a >= kCut) {
    cdf = x > 0 ? 1.0 : 0.0;
    pdf = 0.0;
    dpdf = 0.0;
    return;
  }
  double u = a * (1.0 / kStep);
  int j = static_cast<int>(u);
  double t = u - j;
  double f0 = f_[j], f1 = f_[j + 1];
  double g0 = d_[j] * kStep, g1 = d_[j + 1] * kStep;  // slopes scaled to unit interval
  // Hermite basis and its exact first/second derivatives in t.
  double t2 = t * t, t3 = t2 * t;
  double v = f0 * (2 * t3 - 3 * t2 + 1) + g0 * (t3 - 2 * t2 + t) +
             f1 * (-2 * t3 + 3 * t2) + g1 * (t3 - t2);
  double dv = f0 * (6 * t2 - 6 * t) + g0 * (3 * t2 - 4 * t + 1) +
              f1 * (-6 * t2 + 6 * t) + g1 * (3 * t2 - 2 * t);
  double ddv = f0 * (12 * t - 6) + g0 * (6 * t - 4) + f1 * (-12 * t + 6) + g1 * (6 * t - 2);
  // Mirror to negative x: Φ(-a) = 1 - Φ(a), Φ'(-a) = Φ'(a), Φ''(-a) = -Φ''(a).
  if (x >= 0) {
    cdf = v;
    pdf = dv * (1.0 / kStep);
    dpdf = ddv * (1.0 / (kStep * kStep));
  } else {
    cdf = 1.0 - v;
    pdf = dv * (1.0 / kStep);
    dpdf = -ddv * (1.0 / (kStep * kStep));
  }
}

}  // namespace fae
