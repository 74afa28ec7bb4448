#pragma once

#include <cmath>

namespace fae {

// GELU in the exact Gaussian-CDF form x·Φ(x). Φ is evaluated from a cubic-Hermite
// table (node values Φ, node slopes φ); the first and second derivatives used by
// the backward pass are the EXACT derivatives of the interpolant, so analytic
// gradients and finite differences of the implemented forward agree to rounding.
// Table accuracy vs the erf-based Φ: max abs error < 1e-12 (verified in tests).
class PhiTable {
 public:
  static const PhiTable& instance();

  // Φ, Φ', Φ'' of the interpolant at x (Φ'' is piecewise linear).
  void eval(double x, double& cdf, double& pdf, double& dpdf) const;

  double cdf(double x) const {
    double c, p, dp;
    eval(x, c, p, dp);
    return c;
  }

  static constexpr double kCut = 8.9;   // Φ(±kCut) indistinguishable from 0/1 at 1e-12
  static constexpr double kStep = 0.004;
  static constexpr int kN = 2226;       // intervals on [0, kCut]

 private:
  PhiTable();
  double f_[kN + 2];  // Φ at nodes i·kStep
  double d_[kN + 2];  // φ at nodes (slope data)
};

struct GeluOut {
  double y;    // gelu(x)
  double dy;   // gelu'(x)
  double ddy;  // gelu''(x)
};

inline GeluOut gelu_full(double x) {
  double c, p, dp;
  PhiTable::instance().eval(x, c, p, dp);
  return {x * c, c + x * p, 2.0 * p + x * dp};
}

inline double gelu(double x) { return x * PhiTable::instance().cdf(x); }

// Reference Φ via erfc; the accuracy oracle for the table.
inline double phi_cdf_reference(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244008443621048);
}

}  // namespace fae
