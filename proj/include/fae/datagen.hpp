#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fae/losses.hpp"
#include "fae/mesh.hpp"
#include "fae/rng.hpp"

namespace fae {

// Potential landscape for overdamped Langevin paths du = b(u)dt + sqrt(eps)dW
// with b = -grad U. The 2-d variant is a quadratic bowl plus a
// symmetry-breaking linear term, minus a set of Gaussian wells.
struct PotentialSpec {
  DriftKind kind = DriftKind::kDoubleWell;
  Mat centres;            // 2 x wells
  Eigen::VectorXd sigma;  // per-well standard deviation, > 0
  Eigen::VectorXd mass;   // per-well mass, > 0
  double outer_scale = 0.3;

  // Quartic with a local minimum at -1 (U = 1) and the global one at +1 (U = -7).
  static PotentialSpec double_well();
  // Six wells near the origin, four wide and two narrow.
  static PotentialSpec multiwell2d();

  int dim() const;
  void validate() const;  // throws std::invalid_argument
};

double potential_value(const PotentialSpec& pot, const Eigen::VectorXd& x);
Eigen::VectorXd drift(const PotentialSpec& pot, const Eigen::VectorXd& x);

// In-place drift so the integrator allocates nothing per step.
using DriftFn = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Euler-Maruyama on the internal mesh t_i = i*dt, i = 0..T/dt:
// u_{i+1} = u_i + b(u_i)dt + sqrt(eps*dt)*xi_i with per-channel standard
// normals. dt must divide T; a non-finite state throws std::runtime_error
// naming the step.
PointCloudFunction simulate_path(const Eigen::VectorXd& u0, double T, double eps, double dt,
                                 const DriftFn& b, Rng& rng);
PointCloudFunction simulate_sde(const SDEConfig& cfg, const PotentialSpec& pot, double dt,
                                Rng& rng);

// n_paths independent paths on substream(path index) of `seed`, each thinned
// to every keep_every-th internal point and then randomly dropped to a
// (1 - drop_ratio) fraction; the initial point always survives.
std::vector<PointCloudFunction> gen_sde_dataset(const SDEConfig& cfg, const PotentialSpec& pot,
                                                double dt, int keep_every, double drop_ratio,
                                                int n_paths, std::uint64_t seed);

// One discretised point mass per mesh point of {(i+1)/(I+1)}: sample j is zero
// except for the value I+1 at point j, giving unit discrete L1 mass.
std::vector<PointCloudFunction> gen_dirac_dataset(int resolution);

// Gaussian random field on [0,1]^2 in the zero-Neumann cosine basis
// (constant mode included), with spectral multipliers
// scale * (pi^2 (k^2 + l^2) + tau_sq)^(-alpha) truncated at `modes` indices
// per axis.
struct GRFSpec {
  double tau_sq = 9.0;
  double alpha = 2.0;
  int modes = 32;
  double scale = 1.0;

  void validate() const;  // throws std::invalid_argument
};

double grf_multiplier(const GRFSpec& spec, int k, int l);
// modes x modes standard normals; row = x mode, column = y mode, row-major draw order.
Mat grf_modal_coeffs(const GRFSpec& spec, Rng& rng);
// Field values (1 x n) at coords (2 x n); linear in the coefficients.
Mat grf_field_from_coeffs(const GRFSpec& spec, const Mat& xi, const Mat& coords);
Mat grf_sample(const GRFSpec& spec, const Mat& coords, Rng& rng);

// Two-level permeability: 3 where the field is negative, 12 where it is >= 0.
Mat darcy_permeability(const Mat& field);

// Pressure problem -div(k grad p) = forcing on the unit square, p = 0 on the
// boundary, on an n x n grid of cell centres (x fastest).
struct DarcyProblem {
  int n = 47;
  Eigen::VectorXd k;  // n*n strictly positive cell values
  double forcing = 1.0;

  void validate() const;  // throws std::invalid_argument
};

Mat darcy_grid(int n);  // 2 x n^2 cell-centre coords, x fastest

// Action of the five-point flux operator with harmonic-mean face
// permeabilities and half-cell Dirichlet boundary closure.
Eigen::VectorXd darcy_apply(const DarcyProblem& problem, const Eigen::VectorXd& p);

// Conjugate gradients to relative residual <= cg_tol (verified on the true
// residual); throws std::runtime_error if cg_maxiter does not get there.
Eigen::VectorXd darcy_solve(const DarcyProblem& problem, double cg_tol, int cg_maxiter);

// Bilinear interpolation of cell-centre values at (x, y), clamped to the grid.
double grid_interpolate(int n, const Eigen::VectorXd& values, double x, double y);

struct DarcySample {
  PointCloudFunction permeability;
  PointCloudFunction pressure;
};

// Thresholded random field -> permeability -> pressure, all on darcy_grid(n).
DarcySample gen_darcy_sample(const GRFSpec& spec, int n, Rng& rng, double cg_tol = 1e-10,
                             int cg_maxiter = 10000);

}  // namespace fae
