#include "fae/datagen.hpp"

#include <Eigen/Sparse>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fae {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kTwoPi = 2.0 * kPi;

// Density of N(c, sigma^2 I_2) at x.
double gauss2(const Eigen::VectorXd& x, const Eigen::VectorXd& c, double sigma) {
  const double r2 = (x - c).squaredNorm();
  return std::exp(-0.5 * r2 / (sigma * sigma)) / (kTwoPi * sigma * sigma);
}

Eigen::SparseMatrix<double> darcy_matrix(const DarcyProblem& pr) {
  const int n = pr.n;
  auto idx = [n](int ix, int iy) { return iy * n + ix; };
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5) * n * n);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const int i = idx(ix, iy);
      const double ki = pr.k(i);
      double diag = 0.0;
      const int nbx[4] = {ix - 1, ix + 1, ix, ix};
      const int nby[4] = {iy, iy, iy - 1, iy + 1};
      for (int f = 0; f < 4; ++f) {
        if (nbx[f] >= 0 && nbx[f] < n && nby[f] >= 0 && nby[f] < n) {
          const double kj = pr.k(idx(nbx[f], nby[f]));
          const double t = 2.0 * ki * kj / (ki + kj);
          trip.emplace_back(i, idx(nbx[f], nby[f]), -t);
          diag += t;
        } else {
          // Dirichlet value sits half a cell beyond the last centre.
          diag += 2.0 * ki;
        }
      }
      trip.emplace_back(i, i, diag);
    }
  }
  Eigen::SparseMatrix<double> a(n * n, n * n);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

}  // namespace

PotentialSpec PotentialSpec::double_well() {
  PotentialSpec p;
  p.kind = DriftKind::kDoubleWell;
  return p;
}

PotentialSpec PotentialSpec::multiwell2d() {
  PotentialSpec p;
  p.kind = DriftKind::kMultiwell2d;
  p.centres.resize(2, 6);
  p.centres << 0.0, 0.2, -0.2, 0.2, 0.0, -0.2,
               0.0, 0.2, -0.2, -0.2, 0.2, 0.0;
  p.sigma.resize(6);
  p.sigma << 0.1, 0.1, 0.1, 0.1, 0.03, 0.03;
  p.mass.resize(6);
  p.mass << 0.1, 0.1, 0.1, 0.1, 0.01, 0.01;
  p.outer_scale = 0.3;
  return p;
}

int PotentialSpec::dim() const { return kind == DriftKind::kDoubleWell ? 1 : 2; }

void PotentialSpec::validate() const {
  if (kind == DriftKind::kDoubleWell) return;
  if (kind != DriftKind::kMultiwell2d)
    throw std::invalid_argument("potential: no closed-form landscape for this drift kind");
  const int wells = static_cast<int>(centres.cols());
  if (centres.rows() != 2 || wells < 1)
    throw std::invalid_argument("potential: centres must be 2 x wells");
  if (sigma.size() != wells || mass.size() != wells)
    throw std::invalid_argument("potential: one sigma and one mass per well");
  if ((sigma.array() <= 0.0).any() || (mass.array() <= 0.0).any())
    throw std::invalid_argument("potential: sigmas and masses must be positive");
  if (!(outer_scale > 0.0)) throw std::invalid_argument("potential: outer scale must be positive");
}

double potential_value(const PotentialSpec& pot, const Eigen::VectorXd& x) {
  pot.validate();
  if (x.size() != pot.dim()) throw std::invalid_argument("potential: input dimension mismatch");
  if (pot.kind == DriftKind::kDoubleWell) {
    const double t = x(0);
    return ((3.0 * t + 2.0) * t - 6.0) * t * t - 6.0 * t;
  }
  double wells = 0.0;
  for (int i = 0; i < pot.centres.cols(); ++i)
    wells += pot.mass(i) * gauss2(x, pot.centres.col(i), pot.sigma(i));
  return pot.outer_scale * (0.5 * (x(0) + x(1)) + x.squaredNorm() - wells);
}

Eigen::VectorXd drift(const PotentialSpec& pot, const Eigen::VectorXd& x) {
  pot.validate();
  if (x.size() != pot.dim()) throw std::invalid_argument("drift: input dimension mismatch");
  Eigen::VectorXd b(x.size());
  if (pot.kind == DriftKind::kDoubleWell) {
    const double t = x(0);
    b(0) = -(((12.0 * t + 6.0) * t - 12.0) * t - 6.0);
    return b;
  }
  Eigen::VectorXd grad = Eigen::VectorXd::Constant(2, 0.5) + 2.0 * x;
  for (int i = 0; i < pot.centres.cols(); ++i) {
    const double s2 = pot.sigma(i) * pot.sigma(i);
    grad += pot.mass(i) * gauss2(x, pot.centres.col(i), pot.sigma(i)) / s2 *
            (x - pot.centres.col(i));
  }
  return -pot.outer_scale * grad;
}

PointCloudFunction simulate_path(const Eigen::VectorXd& u0, double T, double eps, double dt,
                                 const DriftFn& b, Rng& rng) {
  if (!(T > 0.0) || !(dt > 0.0))
    throw std::invalid_argument("simulate_path: horizon and step must be positive");
  if (eps < 0.0) throw std::invalid_argument("simulate_path: noise level must be nonnegative");
  if (u0.size() < 1) throw std::invalid_argument("simulate_path: empty initial state");
  const long long n_steps = round_half_away(T / dt);
  if (n_steps < 1 || std::abs(n_steps * dt - T) > 1e-9 * T)
    throw std::invalid_argument("simulate_path: internal step must divide the horizon");

  const int m = static_cast<int>(u0.size());
  PointCloudFunction path;
  path.coords.resize(1, n_steps + 1);
  path.values.resize(m, n_steps + 1);
  path.coords(0, 0) = 0.0;
  path.values.col(0) = u0;

  Eigen::VectorXd u = u0;
  Eigen::VectorXd bu(m);
  const double noise = std::sqrt(eps * dt);
  for (long long i = 1; i <= n_steps; ++i) {
    b(u, bu);
    for (int r = 0; r < m; ++r) u(r) += bu(r) * dt + noise * rng.next_gaussian();
    if (!u.allFinite())
      throw std::runtime_error("simulate_path: state not finite at step " + std::to_string(i));
    path.coords(0, i) = i * dt;
    path.values.col(i) = u;
  }
  path.domain.lo = Eigen::VectorXd::Zero(1);
  path.domain.hi = Eigen::VectorXd::Constant(1, n_steps * dt);
  path.domain.periodic = {0};
  path.validate();
  return path;
}

PointCloudFunction simulate_sde(const SDEConfig& cfg, const PotentialSpec& pot, double dt,
                                Rng& rng) {
  pot.validate();
  cfg.validate(pot.dim());
  if (cfg.drift != pot.kind)
    throw std::invalid_argument("simulate_sde: config and potential disagree on the drift kind");
  // Allocation-free per-step drifts; the generic drift() path validates on
  // every call, which is too slow inside the integrator.
  DriftFn b;
  if (pot.kind == DriftKind::kDoubleWell) {
    b = [](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
      const double t = x(0);
      out(0) = -(((12.0 * t + 6.0) * t - 12.0) * t - 6.0);
    };
  } else {
    b = [pot](const Eigen::VectorXd& x, Eigen::VectorXd& out) {
      double g0 = 0.5 + 2.0 * x(0);
      double g1 = 0.5 + 2.0 * x(1);
      for (int i = 0; i < pot.centres.cols(); ++i) {
        const double s2 = pot.sigma(i) * pot.sigma(i);
        const double d0 = x(0) - pot.centres(0, i);
        const double d1 = x(1) - pot.centres(1, i);
        const double dens = std::exp(-0.5 * (d0 * d0 + d1 * d1) / s2) / (kTwoPi * s2);
        g0 += pot.mass(i) * dens / s2 * d0;
        g1 += pot.mass(i) * dens / s2 * d1;
      }
      out(0) = -pot.outer_scale * g0;
      out(1) = -pot.outer_scale * g1;
    };
  }
  return simulate_path(cfg.u0, cfg.T, cfg.eps, dt, b, rng);
}

std::vector<PointCloudFunction> gen_sde_dataset(const SDEConfig& cfg, const PotentialSpec& pot,
                                                double dt, int keep_every, double drop_ratio,
                                                int n_paths, std::uint64_t seed) {
  if (n_paths < 1) throw std::invalid_argument("gen_sde_dataset: need at least one path");
  std::vector<PointCloudFunction> out;
  out.reserve(n_paths);
  Rng base(seed);
  for (int i = 0; i < n_paths; ++i) {
    Rng stream = base.substream(i);
    PointCloudFunction path = simulate_sde(cfg, pot, dt, stream);
    out.push_back(subsample_drop(path, keep_every, drop_ratio, stream));
  }
  return out;
}

std::vector<PointCloudFunction> gen_dirac_dataset(int resolution) {
  if (resolution < 2) throw std::invalid_argument("gen_dirac_dataset: resolution must be >= 2");
  const double dx = 1.0 / (resolution + 1);
  Mat coords(1, resolution);
  for (int i = 0; i < resolution; ++i) coords(0, i) = (i + 1) * dx;
  std::vector<PointCloudFunction> out;
  out.reserve(resolution);
  for (int j = 0; j < resolution; ++j) {
    PointCloudFunction c;
    c.coords = coords;
    c.values = Mat::Zero(1, resolution);
    c.values(0, j) = resolution + 1;
    c.domain = Domain::unit_box(1);
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

void GRFSpec::validate() const {
  if (modes < 1) throw std::invalid_argument("grf: need at least one mode per axis");
  if (!(scale > 0.0)) throw std::invalid_argument("grf: scale must be positive");
  if (tau_sq < 0.0) throw std::invalid_argument("grf: shift must be nonnegative");
  if (!(alpha > 1.0))
    throw std::invalid_argument("grf: covariance must be trace class (alpha > 1 in 2-d)");
  if (!(tau_sq > 0.0))
    throw std::invalid_argument("grf: zero shift makes the constant-mode multiplier infinite");
}

double grf_multiplier(const GRFSpec& spec, int k, int l) {
  return spec.scale * std::pow(kPi * kPi * (static_cast<double>(k) * k + static_cast<double>(l) * l) +
                                   spec.tau_sq,
                               -spec.alpha);
}

Mat grf_modal_coeffs(const GRFSpec& spec, Rng& rng) {
  spec.validate();
  Mat xi(spec.modes, spec.modes);
  for (int k = 0; k < spec.modes; ++k)
    for (int l = 0; l < spec.modes; ++l) xi(k, l) = rng.next_gaussian();
  return xi;
}

Mat grf_field_from_coeffs(const GRFSpec& spec, const Mat& xi, const Mat& coords) {
  spec.validate();
  if (xi.rows() != spec.modes || xi.cols() != spec.modes)
    throw std::invalid_argument("grf: coefficient block must be modes x modes");
  if (coords.rows() != 2) throw std::invalid_argument("grf: coords must be 2 x n");
  const int kk = spec.modes;
  const int n = static_cast<int>(coords.cols());

  Mat weighted(kk, kk);
  for (int k = 0; k < kk; ++k)
    for (int l = 0; l < kk; ++l) weighted(k, l) = xi(k, l) * std::sqrt(grf_multiplier(spec, k, l));

  // Orthonormal cosine traces e_0 = 1, e_k = sqrt(2) cos(pi k x).
  Mat e1(kk, n), e2(kk, n);
  for (int i = 0; i < n; ++i) {
    e1(0, i) = 1.0;
    e2(0, i) = 1.0;
    for (int k = 1; k < kk; ++k) {
      e1(k, i) = std::sqrt(2.0) * std::cos(kPi * k * coords(0, i));
      e2(k, i) = std::sqrt(2.0) * std::cos(kPi * k * coords(1, i));
    }
  }
  return ((weighted.transpose() * e1).cwiseProduct(e2)).colwise().sum();
}

Mat grf_sample(const GRFSpec& spec, const Mat& coords, Rng& rng) {
  return grf_field_from_coeffs(spec, grf_modal_coeffs(spec, rng), coords);
}

Mat darcy_permeability(const Mat& field) {
  return (field.array() >= 0.0).select(Mat::Constant(field.rows(), field.cols(), 12.0),
                                       Mat::Constant(field.rows(), field.cols(), 3.0));
}

void DarcyProblem::validate() const {
  if (n < 3) throw std::invalid_argument("darcy: grid must be at least 3 x 3");
  if (k.size() != static_cast<Eigen::Index>(n) * n)
    throw std::invalid_argument("darcy: permeability must hold n*n cell values");
  if (!k.allFinite() || (k.array() <= 0.0).any())
    throw std::invalid_argument("darcy: permeability must be strictly positive");
  if (!std::isfinite(forcing)) throw std::invalid_argument("darcy: forcing must be finite");
}

Mat darcy_grid(int n) {
  if (n < 1) throw std::invalid_argument("darcy_grid: need a positive resolution");
  Mat coords(2, static_cast<Eigen::Index>(n) * n);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      const int i = iy * n + ix;
      coords(0, i) = (ix + 0.5) / n;
      coords(1, i) = (iy + 0.5) / n;
    }
  return coords;
}

Eigen::VectorXd darcy_apply(const DarcyProblem& problem, const Eigen::VectorXd& p) {
  problem.validate();
  if (p.size() != problem.k.size())
    throw std::invalid_argument("darcy_apply: pressure vector has the wrong size");
  return darcy_matrix(problem) * p;
}

Eigen::VectorXd darcy_solve(const DarcyProblem& problem, double cg_tol, int cg_maxiter) {
  problem.validate();
  if (!(cg_tol > 0.0) || cg_maxiter < 1)
    throw std::invalid_argument("darcy_solve: need a positive tolerance and iteration budget");
  const Eigen::SparseMatrix<double> a = darcy_matrix(problem);
  const double h = 1.0 / problem.n;
  const Eigen::VectorXd b =
      Eigen::VectorXd::Constant(a.rows(), problem.forcing * h * h);

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(0.5 * cg_tol);
  cg.setMaxIterations(cg_maxiter);
  cg.compute(a);
  const Eigen::VectorXd p = cg.solve(b);
  const double rel = (a * p - b).norm() / b.norm();
  if (!(rel <= cg_tol))
    throw std::runtime_error("darcy_solve: cg stalled at relative residual " + std::to_string(rel));
  return p;
}

double grid_interpolate(int n, const Eigen::VectorXd& values, double x, double y) {
  if (n < 1 || values.size() != static_cast<Eigen::Index>(n) * n)
    throw std::invalid_argument("grid_interpolate: values must hold n*n cell entries");
  auto locate = [n](double c, int& i0, double& w) {
    const double g = c * n - 0.5;
    double base = std::floor(g);
    base = std::min(std::max(base, 0.0), static_cast<double>(n > 1 ? n - 2 : 0));
    i0 = static_cast<int>(base);
    w = std::min(std::max(g - base, 0.0), 1.0);
  };
  int ix, iy;
  double wx, wy;
  locate(x, ix, wx);
  locate(y, iy, wy);
  auto at = [&](int a, int b) { return values(b * n + a); };
  if (n == 1) return values(0);
  return (1.0 - wx) * (1.0 - wy) * at(ix, iy) + wx * (1.0 - wy) * at(ix + 1, iy) +
         (1.0 - wx) * wy * at(ix, iy + 1) + wx * wy * at(ix + 1, iy + 1);
}

DarcySample gen_darcy_sample(const GRFSpec& spec, int n, Rng& rng, double cg_tol, int cg_maxiter) {
  const Mat grid = darcy_grid(n);
  const Mat field = grf_sample(spec, grid, rng);
  const Mat k = darcy_permeability(field);

  DarcyProblem pr;
  pr.n = n;
  pr.k = k.row(0).transpose();
  const Eigen::VectorXd p = darcy_solve(pr, cg_tol, cg_maxiter);

  DarcySample sample;
  sample.permeability.coords = grid;
  sample.permeability.values = k;
  sample.permeability.domain = Domain::unit_box(2);
  sample.permeability.validate();
  sample.pressure.coords = grid;
  sample.pressure.values = p.transpose();
  sample.pressure.domain = Domain::unit_box(2);
  sample.pressure.validate();
  return sample;
}

}  // namespace fae
