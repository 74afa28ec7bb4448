#include "fae/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fae {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kSqrt2 = 1.41421356237309504880168872420969808;

double uniform_spacing(const Mat& coords, const char* who) {
  if (coords.rows() != 1 || coords.cols() < 2)
    throw std::invalid_argument(std::string(who) + ": need a 1-D mesh with at least 2 points");
  const double dx = coords(0, 1) - coords(0, 0);
  if (!(dx > 0.0)) throw std::invalid_argument(std::string(who) + ": mesh must be increasing");
  for (Eigen::Index i = 2; i < coords.cols(); ++i) {
    const double gap = coords(0, i) - coords(0, i - 1);
    if (std::abs(gap - dx) > 1e-9 * dx)
      throw std::invalid_argument(std::string(who) + ": nonuniform mesh");
  }
  return dx;
}

void check_times_increasing(const Mat& times, const char* who) {
  for (Eigen::Index i = 1; i < times.cols(); ++i)
    if (!(times(0, i) > times(0, i - 1)))
      throw std::invalid_argument(std::string(who) + ": path times must be strictly increasing");
}

}  // namespace

// ---------------------------------------------------------------------------
// Latent-space building blocks
// ---------------------------------------------------------------------------

double kl_diag_gaussian(const GaussianLatent& latent) {
  if (latent.mean.size() != latent.logdiag.size())
    throw std::invalid_argument("kl_diag_gaussian: mean and logdiag sizes differ");
  const Eigen::ArrayXd ld = latent.logdiag.array();
  return 0.5 * (latent.mean.squaredNorm() + (ld.exp() - ld).sum() -
                static_cast<double>(latent.mean.size()));
}

Mat reparam_sample(const GaussianLatent& latent, const Mat& xi) {
  if (latent.mean.size() != latent.logdiag.size())
    throw std::invalid_argument("reparam_sample: mean and logdiag sizes differ");
  if (xi.rows() != latent.mean.size() || xi.cols() < 1)
    throw std::invalid_argument("reparam_sample: xi must be d x q");
  const Eigen::ArrayXd sd = (0.5 * latent.logdiag.array()).exp();
  return ((xi.array().colwise() * sd).colwise() + latent.mean.array()).matrix();
}

int tape_kl(Tape& t, int mean, int logdiag) {
  const Mat& m = t.value(mean);
  const Mat& l = t.value(logdiag);
  if (m.cols() != 1 || l.cols() != 1 || m.rows() != l.rows())
    throw std::invalid_argument("tape_kl: mean and logdiag must be matching columns");
  int inner = t.add(t.sum(t.square(mean)), t.sub(t.sum(t.exp(logdiag)), t.sum(logdiag)));
  return t.shift(-0.5 * static_cast<double>(m.rows()), t.scale(0.5, inner));
}

int tape_reparam(Tape& t, int mean, int logdiag, const Mat& xi) {
  const Mat& m = t.value(mean);
  const Mat& l = t.value(logdiag);
  if (m.cols() != 1 || l.cols() != 1 || m.rows() != l.rows())
    throw std::invalid_argument("tape_reparam: mean and logdiag must be matching columns");
  if (xi.rows() != m.rows() || xi.cols() < 1)
    throw std::invalid_argument("tape_reparam: xi must be d x q");
  const int q = static_cast<int>(xi.cols());
  int sd = t.exp(t.scale(0.5, logdiag));
  return t.add(t.repeat_cols(mean, q), t.mul(t.repeat_cols(sd, q), t.constant(xi)));
}

// ---------------------------------------------------------------------------
// Path-space objective
// ---------------------------------------------------------------------------

void SDEConfig::validate(int channels) const {
  if (!(eps > 0.0)) throw std::invalid_argument("SDEConfig: eps must be positive");
  if (!(T > 0.0)) throw std::invalid_argument("SDEConfig: T must be positive");
  if (!(kappa >= 0.0)) throw std::invalid_argument("SDEConfig: kappa must be nonnegative");
  if (!(lambda >= 0.0)) throw std::invalid_argument("SDEConfig: lambda must be nonnegative");
  if (!(beta > 0.0)) throw std::invalid_argument("SDEConfig: beta must be positive");
  if (u0.size() != channels) throw std::invalid_argument("SDEConfig: u0 channel count mismatch");
  if (!u0.allFinite()) throw std::invalid_argument("SDEConfig: u0 must be finite");
}

double sde_log_density_ratio(const PointCloudFunction& path, const Mat& g, const Mat& gp,
                             double kappa, double eps) {
  path.validate();
  if (path.dim() != 1)
    throw std::invalid_argument("sde_log_density_ratio: path coordinates must be scalar times");
  const int m = path.channels(), n = path.points();
  if (n < 2) throw std::invalid_argument("sde_log_density_ratio: fewer than 2 path points");
  if (g.rows() != m || g.cols() != n || gp.rows() != m || gp.cols() != n)
    throw std::invalid_argument("sde_log_density_ratio: g and g' must match the path shape");
  if (!(eps > 0.0)) throw std::invalid_argument("sde_log_density_ratio: eps must be positive");
  if (!(kappa >= 0.0)) throw std::invalid_argument("sde_log_density_ratio: kappa must be nonnegative");
  check_times_increasing(path.coords, "sde_log_density_ratio");

  double stoch = 0.0, quad = 0.0, ref = 0.0;
  for (int i = 1; i < n; ++i) {
    const double dt = path.coords(0, i) - path.coords(0, i - 1);
    const auto u_prev = path.values.col(i - 1);
    const Eigen::VectorXd a = gp.col(i - 1) + kappa * g.col(i - 1);
    stoch += a.dot(path.values.col(i) - u_prev);
    quad += (gp.col(i - 1) - kappa * (u_prev - g.col(i - 1))).squaredNorm() * dt;
    ref += kappa * kappa * u_prev.squaredNorm() * dt;
  }
  return stoch / eps - 0.5 * (quad - ref) / eps;
}

int tape_sde_objective(Tape& t, int g_all, int kl, const PointCloudFunction& path,
                       const SDEConfig& cfg, int q) {
  path.validate();
  if (path.dim() != 1)
    throw std::invalid_argument("sde objective: path coordinates must be scalar times");
  const int m = path.channels(), n = path.points();
  cfg.validate(m);
  if (n < 2) throw std::invalid_argument("sde objective: fewer than 2 path points");
  check_times_increasing(path.coords, "sde objective");
  if (path.coords(0, 0) != 0.0)
    throw std::invalid_argument("sde objective: path must start at time 0");
  for (int r = 0; r < m; ++r)
    if (path.values(r, 0) != cfg.u0(r))
      throw std::invalid_argument("sde objective: path must start exactly at u0");
  if (q < 1) throw std::invalid_argument("sde objective: need at least one draw");
  const Mat& G = t.value(g_all);
  if (G.rows() != m || G.cols() != static_cast<Eigen::Index>(q) * n)
    throw std::invalid_argument("sde objective: decoded draws must be m x (q*n)");
  if (!t.has_tangent(g_all))
    throw std::invalid_argument("sde objective: decoded draws must carry the time derivative");

  // per-draw tiled constants: increments D, left-endpoint weights W, path
  // values U, plus the initial-value picks (last interval columns stay zero)
  Mat D = Mat::Zero(m, q * n), W = Mat::Zero(m, q * n), U = Mat::Zero(m, q * n);
  Mat U0 = Mat::Zero(m, q * n), M0 = Mat::Zero(m, q * n);
  double ref = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    const double dt = path.coords(0, i + 1) - path.coords(0, i);
    ref += path.values.col(i).squaredNorm() * dt;
  }
  ref *= cfg.kappa * cfg.kappa;
  for (int l = 0; l < q; ++l) {
    for (int i = 0; i < n; ++i) {
      U.col(l * n + i) = path.values.col(i);
      if (i + 1 < n) {
        D.col(l * n + i) = path.values.col(i + 1) - path.values.col(i);
        W.col(l * n + i).setConstant(path.coords(0, i + 1) - path.coords(0, i));
      }
    }
    U0.col(l * n) = cfg.u0;
    M0.col(l * n).setOnes();
  }

  int gp = t.tangent_of(g_all);
  int a = t.axpby(1.0, gp, cfg.kappa, g_all);
  int stoch = t.dot_const(a, D);
  int resid = t.axpby(1.0, a, -cfg.kappa, t.constant(U));
  int quad = t.dot_const(t.square(resid), W);
  int penalty = t.dot_const(t.square(t.sub(g_all, t.constant(U0))), M0);
  int data = t.add_n({t.scale(-1.0 / cfg.eps, stoch), t.scale(0.5 / cfg.eps, quad),
                      t.scale(cfg.lambda, penalty)});
  return t.shift(-0.5 * ref / cfg.eps,
                 t.add(t.scale(1.0 / q, data), t.scale(cfg.beta, kl)));
}

int tape_loss_sde(Tape& t, const FvaeModel& model, const PointCloudFunction& cloud_enc,
                  const PointCloudFunction& path, const SDEConfig& cfg, const Mat& xi) {
  if (!model.enc_spec.gaussian)
    throw std::invalid_argument("loss_sde: encoder must be gaussian");
  const int dz = model.enc_spec.d_latent;
  if (xi.rows() != dz || xi.cols() < 1)
    throw std::invalid_argument("loss_sde: xi must be d_latent x q");
  const int q = static_cast<int>(xi.cols());
  int h = tape_encode(t, 0, model.enc_params, model.enc_spec, model.map, cloud_enc);
  int mean = t.slice_rows(h, 0, dz);
  int ld = t.slice_rows(h, dz, dz);
  int kl = tape_kl(t, mean, ld);
  int z = tape_reparam(t, mean, ld, xi);
  int g = tape_decode(t, 1, model.dec_params, model.dec_spec, model.map, z, path.coords, true);
  return tape_sde_objective(t, g, kl, path, cfg, q);
}

double loss_sde(const FvaeModel& model, const PointCloudFunction& cloud_enc,
                const PointCloudFunction& path, const SDEConfig& cfg, const Mat& xi) {
  Tape t(model.stores());
  return t.scalar(tape_loss_sde(t, model, cloud_enc, path, cfg, xi));
}

// ---------------------------------------------------------------------------
// Spectral bases
// ---------------------------------------------------------------------------

void SpectralOperator::validate() const {
  if (multipliers.size() < 1)
    throw std::invalid_argument("SpectralOperator: need at least one mode");
  if (!(multipliers.array() > 0.0).all())
    throw std::invalid_argument("SpectralOperator: multipliers must be strictly positive");
}

Mat basis_projection(const SpectralOperator& op, const Mat& coords) {
  op.validate();
  const double dx = uniform_spacing(coords, "basis_projection");
  const int J = op.modes(), n = static_cast<int>(coords.cols());
  Mat P(J, n);
  for (int j = 0; j < J; ++j)
    for (int i = 0; i < n; ++i) {
      const double x = coords(0, i);
      if (op.sine)
        P(j, i) = dx * kSqrt2 * std::sin(kPi * (j + 1) * x);
      else
        P(j, i) = j == 0 ? dx : dx * kSqrt2 * std::cos(kPi * j * x);
    }
  return P;
}

Mat hs_sine_projection(int n, double s, int n_modes) {
  if (n < 1) throw std::invalid_argument("hs_sine_projection: empty mesh");
  if (n_modes < 1 || n_modes > n)
    throw std::invalid_argument("hs_sine_projection: mode cap must be in [1, mesh size]");
  const double dx = 1.0 / (n + 1);
  Mat P(n_modes, n);
  for (int j = 1; j <= n_modes; ++j) {
    const double w = std::pow(1.0 + static_cast<double>(j) * j, 0.5 * s);
    for (int i = 1; i <= n; ++i) P(j - 1, i - 1) = w * kSqrt2 * std::sin(kPi * j * i * dx) * dx;
  }
  return P;
}

double sobolev_norm_sq(const Eigen::RowVectorXd& values, double s, int n_modes) {
  const Mat P = hs_sine_projection(static_cast<int>(values.size()), s, n_modes);
  return (P * values.transpose()).squaredNorm();
}

// ---------------------------------------------------------------------------
// Bayesian-inverse-problem objective
// ---------------------------------------------------------------------------

int tape_bip_objective(Tape& t, int g_all, int kl, const Eigen::VectorXd& u_coeffs,
                       const SpectralOperator& op, const Mat& dec_coords, int q) {
  op.validate();
  const int J = op.modes();
  if (u_coeffs.size() != J)
    throw std::invalid_argument("bip objective: coefficient count mismatch");
  if (q < 1) throw std::invalid_argument("bip objective: need at least one draw");
  const int n = static_cast<int>(dec_coords.cols());
  const Mat& G = t.value(g_all);
  if (G.rows() != 1 || G.cols() != static_cast<Eigen::Index>(q) * n)
    throw std::invalid_argument("bip objective: decoded draws must be 1 x (q*n)");

  const Mat P = basis_projection(op, dec_coords);
  int proj = t.constant(P);
  int zero_bias = t.constant(Mat::Zero(J, 1));
  int gt = t.transpose(g_all);
  std::vector<int> per_draw;
  per_draw.reserve(q);
  for (int l = 0; l < q; ++l)
    per_draw.push_back(t.affine(proj, zero_bias, t.slice_rows(gt, l * n, n)));
  int a = t.concat_rows(per_draw);  // (q*J) x 1 basis coefficients

  const Eigen::VectorXd lam_inv = op.multipliers.cwiseInverse();
  int quad = t.scale(0.5, t.dot(a, t.mul(a, t.constant(lam_inv.replicate(q, 1)))));
  int cross = t.dot_const(a, lam_inv.cwiseProduct(u_coeffs).replicate(q, 1));
  return t.add(t.scale(1.0 / q, t.sub(quad, cross)), kl);
}

int tape_loss_bip(Tape& t, const FvaeModel& model, const PointCloudFunction& cloud_enc,
                  const Eigen::VectorXd& u_coeffs, const SpectralOperator& op,
                  const Mat& dec_coords, const Mat& xi) {
  if (!model.enc_spec.gaussian)
    throw std::invalid_argument("loss_bip: encoder must be gaussian");
  if (model.dec_spec.m != 1)
    throw std::invalid_argument("loss_bip: scalar-valued data only");
  const int dz = model.enc_spec.d_latent;
  if (xi.rows() != dz || xi.cols() < 1)
    throw std::invalid_argument("loss_bip: xi must be d_latent x q");
  const int q = static_cast<int>(xi.cols());
  int h = tape_encode(t, 0, model.enc_params, model.enc_spec, model.map, cloud_enc);
  int mean = t.slice_rows(h, 0, dz);
  int ld = t.slice_rows(h, dz, dz);
  int kl = tape_kl(t, mean, ld);
  int z = tape_reparam(t, mean, ld, xi);
  int g = tape_decode(t, 1, model.dec_params, model.dec_spec, model.map, z, dec_coords);
  return tape_bip_objective(t, g, kl, u_coeffs, op, dec_coords, q);
}

double loss_bip(const FvaeModel& model, const PointCloudFunction& cloud_enc,
                const Eigen::VectorXd& u_coeffs, const SpectralOperator& op,
                const Mat& dec_coords, const Mat& xi) {
  Tape t(model.stores());
  return t.scalar(tape_loss_bip(t, model, cloud_enc, u_coeffs, op, dec_coords, xi));
}

// ---------------------------------------------------------------------------
// White-noise objective
// ---------------------------------------------------------------------------

int tape_whitenoise_objective(Tape& t, int g_draws, int kl, const Mat& u, double dx,
                              double beta, int q) {
  if (q < 1) throw std::invalid_argument("whitenoise objective: need at least one draw");
  if (!(dx > 0.0)) throw std::invalid_argument("whitenoise objective: dx must be positive");
  if (!(beta > 0.0)) throw std::invalid_argument("whitenoise objective: beta must be positive");
  const Mat& G = t.value(g_draws);
  if (u.rows() != 1 || G.rows() != q || G.cols() != u.cols())
    throw std::invalid_argument("whitenoise objective: draws must be q x n matching the data row");
  const int n = static_cast<int>(u.cols());
  int energy = t.dot_const(t.square(g_draws), Mat::Constant(q, n, 0.5 * dx / q));
  int cross = t.dot_const(g_draws, (dx / q) * u.replicate(q, 1));
  return t.add(t.sub(energy, cross), t.scale(beta, kl));
}

int tape_loss_whitenoise(Tape& t, const DiracModel& model, const PointCloudFunction& cloud,
                         double beta, const Mat& xi) {
  if (!model.gaussian)
    throw std::invalid_argument("loss_whitenoise: rho head must be gaussian");
  cloud.validate();
  if (cloud.channels() != 1)
    throw std::invalid_argument("loss_whitenoise: scalar-valued data only");
  const double dx = uniform_spacing(cloud.coords, "loss_whitenoise");
  const int dl = model.d_latent;
  if (xi.rows() != dl || xi.cols() < 1)
    throw std::invalid_argument("loss_whitenoise: xi must be d_latent x q");
  const int q = static_cast<int>(xi.cols());
  int h = tape_dirac_encode(t, 0, model.rho_params, model.rho_spec, cloud);
  int mean = t.slice_rows(h, 0, dl);
  int ld = t.slice_rows(h, dl, dl);
  int kl = tape_kl(t, mean, ld);
  int z = tape_reparam(t, mean, ld, xi);
  int g = tape_dirac_decode(t, 1, model.dec_params, model.dec_spec, z, cloud.coords, dx);
  return tape_whitenoise_objective(t, g, kl, cloud.values, dx, beta, q);
}

double loss_whitenoise(const DiracModel& model, const PointCloudFunction& cloud, double beta,
                       const Mat& xi) {
  Tape t(model.stores());
  return t.scalar(tape_loss_whitenoise(t, model, cloud, beta, xi));
}

// ---------------------------------------------------------------------------
// Finite-dimensional objective
// ---------------------------------------------------------------------------

int tape_loss_vae(Tape& t, const VaeModel& model, const Eigen::VectorXd& u, double beta,
                  const Mat& xi) {
  if (u.size() != model.enc_spec.input_dim())
    throw std::invalid_argument("loss_vae: data dimension mismatch");
  if (!(beta > 0.0)) throw std::invalid_argument("loss_vae: beta must be positive");
  const int dl = model.d_latent;
  if (xi.rows() != dl || xi.cols() < 1)
    throw std::invalid_argument("loss_vae: xi must be d_latent x q");
  const int q = static_cast<int>(xi.cols());
  int h = tape_mlp(t, 0, model.enc_params, model.enc_spec, t.constant(u));
  int mean = t.slice_rows(h, 0, dl);
  int ld = t.slice_rows(h, dl, dl);
  int kl = tape_kl(t, mean, ld);
  int z = tape_reparam(t, mean, ld, xi);
  int g = tape_mlp(t, 1, model.dec_params, model.dec_spec, z);
  int diff = t.sub(g, t.constant(u.replicate(1, q)));
  int misfit = t.dot_const(t.square(diff),
                           Mat::Constant(u.size(), q, 0.5 / (beta * q)));
  return t.add(misfit, kl);
}

double loss_vae_gaussian(const VaeModel& model, const Eigen::VectorXd& u, double beta,
                         const Mat& xi) {
  Tape t(model.stores());
  return t.scalar(tape_loss_vae(t, model, u, beta, xi));
}

// ---------------------------------------------------------------------------
// Deterministic objective
// ---------------------------------------------------------------------------

int tape_fae_objective(Tape& t, int g, int z, const PointCloudFunction& cloud_dec, double beta,
                       const FaeNorm& norm) {
  if (cloud_dec.points() < 1)
    throw std::invalid_argument("fae objective: empty decoder cloud");
  cloud_dec.validate();
  if (!(beta >= 0.0)) throw std::invalid_argument("fae objective: beta must be nonnegative");
  const int m = cloud_dec.channels(), n = cloud_dec.points();
  const Mat& G = t.value(g);
  if (G.rows() != m || G.cols() != n)
    throw std::invalid_argument("fae objective: decode shape does not match the decoder cloud");

  int diff = t.sub(g, t.constant(cloud_dec.values));
  int misfit;
  if (!norm.sobolev) {
    const double vol = cloud_dec.domain.volume();
    misfit = t.dot_const(t.square(diff), Mat::Constant(m, n, 0.5 * vol / n));
  } else {
    if (m != 1)
      throw std::invalid_argument("fae objective: Sobolev misfit needs scalar data");
    const double dx = 1.0 / (n + 1);
    for (int i = 0; i < n; ++i)
      if (std::abs(cloud_dec.coords(0, i) - (i + 1) * dx) > 1e-9 * dx)
        throw std::invalid_argument("fae objective: Sobolev misfit needs the zero-boundary mesh");
    const Mat P = hs_sine_projection(n, norm.s, norm.n_modes);
    int a = t.affine(t.constant(P), t.constant(Mat::Zero(norm.n_modes, 1)), t.transpose(diff));
    misfit = t.scale(0.5, t.sum(t.square(a)));
    if (norm.subtract_data_norm)
      misfit = t.shift(-0.5 * (P * cloud_dec.values.transpose()).squaredNorm(), misfit);
  }
  return t.add(misfit, t.scale(beta, t.sum(t.square(z))));
}

int tape_loss_fae(Tape& t, const FvaeModel& model, const PointCloudFunction& cloud_enc,
                  const PointCloudFunction& cloud_dec, double beta, const FaeNorm& norm) {
  if (model.enc_spec.gaussian)
    throw std::invalid_argument("loss_fae: deterministic objective needs a non-gaussian encoder");
  if (cloud_dec.points() < 1)
    throw std::invalid_argument("loss_fae: empty decoder cloud");
  int z = tape_encode(t, 0, model.enc_params, model.enc_spec, model.map, cloud_enc);
  int g = tape_decode(t, 1, model.dec_params, model.dec_spec, model.map, z, cloud_dec.coords);
  return tape_fae_objective(t, g, z, cloud_dec, beta, norm);
}

double loss_fae(const FvaeModel& model, const PointCloudFunction& cloud_enc,
                const PointCloudFunction& cloud_dec, double beta, const FaeNorm& norm) {
  Tape t(model.stores());
  return t.scalar(tape_loss_fae(t, model, cloud_enc, cloud_dec, beta, norm));
}

int tape_loss_fae_dirac(Tape& t, const DiracModel& model, const PointCloudFunction& cloud_enc,
                        const PointCloudFunction& cloud_dec, double beta, const FaeNorm& norm) {
  if (model.gaussian)
    throw std::invalid_argument("loss_fae: deterministic objective needs a non-gaussian rho head");
  if (cloud_dec.points() < 1)
    throw std::invalid_argument("loss_fae: empty decoder cloud");
  const double dx = uniform_spacing(cloud_dec.coords, "loss_fae");
  int z = tape_dirac_encode(t, 0, model.rho_params, model.rho_spec, cloud_enc);
  int g = tape_dirac_decode(t, 1, model.dec_params, model.dec_spec, z, cloud_dec.coords, dx);
  return tape_fae_objective(t, g, z, cloud_dec, beta, norm);
}

double loss_fae_dirac(const DiracModel& model, const PointCloudFunction& cloud_enc,
                      const PointCloudFunction& cloud_dec, double beta, const FaeNorm& norm) {
  Tape t(model.stores());
  return t.scalar(tape_loss_fae_dirac(t, model, cloud_enc, cloud_dec, beta, norm));
}

}  // namespace fae
