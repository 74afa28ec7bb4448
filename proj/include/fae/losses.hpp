#pragma once

#include <Eigen/Dense>

#include "fae/encdec.hpp"
#include "fae/mesh.hpp"
#include "fae/tape.hpp"

namespace fae {

// ---------------------------------------------------------------------------
// Latent-space building blocks
// ---------------------------------------------------------------------------

// KL(N(mean, diag(exp(logdiag))) || N(0, I)), in closed form.
double kl_diag_gaussian(const GaussianLatent& latent);

// z = mean + exp(logdiag/2) ⊙ ξ, one column of xi (and of the result) per draw.
Mat reparam_sample(const GaussianLatent& latent, const Mat& xi);

// Tape versions. mean and logdiag are d×1 nodes; xi is a d×q constant.
int tape_kl(Tape& t, int mean, int logdiag);
int tape_reparam(Tape& t, int mean, int logdiag, const Mat& xi);

// ---------------------------------------------------------------------------
// Path-space objective (SDE data)
// ---------------------------------------------------------------------------

enum class DriftKind { kDoubleWell, kMultiwell2d, kCustom };

// Everything the path-space training objective and the path simulator share.
struct SDEConfig {
  DriftKind drift = DriftKind::kDoubleWell;
  double eps = 1.0;     // noise temperature
  double T = 1.0;       // time horizon
  double kappa = 0.0;   // restoring rate of the reference OU process
  double lambda = 0.0;  // weight of the initial-value penalty
  double beta = 1.0;    // KL weight
  Eigen::VectorXd u0;   // shared initial state, one entry per channel

  void validate(int channels) const;  // throws std::invalid_argument
};

// log dP_g/dP_ref for one path, where P_g has drift g'(t) - κ(u - g(t)) and
// P_ref has drift -κu, both with noise √ε and both started at the path's first
// value:
//   (1/ε) Σ_i ⟨g'+κg, Δu⟩ − (1/2ε) Σ_i (‖g'−κ(u−g)‖² − ‖κu‖²) Δt,
// stochastic increments and both Riemann sums taken at left endpoints of the
// path's own time partition. g and gp hold g and g' at the path times (m×n).
double sde_log_density_ratio(const PointCloudFunction& path, const Mat& g, const Mat& gp,
                             double kappa, double eps);

// Objective assembled from decoded draws: g_all is m×(q·n) holding q draws in
// column blocks, with dg/dt in its tangent channel; kl is the 1×1 KL node.
// Returns E_z[−log-ratio + λ‖g(0)−u0‖²] + β·KL. The path must start at t=0
// with value exactly cfg.u0.
int tape_sde_objective(Tape& t, int g_all, int kl, const PointCloudFunction& path,
                       const SDEConfig& cfg, int q);

// Full per-sample pipeline: encode cloud_enc, reparametrise with xi (d_Z×q),
// decode on the path's times, assemble the objective.
int tape_loss_sde(Tape& t, const FvaeModel& model, const PointCloudFunction& cloud_enc,
                  const PointCloudFunction& path, const SDEConfig& cfg, const Mat& xi);
double loss_sde(const FvaeModel& model, const PointCloudFunction& cloud_enc,
                const PointCloudFunction& path, const SDEConfig& cfg, const Mat& xi);

// ---------------------------------------------------------------------------
// Spectral bases on [0,1]
// ---------------------------------------------------------------------------

// Diagonal covariance operator given by its eigenbasis and eigenvalues.
// sine: e_j = √2 sin(πjx), j = 1..J (zero Dirichlet data).
// cosine: e_0 = 1, e_j = √2 cos(πjx), j = 0..J−1 (zero Neumann data).
struct SpectralOperator {
  bool sine = true;
  Eigen::VectorXd multipliers;  // eigenvalues λ_j > 0, one per kept mode

  int modes() const { return static_cast<int>(multipliers.size()); }
  void validate() const;  // throws std::invalid_argument
};

// J×n quadrature projection onto the basis: row j is Δx·e_j(x_i). coords must
// be a uniformly spaced 1×n row (spacing taken from the first gap).
Mat basis_projection(const SpectralOperator& op, const Mat& coords);

// Sine projection with the H^s weights folded in, on the zero-boundary mesh
// x_i = (i+1)/(n+1): row j is (1+j²)^(s/2) √2 sin(πj x_i) / (n+1).
Mat hs_sine_projection(int n, double s, int n_modes);

// ‖u‖²_{H^s} of values sampled on the zero-boundary mesh, truncated at
// n_modes: Σ_j (1+j²)^s α_j² with α_j = Δx Σ_i u_i √2 sin(πj x_i).
double sobolev_norm_sq(const Eigen::RowVectorXd& values, double s, int n_modes);

// ---------------------------------------------------------------------------
// Bayesian-inverse-problem objective
// ---------------------------------------------------------------------------

// E_z[ Σ_j λ_j^{-1}(½ a_j² − a_j b_j) ] + KL, where b = u_coeffs and a is the
// decoded draw projected onto the operator basis over dec_coords. g_all is
// 1×(q·n) decoded draws, kl the 1×1 KL node.
int tape_bip_objective(Tape& t, int g_all, int kl, const Eigen::VectorXd& u_coeffs,
                       const SpectralOperator& op, const Mat& dec_coords, int q);

int tape_loss_bip(Tape& t, const FvaeModel& model, const PointCloudFunction& cloud_enc,
                  const Eigen::VectorXd& u_coeffs, const SpectralOperator& op,
                  const Mat& dec_coords, const Mat& xi);
double loss_bip(const FvaeModel& model, const PointCloudFunction& cloud_enc,
                const Eigen::VectorXd& u_coeffs, const SpectralOperator& op,
                const Mat& dec_coords, const Mat& xi);

// ---------------------------------------------------------------------------
// White-noise objective (spike data)
// ---------------------------------------------------------------------------

// E_z[ ½‖g‖²_{L²} − ⟨g, u⟩_{L²} ] + β·KL on a uniform mesh with spacing dx;
// norms discretised as Δx-weighted sums. g_draws is q×n (one decoded draw per
// row), u is the 1×n data row, kl the 1×1 KL node.
int tape_whitenoise_objective(Tape& t, int g_draws, int kl, const Mat& u, double dx,
                              double beta, int q);

int tape_loss_whitenoise(Tape& t, const DiracModel& model, const PointCloudFunction& cloud,
                         double beta, const Mat& xi);
double loss_whitenoise(const DiracModel& model, const PointCloudFunction& cloud, double beta,
                       const Mat& xi);

// ---------------------------------------------------------------------------
// Finite-dimensional Gaussian-decoder objective
// ---------------------------------------------------------------------------

// E_z[ (2β)^{-1}‖g(z) − u‖² ] + KL over plain vectors.
int tape_loss_vae(Tape& t, const VaeModel& model, const Eigen::VectorXd& u, double beta,
                  const Mat& xi);
double loss_vae_gaussian(const VaeModel& model, const Eigen::VectorXd& u, double beta,
                         const Mat& xi);

// ---------------------------------------------------------------------------
// Deterministic (regularised-autoencoder) objective
// ---------------------------------------------------------------------------

// Misfit norm selector. L² integrates over the decoder cloud; the Sobolev
// variant projects the misfit onto n_modes sine modes with H^s weights and
// requires the zero-boundary mesh. subtract_data_norm replaces ½‖g−u‖² by
// ½‖g−u‖² − ½‖u‖² (same truncated norm), keeping runs with different s
// comparable.
struct FaeNorm {
  bool sobolev = false;
  double s = 0.0;
  int n_modes = 0;
  bool subtract_data_norm = false;
};

// ½‖g−u‖² (in the selected norm) + β‖z‖²₂. g is the m×n decode on cloud_dec's
// points, z the latent node.
int tape_fae_objective(Tape& t, int g, int z, const PointCloudFunction& cloud_dec, double beta,
                       const FaeNorm& norm);

int tape_loss_fae(Tape& t, const FvaeModel& model, const PointCloudFunction& cloud_enc,
                  const PointCloudFunction& cloud_dec, double beta, const FaeNorm& norm);
double loss_fae(const FvaeModel& model, const PointCloudFunction& cloud_enc,
                const PointCloudFunction& cloud_dec, double beta, const FaeNorm& norm);

int tape_loss_fae_dirac(Tape& t, const DiracModel& model, const PointCloudFunction& cloud_enc,
                        const PointCloudFunction& cloud_dec, double beta, const FaeNorm& norm);
double loss_fae_dirac(const DiracModel& model, const PointCloudFunction& cloud_enc,
                      const PointCloudFunction& cloud_dec, double beta, const FaeNorm& norm);

}  // namespace fae
