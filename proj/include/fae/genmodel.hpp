#pragma once

#include <cstdint>
#include <vector>

#include "fae/encdec.hpp"
#include "fae/mesh.hpp"
#include "fae/rng.hpp"

namespace fae {

// Variances below this are clamped during fitting and rejected by validate().
constexpr double kGmmVarFloor = 1e-6;

// Diagonal-covariance Gaussian mixture over latent vectors.
struct GaussianMixture {
  Eigen::VectorXd weights;  // K entries, nonnegative, summing to 1
  Mat means;                // d x K
  Mat vars;                 // d x K, per-coordinate variances >= kGmmVarFloor

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.rows()); }
  void validate() const;  // throws std::invalid_argument
};

// EM fit with diagonal covariances. latents is d x n, one sample per column.
// Components start from k distinct data points with the global per-coordinate
// variance. Stops after iters rounds or once the total log-likelihood gain
// drops below 1e-8. A component whose weight vanishes (< 1e-12) is re-seeded
// from a random data point once; a second collapse aborts. ll_trace, when
// given, receives the log-likelihood at the start of every round.
GaussianMixture gmm_fit(const Mat& latents, int k, int iters, std::uint64_t seed,
                        std::vector<double>* ll_trace = nullptr);

// Total log-likelihood of the samples (d x n) under the mixture.
double gmm_log_likelihood(const GaussianMixture& mix, const Mat& latents);

// One draw: categorical component choice, then a diagonal Gaussian.
Eigen::VectorXd gmm_sample(const GaussianMixture& mix, Rng& rng);

// Ornstein-Uhlenbeck noise dη = −κη dt + √ε dW with η(0) = 0, sampled channel
// by channel with the exact transition kernel on the given times (a sorted
// 1 x n row starting at 0). κ = 0 degenerates to Brownian increments. The
// Gaussian draws are consumed even when ε = 0, so streams stay aligned across
// noise levels. Returns channels x n.
Mat sample_noise_path(double kappa, double eps, const Mat& times, int channels, Rng& rng);

// Latent line segment z(α) = α z1 + (1 − α) z2, one output per alpha.
std::vector<Eigen::VectorXd> interpolate_latent(const Eigen::VectorXd& z1,
                                                const Eigen::VectorXd& z2,
                                                const std::vector<double>& alphas);

// Decoder-side generation on a fixed output mesh. Latents come from the
// standard normal prior, or from mix when given. Sample i is deterministic in
// (seed, i): it uses substream i of the seed stream.
std::vector<PointCloudFunction> generate_fvae(const FvaeModel& model, const Mat& coords,
                                              const Domain& domain, int n_samples,
                                              std::uint64_t seed,
                                              const GaussianMixture* mix = nullptr);

// Path-space variant on a time mesh (1 x n, starting at 0): decodes the draw
// and adds an exact OU noise path with the decoder's channel count.
std::vector<PointCloudFunction> generate_fvae_sde(const FvaeModel& model, const Mat& times,
                                                  double kappa, double eps, int n_samples,
                                                  std::uint64_t seed,
                                                  const GaussianMixture* mix = nullptr);

}  // namespace fae
