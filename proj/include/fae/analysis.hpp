#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fae/encdec.hpp"
#include "fae/mesh.hpp"
#include "fae/rng.hpp"

namespace fae {

// Deterministic latent summary of one input: the gaussian head's mean, or the
// raw encoder output.
Eigen::VectorXd latent_mean(const FvaeModel& model, const PointCloudFunction& cloud);
Eigen::VectorXd latent_mean(const DiracModel& model, const PointCloudFunction& cloud);

// Encode-then-decode at the requested coords. The gaussian encoder contributes
// its mean, the deterministic encoder its raw output; the decoder never sees
// the input mesh, so out_coords is free to differ from it.
Mat reconstruct(const FvaeModel& model, const PointCloudFunction& cloud, const Mat& out_coords);
// Spike variant; out_coords must be a uniform 1-D mesh (its spacing sets the
// decoder's width floor).
Mat reconstruct(const DiracModel& model, const PointCloudFunction& cloud, const Mat& out_coords);

// Mean over samples of the mean squared pointwise error on each sample's own
// full mesh. mask = kRandom feeds the encoder a fresh r_enc subset per sample
// (deterministic in seed); the error is always measured on the full mesh.
double recon_mse(const FvaeModel& model, const std::vector<PointCloudFunction>& data,
                 MaskMode mask = MaskMode::kNone, double r_enc = 1.0, std::uint64_t seed = 0);
double recon_mse(const DiracModel& model, const std::vector<PointCloudFunction>& data,
                 MaskMode mask = MaskMode::kNone, double r_enc = 1.0, std::uint64_t seed = 0);

// Earliest mesh time strictly after 0 with channel-0 value >= 0; the final
// mesh time when the path never crosses.
double first_crossing(const PointCloudFunction& path);

// Scott-rule bandwidth: population SD times n^(-1/5), floored at
// 1e-6 * max(1, sd + |mean|).
double kde_bandwidth(const std::vector<double>& samples);
// Gaussian kernel density with the Scott bandwidth, evaluated at the queries.
Eigen::VectorXd kde_scott(const std::vector<double>& samples, const Eigen::VectorXd& queries);

// Exact 1-D transport distance of equal-size empiricals (mean absolute
// difference of sorted samples). A larger sample is first reduced to the
// smaller count by evenly spaced order statistics.
double wasserstein1(std::vector<double> a, std::vector<double> b);

// 3x3 box partition of the plane with band boundaries at ±0.1 (the closed
// middle band takes the boundary), states 1..9 from the bottom-left corner,
// row-major.
int assign_state(double x1, double x2);

struct TransitionMatrix {
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> counts;  // 9x9 visits
  Mat probs;  // rows sum to 1; a zero-count row becomes its self-transition
};

// Count matrix over consecutive pairs of partition states along 2-channel
// paths sharing one regular time step, then row-normalise.
TransitionMatrix msm_transition(const std::vector<PointCloudFunction>& paths);

// Largest |model - reference| transition probability over rows the reference
// visits at least min_visits times; n_excluded counts the skipped rows.
double msm_gap(const TransitionMatrix& model, const TransitionMatrix& reference,
               long long min_visits, int* n_excluded = nullptr);

// Across-sample variance of path values pooled over mesh times and channels.
// Times are bucketed by rounding t*steps_per_unit to an integer; buckets seen
// fewer than twice are skipped, and having none at all throws.
double pointwise_variance(const std::vector<PointCloudFunction>& paths, int steps_per_unit);

// (max of the field, L2 norm via the quadrature mean of its square).
std::pair<double, double> qoi_darcy(const PointCloudFunction& pressure);

// Empirical mean over n_draws of sum_{j<=n_modes} (1+j^2)^s xi_j^2, the
// squared truncated Sobolev norm of a white-noise draw.
double whitenoise_norm_mc(int n_modes, double s, int n_draws, Rng& rng);

// CSV emitters consumed by external plotting.
void write_kde_csv(const std::string& path, const Eigen::VectorXd& xs,
                   const Eigen::VectorXd& density);
void write_matrix_csv(const std::string& path, const Mat& m);
void write_samples_csv(const std::string& path, const std::string& header,
                       const std::vector<double>& samples);

}  // namespace fae
