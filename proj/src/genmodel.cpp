#include "fae/genmodel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fae {
namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

// out(c, i) = log w_c + log N(x_i; μ_c, diag v_c). A zero weight maps to -inf,
// which exponentiates to a zero responsibility.
Mat component_log_density(const GaussianMixture& mix, const Mat& latents) {
  const int k = mix.components();
  const int d = mix.dim();
  const int n = static_cast<int>(latents.cols());
  Mat out(k, n);
  for (int c = 0; c < k; ++c) {
    double base = std::log(mix.weights(c)) - 0.5 * d * kLogTwoPi;
    for (int j = 0; j < d; ++j) base -= 0.5 * std::log(mix.vars(j, c));
    for (int i = 0; i < n; ++i) {
      double quad = 0.0;
      for (int j = 0; j < d; ++j) {
        const double r = latents(j, i) - mix.means(j, c);
        quad += r * r / mix.vars(j, c);
      }
      out(c, i) = base - 0.5 * quad;
    }
  }
  return out;
}

// Column-wise log-sum-exp of the component table.
Eigen::VectorXd column_logsumexp(const Mat& logd) {
  const int n = static_cast<int>(logd.cols());
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    const double m = logd.col(i).maxCoeff();
    out(i) = m + std::log((logd.col(i).array() - m).exp().sum());
  }
  return out;
}

Eigen::VectorXd global_variance(const Mat& latents) {
  const double n = static_cast<double>(latents.cols());
  Eigen::VectorXd mean = latents.rowwise().mean();
  Eigen::VectorXd var = (latents.colwise() - mean).array().square().rowwise().sum() / n;
  return var.cwiseMax(kGmmVarFloor);
}

int pick_fresh_index(std::vector<char>& taken, int n, Rng& rng) {
  for (;;) {
    const int idx = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    if (!taken[idx]) {
      taken[idx] = 1;
      return idx;
    }
  }
}

}  // namespace

void GaussianMixture::validate() const {
  const int k = components();
  if (k < 1) throw std::invalid_argument("mixture: needs at least one component");
  if (means.cols() != k || vars.cols() != k)
    throw std::invalid_argument("mixture: means/vars must have one column per component");
  if (means.rows() != vars.rows())
    throw std::invalid_argument("mixture: means/vars dimension mismatch");
  if (means.rows() < 1) throw std::invalid_argument("mixture: latent dimension must be positive");
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("mixture: weights must be nonnegative");
  if (std::abs(weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("mixture: weights must sum to 1");
  if ((vars.array() < kGmmVarFloor).any())
    throw std::invalid_argument("mixture: variances below the floor");
}

GaussianMixture gmm_fit(const Mat& latents, int k, int iters, std::uint64_t seed,
                        std::vector<double>* ll_trace) {
  const int d = static_cast<int>(latents.rows());
  const int n = static_cast<int>(latents.cols());
  if (d < 1 || n < 1) throw std::invalid_argument("gmm_fit: empty sample matrix");
  if (k < 1) throw std::invalid_argument("gmm_fit: needs at least one component");
  if (n < k) throw std::invalid_argument("gmm_fit: fewer samples than components");
  if (iters < 1) throw std::invalid_argument("gmm_fit: needs at least one round");
  if (!latents.allFinite()) throw std::invalid_argument("gmm_fit: samples must be finite");
  if (ll_trace) ll_trace->clear();

  Rng rng(seed);
  const Eigen::VectorXd gvar = global_variance(latents);
  GaussianMixture mix;
  mix.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  mix.means.resize(d, k);
  mix.vars.resize(d, k);
  std::vector<char> taken(n, 0);
  for (int c = 0; c < k; ++c) {
    mix.means.col(c) = latents.col(pick_fresh_index(taken, n, rng));
    mix.vars.col(c) = gvar;
  }

  bool reseeded = false;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int round = 0; round < iters; ++round) {
    const Mat logd = component_log_density(mix, latents);
    const Eigen::VectorXd lse = column_logsumexp(logd);
    const double ll = lse.sum();
    if (ll_trace) ll_trace->push_back(ll);
    if (round > 0 && ll - prev_ll < 1e-8) break;
    prev_ll = ll;

    Mat resp = (logd.rowwise() - lse.transpose()).array().exp();
    const Eigen::VectorXd nk = resp.rowwise().sum();
    for (int c = 0; c < k; ++c) {
      if (nk(c) / n < 1e-12) {
        if (reseeded)
          throw std::runtime_error("gmm_fit: component " + std::to_string(c) +
                                   " collapsed after a re-seed");
        reseeded = true;
        std::vector<char> fresh(n, 0);
        mix.means.col(c) = latents.col(pick_fresh_index(fresh, n, rng));
        mix.vars.col(c) = gvar;
        mix.weights(c) = 1.0 / n;
        continue;
      }
      mix.weights(c) = nk(c) / n;
      mix.means.col(c) = latents * resp.row(c).transpose() / nk(c);
      Eigen::VectorXd v =
          (latents.colwise() - mix.means.col(c)).array().square().matrix() *
          resp.row(c).transpose() / nk(c);
      mix.vars.col(c) = v.cwiseMax(kGmmVarFloor);
    }
    mix.weights /= mix.weights.sum();
  }
  mix.validate();
  return mix;
}

double gmm_log_likelihood(const GaussianMixture& mix, const Mat& latents) {
  mix.validate();
  if (latents.rows() != mix.dim())
    throw std::invalid_argument("gmm_log_likelihood: dimension mismatch");
  return column_logsumexp(component_log_density(mix, latents)).sum();
}

Eigen::VectorXd gmm_sample(const GaussianMixture& mix, Rng& rng) {
  const double u = rng.next_uniform();
  int choice = mix.components() - 1;
  double cum = 0.0;
  for (int c = 0; c < mix.components(); ++c) {
    cum += mix.weights(c);
    if (u <= cum) {
      choice = c;
      break;
    }
  }
  Eigen::VectorXd z(mix.dim());
  for (int j = 0; j < mix.dim(); ++j)
    z(j) = mix.means(j, choice) + std::sqrt(mix.vars(j, choice)) * rng.next_gaussian();
  return z;
}

Mat sample_noise_path(double kappa, double eps, const Mat& times, int channels, Rng& rng) {
  if (times.rows() != 1 || times.cols() < 1)
    throw std::invalid_argument("sample_noise_path: times must be a nonempty row");
  if (times(0, 0) != 0.0)
    throw std::invalid_argument("sample_noise_path: times must start at 0");
  if (kappa < 0.0 || eps < 0.0)
    throw std::invalid_argument("sample_noise_path: kappa and eps must be nonnegative");
  if (channels < 1) throw std::invalid_argument("sample_noise_path: needs a channel");
  const int n = static_cast<int>(times.cols());
  Mat eta = Mat::Zero(channels, n);
  for (int i = 1; i < n; ++i) {
    const double dt = times(0, i) - times(0, i - 1);
    if (dt <= 0.0) throw std::invalid_argument("sample_noise_path: times must increase");
    double decay = 1.0, sd;
    if (kappa > 0.0) {
      decay = std::exp(-kappa * dt);
      sd = std::sqrt(eps / (2.0 * kappa) * (1.0 - std::exp(-2.0 * kappa * dt)));
    } else {
      sd = std::sqrt(eps * dt);
    }
    for (int r = 0; r < channels; ++r)
      eta(r, i) = decay * eta(r, i - 1) + sd * rng.next_gaussian();
  }
  return eta;
}

std::vector<Eigen::VectorXd> interpolate_latent(const Eigen::VectorXd& z1,
                                                const Eigen::VectorXd& z2,
                                                const std::vector<double>& alphas) {
  if (z1.size() != z2.size())
    throw std::invalid_argument("interpolate_latent: endpoint dimension mismatch");
  std::vector<Eigen::VectorXd> out;
  out.reserve(alphas.size());
  for (double a : alphas) out.push_back(a * z1 + (1.0 - a) * z2);
  return out;
}

namespace {

Eigen::VectorXd draw_latent(int d_latent, const GaussianMixture* mix, Rng& rng) {
  if (mix) {
    if (mix->dim() != d_latent)
      throw std::invalid_argument("generate: mixture dimension does not match the decoder");
    return gmm_sample(*mix, rng);
  }
  Eigen::VectorXd z(d_latent);
  for (int j = 0; j < d_latent; ++j) z(j) = rng.next_gaussian();
  return z;
}

}  // namespace

std::vector<PointCloudFunction> generate_fvae(const FvaeModel& model, const Mat& coords,
                                              const Domain& domain, int n_samples,
                                              std::uint64_t seed, const GaussianMixture* mix) {
  if (n_samples < 1) throw std::invalid_argument("generate_fvae: needs a sample count");
  Rng base(seed);
  std::vector<PointCloudFunction> out;
  out.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    Rng stream = base.substream(static_cast<std::uint64_t>(i));
    PointCloudFunction cloud;
    cloud.coords = coords;
    cloud.values = decode_values(draw_latent(model.dec_spec.d_latent, mix, stream), coords,
                                 model.dec_params, model.dec_spec, model.map);
    cloud.domain = domain;
    cloud.validate();
    out.push_back(std::move(cloud));
  }
  return out;
}

std::vector<PointCloudFunction> generate_fvae_sde(const FvaeModel& model, const Mat& times,
                                                  double kappa, double eps, int n_samples,
                                                  std::uint64_t seed,
                                                  const GaussianMixture* mix) {
  if (n_samples < 1) throw std::invalid_argument("generate_fvae_sde: needs a sample count");
  if (times.rows() != 1 || times.cols() < 1)
    throw std::invalid_argument("generate_fvae_sde: times must be a nonempty row");
  Domain domain;
  domain.lo = Eigen::VectorXd::Zero(1);
  domain.hi = Eigen::VectorXd::Constant(1, times(0, times.cols() - 1));
  domain.periodic = {0};
  Rng base(seed);
  std::vector<PointCloudFunction> out;
  out.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    Rng stream = base.substream(static_cast<std::uint64_t>(i));
    PointCloudFunction cloud;
    cloud.coords = times;
    cloud.values = decode_values(draw_latent(model.dec_spec.d_latent, mix, stream), times,
                                 model.dec_params, model.dec_spec, model.map);
    cloud.values += sample_noise_path(kappa, eps, times, model.dec_spec.m, stream);
    cloud.domain = domain;
    cloud.validate();
    out.push_back(std::move(cloud));
  }
  return out;
}

}  // namespace fae
