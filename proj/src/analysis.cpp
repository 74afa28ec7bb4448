#include "fae/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace fae {
namespace {

constexpr double kInvSqrtTwoPi = 0.3989422804014327;

double uniform_spacing(const Mat& coords, const char* who) {
  if (coords.rows() != 1 || coords.cols() < 2)
    throw std::invalid_argument(std::string(who) + ": needs a 1-D mesh with at least two points");
  const double dx = coords(0, 1) - coords(0, 0);
  if (!(dx > 0.0)) throw std::invalid_argument(std::string(who) + ": mesh must increase");
  for (int i = 2; i < coords.cols(); ++i)
    if (std::abs(coords(0, i) - coords(0, i - 1) - dx) > 1e-9 * dx)
      throw std::invalid_argument(std::string(who) + ": mesh must be uniform");
  return dx;
}

template <typename Model>
double mse_over(const Model& model, const std::vector<PointCloudFunction>& data, MaskMode mask,
                double r_enc, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("recon_mse: empty dataset");
  if (mask == MaskMode::kComplement)
    throw std::invalid_argument("recon_mse: the error is measured on the full mesh; "
                                "use a random encoder mask");
  Rng base(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const PointCloudFunction& cloud = data[i];
    Mat got;
    if (mask == MaskMode::kRandom) {
      Rng stream = base.substream(static_cast<std::uint64_t>(i));
      const MaskPair mp = make_mask(cloud.points(), mask, r_enc, 1.0, stream);
      got = reconstruct(model, restrict_cloud(cloud, mp.enc), cloud.coords);
    } else {
      got = reconstruct(model, cloud, cloud.coords);
    }
    total += (got - cloud.values).squaredNorm() / static_cast<double>(cloud.values.size());
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

Eigen::VectorXd latent_mean(const FvaeModel& model, const PointCloudFunction& cloud) {
  if (model.enc_spec.gaussian)
    return encode_gaussian(cloud, model.enc_params, model.enc_spec, model.map).mean;
  return encode_vector(cloud, model.enc_params, model.enc_spec, model.map);
}

Eigen::VectorXd latent_mean(const DiracModel& model, const PointCloudFunction& cloud) {
  const Mat loc = Mat::Constant(1, 1, spike_argmax_location(cloud));
  const Mat head = eval_net(model.rho_params, model.rho_spec, loc);
  if (model.gaussian) return head.col(0).head(model.d_latent);
  return head.col(0);
}

Mat reconstruct(const FvaeModel& model, const PointCloudFunction& cloud, const Mat& out_coords) {
  return decode_values(latent_mean(model, cloud), out_coords, model.dec_params, model.dec_spec,
                       model.map);
}

Mat reconstruct(const DiracModel& model, const PointCloudFunction& cloud, const Mat& out_coords) {
  const double dx = uniform_spacing(out_coords, "reconstruct");
  return dirac_decode(latent_mean(model, cloud), out_coords, model.dec_params, model.dec_spec,
                      dx);
}

double recon_mse(const FvaeModel& model, const std::vector<PointCloudFunction>& data,
                 MaskMode mask, double r_enc, std::uint64_t seed) {
  return mse_over(model, data, mask, r_enc, seed);
}

double recon_mse(const DiracModel& model, const std::vector<PointCloudFunction>& data,
                 MaskMode mask, double r_enc, std::uint64_t seed) {
  return mse_over(model, data, mask, r_enc, seed);
}

double first_crossing(const PointCloudFunction& path) {
  if (path.points() < 1) throw std::invalid_argument("first_crossing: empty path");
  if (path.dim() != 1) throw std::invalid_argument("first_crossing: needs a time path");
  for (int i = 1; i < path.points(); ++i)
    if (!(path.coords(0, i) > path.coords(0, i - 1)))
      throw std::invalid_argument("first_crossing: times must increase");
  for (int i = 0; i < path.points(); ++i)
    if (path.coords(0, i) > 0.0 && path.values(0, i) >= 0.0) return path.coords(0, i);
  return path.coords(0, path.points() - 1);
}

double kde_bandwidth(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n == 0) throw std::invalid_argument("kde: empty sample set");
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  const double h = sd * std::pow(static_cast<double>(n), -0.2);
  return std::max(h, 1e-6 * std::max(1.0, sd + std::abs(mean)));
}

Eigen::VectorXd kde_scott(const std::vector<double>& samples, const Eigen::VectorXd& queries) {
  const double h = kde_bandwidth(samples);
  const double n = static_cast<double>(samples.size());
  Eigen::VectorXd out(queries.size());
  for (Eigen::Index q = 0; q < queries.size(); ++q) {
    double acc = 0.0;
    for (double s : samples) {
      const double t = (queries(q) - s) / h;
      acc += std::exp(-0.5 * t * t);
    }
    out(q) = kInvSqrtTwoPi * acc / (n * h);
  }
  return out;
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() != b.size()) {
    std::vector<double>& big = a.size() > b.size() ? a : b;
    const std::size_t m = std::min(a.size(), b.size());
    std::vector<double> keep(m);
    for (std::size_t i = 0; i < m; ++i) {
      // Evenly spaced order statistics: the (i+1/2)/m quantile of the larger set.
      const std::size_t idx =
          static_cast<std::size_t>((2 * i + 1) * big.size() / (2 * m));
      keep[i] = big[idx];
    }
    big = std::move(keep);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

int assign_state(double x1, double x2) {
  if (!std::isfinite(x1) || !std::isfinite(x2))
    throw std::invalid_argument("assign_state: coordinates must be finite");
  const auto band = [](double x) { return x < -0.1 ? 0 : (x > 0.1 ? 2 : 1); };
  return 3 * band(x2) + band(x1) + 1;
}

TransitionMatrix msm_transition(const std::vector<PointCloudFunction>& paths) {
  if (paths.empty()) throw std::invalid_argument("msm_transition: empty ensemble");
  double tau = 0.0;
  for (const PointCloudFunction& p : paths) {
    if (p.points() < 2) throw std::invalid_argument("msm_transition: paths need two points");
    if (p.channels() != 2)
      throw std::invalid_argument("msm_transition: states live on two channels");
    const double dt = uniform_spacing(p.coords, "msm_transition");
    if (tau == 0.0)
      tau = dt;
    else if (std::abs(dt - tau) > 1e-9 * tau)
      throw std::invalid_argument("msm_transition: paths must share one time step");
  }

  TransitionMatrix tm;
  tm.counts = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>::Zero(9, 9);
  for (const PointCloudFunction& p : paths)
    for (int k = 0; k + 1 < p.points(); ++k) {
      const int s0 = assign_state(p.values(0, k), p.values(1, k));
      const int s1 = assign_state(p.values(0, k + 1), p.values(1, k + 1));
      tm.counts(s0 - 1, s1 - 1) += 1;
    }
  tm.probs = Mat::Zero(9, 9);
  for (int i = 0; i < 9; ++i) {
    const long long row = tm.counts.row(i).sum();
    if (row == 0) {
      tm.probs(i, i) = 1.0;
    } else {
      for (int j = 0; j < 9; ++j)
        tm.probs(i, j) = static_cast<double>(tm.counts(i, j)) / static_cast<double>(row);
    }
  }
  return tm;
}

double msm_gap(const TransitionMatrix& model, const TransitionMatrix& reference,
               long long min_visits, int* n_excluded) {
  double worst = 0.0;
  int excluded = 0;
  for (int i = 0; i < 9; ++i) {
    if (reference.counts.row(i).sum() < min_visits) {
      ++excluded;
      continue;
    }
    worst = std::max(worst, (model.probs.row(i) - reference.probs.row(i)).cwiseAbs().maxCoeff());
  }
  if (n_excluded) *n_excluded = excluded;
  return worst;
}

double pointwise_variance(const std::vector<PointCloudFunction>& paths, int steps_per_unit) {
  if (steps_per_unit < 1)
    throw std::invalid_argument("pointwise_variance: steps_per_unit must be >= 1");
  struct Acc {
    long long n = 0;
    double mean = 0.0, m2 = 0.0;
  };
  std::map<std::pair<long long, int>, Acc> buckets;
  for (const auto& p : paths) {
    if (p.dim() != 1)
      throw std::invalid_argument("pointwise_variance: paths need scalar time coordinates");
    for (int i = 0; i < p.points(); ++i) {
      const long long key = std::llround(p.coords(0, i) * steps_per_unit);
      for (int c = 0; c < p.channels(); ++c) {
        Acc& a = buckets[{key, c}];
        ++a.n;
        const double delta = p.values(c, i) - a.mean;
        a.mean += delta / static_cast<double>(a.n);
        a.m2 += delta * (p.values(c, i) - a.mean);
      }
    }
  }
  double total = 0.0;
  long long used = 0;
  for (const auto& [key, a] : buckets) {
    if (a.n < 2) continue;
    total += a.m2 / static_cast<double>(a.n);
    ++used;
  }
  if (used == 0)
    throw std::invalid_argument("pointwise_variance: no time bucket has two samples");
  return total / static_cast<double>(used);
}

std::pair<double, double> qoi_darcy(const PointCloudFunction& pressure) {
  if (pressure.channels() != 1)
    throw std::invalid_argument("qoi_darcy: needs a scalar field");
  if (pressure.points() < 1) throw std::invalid_argument("qoi_darcy: empty field");
  PointCloudFunction sq = pressure;
  sq.values = pressure.values.array().square();
  return {pressure.values.maxCoeff(), std::sqrt(quadrature_mean(sq)(0))};
}

double whitenoise_norm_mc(int n_modes, double s, int n_draws, Rng& rng) {
  if (n_modes < 1) throw std::invalid_argument("whitenoise_norm_mc: needs a mode");
  if (n_draws < 1) throw std::invalid_argument("whitenoise_norm_mc: needs a draw");
  Eigen::VectorXd w(n_modes);
  for (int j = 1; j <= n_modes; ++j)
    w(j - 1) = std::pow(1.0 + static_cast<double>(j) * j, s);
  double mean = 0.0;
  for (int d = 0; d < n_draws; ++d) {
    double acc = 0.0;
    for (int j = 0; j < n_modes; ++j) {
      const double xi = rng.next_gaussian();
      acc += w(j) * xi * xi;
    }
    mean += acc;
  }
  return mean / n_draws;
}

namespace {

void write_rows(const std::string& path, const std::string& header,
                const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("csv: cannot write " + path);
  if (!header.empty()) os << header << '\n';
  char buf[64];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      os << (i ? "," : "") << buf;
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("csv: write failed for " + path);
}

}  // namespace

void write_kde_csv(const std::string& path, const Eigen::VectorXd& xs,
                   const Eigen::VectorXd& density) {
  if (xs.size() != density.size())
    throw std::invalid_argument("write_kde_csv: length mismatch");
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(xs.size()));
  for (Eigen::Index i = 0; i < xs.size(); ++i)
    rows.push_back({xs(i), density(i)});
  write_rows(path, "x,density", rows);
}

void write_matrix_csv(const std::string& path, const Mat& m) {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(std::move(row));
  }
  write_rows(path, "", rows);
}

void write_samples_csv(const std::string& path, const std::string& header,
                       const std::vector<double>& samples) {
  std::vector<std::vector<double>> rows;
  rows.reserve(samples.size());
  for (double s : samples) rows.push_back({s});
  write_rows(path, header, rows);
}

}  // namespace fae
