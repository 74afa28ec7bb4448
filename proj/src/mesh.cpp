#include "fae/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fae {

double Domain::volume() const {
  double v = 1.0;
  for (int a = 0; a < dim(); ++a) v *= hi[a] - lo[a];
  return v;
}

void Domain::validate() const {
  if (lo.size() == 0) throw std::invalid_argument("domain has no axes");
  if (hi.size() != lo.size() || static_cast<int>(periodic.size()) != dim())
    throw std::invalid_argument("domain axis counts disagree");
  for (int a = 0; a < dim(); ++a)
    if (!(lo[a] < hi[a])) throw std::invalid_argument("domain box is degenerate on axis " + std::to_string(a));
}

Domain Domain::unit_box(int d, bool periodic_all) {
  if (d < 1) throw std::invalid_argument("domain dimension must be positive");
  Domain dom;
  dom.lo = Eigen::VectorXd::Zero(d);
  dom.hi = Eigen::VectorXd::Ones(d);
  dom.periodic.assign(d, periodic_all ? 1 : 0);
  return dom;
}

void PointCloudFunction::validate() const {
  domain.validate();
  if (coords.cols() < 1) throw std::invalid_argument("cloud has no points");
  if (coords.rows() != domain.dim()) throw std::invalid_argument("coord dimension does not match domain");
  if (values.cols() != coords.cols()) throw std::invalid_argument("coords and values point counts disagree");
  if (values.rows() < 1) throw std::invalid_argument("cloud has no value channels");
  if (!values.allFinite() || !coords.allFinite()) throw std::invalid_argument("cloud contains non-finite entries");
  for (int i = 0; i < coords.cols(); ++i)
    for (int a = 0; a < coords.rows(); ++a)
      if (coords(a, i) < domain.lo[a] || coords(a, i) > domain.hi[a])
        throw std::invalid_argument("point " + std::to_string(i) + " lies outside the domain box");
}

Eigen::VectorXd quadrature_mean(const Mat& values, double volume) {
  if (values.cols() < 1) throw std::invalid_argument("quadrature_mean of empty value list");
  Eigen::VectorXd out(values.rows());
  std::vector<double> row(static_cast<std::size_t>(values.cols()));
  for (int r = 0; r < values.rows(); ++r) {
    for (int i = 0; i < values.cols(); ++i) row[static_cast<std::size_t>(i)] = values(r, i);
    std::sort(row.begin(), row.end());
    double acc = 0.0;
    for (double v : row) acc += v;
    out[r] = volume * acc / static_cast<double>(values.cols());
  }
  return out;
}

Eigen::VectorXd quadrature_mean(const PointCloudFunction& cloud) {
  return quadrature_mean(cloud.values, cloud.domain.volume());
}

long long round_half_away(double x) {
  return std::llround(x);  // llround rounds halves away from zero
}

namespace {

// First n entries of a uniform without-replacement draw from {0..count-1}.
std::vector<int> draw_subset(int count, int n, Rng& rng) {
  std::vector<int> pool(static_cast<std::size_t>(count));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t j = i + rng.next_below(static_cast<std::uint64_t>(count - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  std::vector<int> out(pool.begin(), pool.begin() + n);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

MaskPair make_mask(int count, MaskMode mode, double r_enc, double r_dec, Rng& rng) {
  if (count < 1) throw std::invalid_argument("make_mask needs at least one point");
  MaskPair mp;
  mp.mode = mode;
  if (mode == MaskMode::kNone) {
    mp.enc.resize(static_cast<std::size_t>(count));
    std::iota(mp.enc.begin(), mp.enc.end(), 0);
    mp.dec = mp.enc;
    return mp;
  }
  if (!(r_enc > 0.0 && r_enc < 1.0)) throw std::invalid_argument("encoder ratio must lie in (0,1)");
  const int n_enc = std::min(count, static_cast<int>(std::max(1LL, round_half_away(r_enc * count))));
  mp.enc = draw_subset(count, n_enc, rng);
  if (mode == MaskMode::kComplement) {
    mp.dec.reserve(static_cast<std::size_t>(count - n_enc));
    std::size_t k = 0;
    for (int i = 0; i < count; ++i) {
      if (k < mp.enc.size() && mp.enc[k] == i) {
        ++k;
      } else {
        mp.dec.push_back(i);
      }
    }
  } else {
    if (!(r_dec > 0.0 && r_dec <= 1.0)) throw std::invalid_argument("decoder ratio must lie in (0,1]");
    const int n_dec = static_cast<int>(std::max(1LL, round_half_away(r_dec * count)));
    mp.dec = draw_subset(count, std::min(n_dec, count), rng);
  }
  return mp;
}

PointCloudFunction restrict_cloud(const PointCloudFunction& cloud, const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("restriction to empty index set");
  PointCloudFunction out;
  out.domain = cloud.domain;
  out.coords.resize(cloud.coords.rows(), static_cast<Eigen::Index>(idx.size()));
  out.values.resize(cloud.values.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= cloud.points()) throw std::invalid_argument("restriction index out of range");
    out.coords.col(static_cast<Eigen::Index>(k)) = cloud.coords.col(idx[k]);
    out.values.col(static_cast<Eigen::Index>(k)) = cloud.values.col(idx[k]);
  }
  return out;
}

PointCloudFunction subsample_drop(const PointCloudFunction& cloud, int keep_every,
                                  double drop_ratio, Rng& rng) {
  if (keep_every < 1) throw std::invalid_argument("keep_every must be at least 1");
  if (!(drop_ratio >= 0.0 && drop_ratio < 1.0)) throw std::invalid_argument("drop_ratio must lie in [0,1)");
  if (cloud.points() < 1) throw std::invalid_argument("subsample of empty cloud");

  std::vector<int> kept;
  for (int i = 0; i < cloud.points(); i += keep_every) kept.push_back(i);

  // The first point is structurally excluded from the drop pool.
  const int droppable = static_cast<int>(kept.size()) - 1;
  const int n_drop = static_cast<int>(std::min<long long>(round_half_away(drop_ratio * droppable), droppable));
  if (n_drop > 0) {
    std::vector<int> pool(static_cast<std::size_t>(droppable));
    std::iota(pool.begin(), pool.end(), 1);  // positions within kept
    std::vector<bool> drop(kept.size(), false);
    for (int i = 0; i < n_drop; ++i) {
      const std::uint64_t j = i + rng.next_below(static_cast<std::uint64_t>(droppable - i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
      drop[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])] = true;
    }
    std::vector<int> filtered;
    filtered.reserve(kept.size() - static_cast<std::size_t>(n_drop));
    for (std::size_t k = 0; k < kept.size(); ++k)
      if (!drop[k]) filtered.push_back(kept[k]);
    kept.swap(filtered);
  }
  return restrict_cloud(cloud, kept);
}

}  // namespace fae
