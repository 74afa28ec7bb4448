#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "fae/rng.hpp"

namespace fae {

using Mat = Eigen::MatrixXd;

// Axis-aligned box domain with per-axis periodicity flags.
struct Domain {
  Eigen::VectorXd lo, hi;
  std::vector<std::uint8_t> periodic;

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const;
  void validate() const;

  static Domain unit_box(int d, bool periodic_all = false);
};

// A function sampled on a point cloud: column i of coords is a point in the
// domain, column i of values the function value there.
struct PointCloudFunction {
  Mat coords;  // d x I
  Mat values;  // m x I
  Domain domain;

  int points() const { return static_cast<int>(coords.cols()); }
  int dim() const { return static_cast<int>(coords.rows()); }
  int channels() const { return static_cast<int>(values.rows()); }
  void validate() const;
};

// |domain| times the arithmetic mean over columns. Each output row is
// accumulated in sorted value order, so the result is exactly invariant
// under column permutations.
Eigen::VectorXd quadrature_mean(const Mat& values, double volume);
Eigen::VectorXd quadrature_mean(const PointCloudFunction& cloud);

enum class MaskMode { kNone, kComplement, kRandom };

// Index subsets selecting the encoder and decoder views of a cloud.
struct MaskPair {
  std::vector<int> enc, dec;  // sorted, duplicate-free
  MaskMode mode = MaskMode::kNone;
};

// Counts use round-half-away-from-zero; the encoder always keeps >= 1 point.
// complement: dec is the exact complement of enc. random: dec is drawn
// independently with |dec| = max(1, round(r_dec*I)).
MaskPair make_mask(int count, MaskMode mode, double r_enc, double r_dec, Rng& rng);

// Columns of the cloud restricted to the given indices.
PointCloudFunction restrict_cloud(const PointCloudFunction& cloud, const std::vector<int>& idx);

// Keeps every keep_every-th point (starting from the first), then drops
// round(drop_ratio * (count-1)) of the non-initial survivors uniformly at
// random. The first point is never dropped.
PointCloudFunction subsample_drop(const PointCloudFunction& cloud, int keep_every,
                                  double drop_ratio, Rng& rng);

// Shared rounding convention for subset sizes.
long long round_half_away(double x);

}  // namespace fae
