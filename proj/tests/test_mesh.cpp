#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fae/mesh.hpp"
#include "fae/rng.hpp"

using namespace fae;

namespace {

PointCloudFunction line_cloud(int I, int m = 1) {
  PointCloudFunction c;
  c.domain = Domain::unit_box(1);
  c.coords.resize(1, I);
  c.values.resize(m, I);
  for (int i = 0; i < I; ++i) {
    c.coords(0, i) = I == 1 ? 0.0 : static_cast<double>(i) / (I - 1);
    for (int r = 0; r < m; ++r) c.values(r, i) = std::sin(0.3 * i + r);
  }
  return c;
}

}  // namespace

TEST_SUITE_BEGIN("mesh");

TEST_CASE("quadrature_mean of constants reproduces the constant times volume") {
  Mat v = Mat::Constant(1, 7, 4.25);
  CHECK(quadrature_mean(v, 1.0)[0] == 4.25);

  // unit square, constant 3
  Mat v2 = Mat::Constant(1, 100, 3.0);
  CHECK(quadrature_mean(v2, 1.0)[0] == 3.0);

  // volume scaling on [0,2]^2
  Domain dom;
  dom.lo = Eigen::VectorXd::Zero(2);
  dom.hi = Eigen::VectorXd::Constant(2, 2.0);
  dom.periodic = {0, 0};
  CHECK(dom.volume() == 4.0);
  CHECK(quadrature_mean(v2, dom.volume())[0] == 12.0);
}

TEST_CASE("quadrature_mean approximates the integral of x on [0,1]") {
  const int I = 1000;
  Mat v(1, I);
  for (int i = 0; i < I; ++i) v(0, i) = static_cast<double>(i) / (I - 1);
  double got = quadrature_mean(v, 1.0)[0];
  CHECK(std::abs(got - 0.5) <= 1.0 / I);
}

TEST_CASE("quadrature_mean is exactly permutation invariant") {
  Rng rng(8);
  Mat v(3, 257);
  for (int j = 0; j < v.cols(); ++j)
    for (int i = 0; i < 3; ++i) v(i, j) = rng.next_gaussian() * std::pow(10.0, rng.next_gaussian());
  Eigen::VectorXd base = quadrature_mean(v, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    Mat p = v;
    // Fisher-Yates column shuffle
    for (int i = static_cast<int>(p.cols()) - 1; i > 0; --i) {
      int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
      p.col(i).swap(p.col(j));
    }
    Eigen::VectorXd got = quadrature_mean(p, 2.0);
    for (int r = 0; r < 3; ++r) CHECK(got[r] == base[r]);
  }
}

TEST_CASE("quadrature_mean rejects empty input") {
  Mat empty(2, 0);
  CHECK_THROWS_AS(quadrature_mean(empty, 1.0), std::invalid_argument);
}

TEST_CASE("complement masks partition the index set") {
  Rng rng(5);
  MaskPair mp = make_mask(10, MaskMode::kComplement, 0.3, 0.0, rng);
  CHECK(mp.enc.size() == 3);
  CHECK(mp.dec.size() == 7);
  std::set<int> all(mp.enc.begin(), mp.enc.end());
  all.insert(mp.dec.begin(), mp.dec.end());
  CHECK(all.size() == 10);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 9);
  CHECK(std::is_sorted(mp.enc.begin(), mp.enc.end()));
  CHECK(std::is_sorted(mp.dec.begin(), mp.dec.end()));
  for (int e : mp.enc) CHECK(std::find(mp.dec.begin(), mp.dec.end(), e) == mp.dec.end());

  // partition holds across many draws and sizes
  for (int trial = 0; trial < 200; ++trial) {
    int count = 2 + static_cast<int>(rng.next_below(50));
    MaskPair q = make_mask(count, MaskMode::kComplement, 0.4, 0.0, rng);
    std::set<int> u(q.enc.begin(), q.enc.end());
    u.insert(q.dec.begin(), q.dec.end());
    CHECK(static_cast<int>(u.size()) == count);
    CHECK(static_cast<int>(q.enc.size() + q.dec.size()) == count);
  }
}

TEST_CASE("mask mode none keeps every index on both sides") {
  Rng rng(1);
  MaskPair mp = make_mask(6, MaskMode::kNone, 0.0, 0.0, rng);
  CHECK(mp.enc == std::vector<int>({0, 1, 2, 3, 4, 5}));
  CHECK(mp.dec == mp.enc);
}

TEST_CASE("random mask sizes follow the rounding rule") {
  Rng rng(2);
  MaskPair mp = make_mask(100, MaskMode::kRandom, 0.05, 0.5, rng);
  CHECK(mp.enc.size() == 5);
  CHECK(mp.dec.size() == 50);
  MaskPair tiny = make_mask(10, MaskMode::kRandom, 0.01, 1.0, rng);
  CHECK(tiny.enc.size() == 1);  // max(1, round(0.1))
  CHECK(tiny.dec.size() == 10);
}

TEST_CASE("each index lands in the encoder mask with frequency r_enc") {
  Rng rng(1234);
  const int I = 10, draws = 10000;
  const double r = 0.3;
  std::vector<int> hits(I, 0);
  for (int t = 0; t < draws; ++t) {
    MaskPair mp = make_mask(I, MaskMode::kComplement, r, 0.0, rng);
    for (int e : mp.enc) hits[static_cast<std::size_t>(e)]++;
  }
  const double se = std::sqrt(r * (1 - r) / draws);
  for (int i = 0; i < I; ++i) {
    double freq = static_cast<double>(hits[static_cast<std::size_t>(i)]) / draws;
    CHECK(std::abs(freq - r) <= 3 * se);
  }
}

TEST_CASE("mask ratio contract violations throw") {
  Rng rng(3);
  CHECK_THROWS_AS(make_mask(10, MaskMode::kComplement, 0.0, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_mask(10, MaskMode::kComplement, 1.0, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_mask(10, MaskMode::kRandom, 0.5, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_mask(10, MaskMode::kRandom, 0.5, 1.5, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_mask(0, MaskMode::kNone, 0.5, 0.5, rng), std::invalid_argument);
}

TEST_CASE("subsample_drop with neutral settings is the identity") {
  Rng rng(4);
  PointCloudFunction c = line_cloud(17, 2);
  PointCloudFunction s = subsample_drop(c, 1, 0.0, rng);
  CHECK(s.points() == 17);
  CHECK((s.coords - c.coords).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.values - c.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("subsample_drop halves 513 points to 257 including the first") {
  Rng rng(6);
  PointCloudFunction c = line_cloud(513);
  PointCloudFunction s = subsample_drop(c, 1, 0.5, rng);
  CHECK(s.points() == 257);
  CHECK(s.coords(0, 0) == c.coords(0, 0));
  for (int i = 1; i < s.points(); ++i) CHECK(s.coords(0, i) > s.coords(0, i - 1));
}

TEST_CASE("subsample_drop stride keeps every k-th point") {
  Rng rng(7);
  PointCloudFunction c = line_cloud(40961);
  PointCloudFunction s = subsample_drop(c, 80, 0.0, rng);
  CHECK(s.points() == 513);
  CHECK(s.coords(0, 0) == c.coords(0, 0));
  CHECK(s.coords(0, 1) == c.coords(0, 80));
  CHECK(s.coords(0, 512) == c.coords(0, 40960));
}

TEST_CASE("subsample_drop always retains the first point under heavy dropping") {
  PointCloudFunction c = line_cloud(11);
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    PointCloudFunction s = subsample_drop(c, 1, 0.9, rng);
    CHECK(s.points() == 2);  // 10 droppable, round(9) = 9 dropped
    CHECK(s.coords(0, 0) == 0.0);
    CHECK(s.coords(0, 1) > 0.0);
  }
}

TEST_CASE("subsample_drop validates its arguments") {
  Rng rng(9);
  PointCloudFunction c = line_cloud(5);
  CHECK_THROWS_AS(subsample_drop(c, 0, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(subsample_drop(c, 1, 1.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(subsample_drop(c, 1, -0.1, rng), std::invalid_argument);
}

TEST_CASE("restrict_cloud picks the requested columns") {
  PointCloudFunction c = line_cloud(6, 2);
  PointCloudFunction r = restrict_cloud(c, {0, 3, 5});
  CHECK(r.points() == 3);
  CHECK(r.coords(0, 1) == c.coords(0, 3));
  CHECK(r.values(1, 2) == c.values(1, 5));
  CHECK_THROWS_AS(restrict_cloud(c, {}), std::invalid_argument);
  CHECK_THROWS_AS(restrict_cloud(c, {6}), std::invalid_argument);
  CHECK_THROWS_AS(restrict_cloud(c, {-1}), std::invalid_argument);
}

TEST_CASE("cloud validation enforces the box and finiteness") {
  PointCloudFunction c = line_cloud(4);
  c.validate();
  PointCloudFunction bad = c;
  bad.coords(0, 2) = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.values(0, 1) = std::nan("");
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.values.resize(1, 3);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("round_half_away rounds halves away from zero") {
  CHECK(round_half_away(256.5) == 257);
  CHECK(round_half_away(-0.5) == -1);
  CHECK(round_half_away(0.49999) == 0);
  CHECK(round_half_away(2.5) == 3);
}

TEST_SUITE_END();
