#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fae/gelu.hpp"
#include "fae/net.hpp"
#include "fae/rng.hpp"

using namespace fae;

namespace {

// Index-loop reference: plain triple loops, no Eigen products.
Mat eval_reference(const ParamStore& ps, const MlpSpec& spec, const Mat& x) {
  Mat h = x;
  const int L = static_cast<int>(spec.widths.size()) - 1;
  for (int l = 0; l < L; ++l) {
    const LayerLayout& ll = ps.layout[l];
    Mat out(ll.out, h.cols());
    for (int j = 0; j < h.cols(); ++j) {
      for (int r = 0; r < ll.out; ++r) {
        double acc = ps.flat[ll.b_off + r];
        for (int c = 0; c < ll.in; ++c)
          acc += ps.flat[ll.w_off + static_cast<std::size_t>(c) * ll.out + r] * h(c, j);
        out(r, j) = acc;
      }
    }
    if (l + 1 < L)
      for (int j = 0; j < out.cols(); ++j)
        for (int i = 0; i < out.rows(); ++i) out(i, j) = gelu_full(out(i, j)).y;
    h = out;
  }
  return h;
}

}  // namespace

TEST_SUITE_BEGIN("net");

TEST_CASE("layout tiles the flat vector exactly") {
  MlpSpec spec{{3, 7, 7, 2}};
  auto layout = mlp_layout(spec);
  REQUIRE(layout.size() == 3);
  std::size_t expect = 0;
  for (std::size_t l = 0; l < layout.size(); ++l) {
    CHECK(layout[l].w_off == expect);
    expect += layout[l].out * layout[l].in + layout[l].out;
    CHECK(layout[l].b_off + layout[l].out == expect);
    CHECK(layout[l].in == spec.widths[l]);
    CHECK(layout[l].out == spec.widths[l + 1]);
  }
  ParamStore ps = init_params(spec, 1);
  CHECK(ps.flat.size() == expect);
}

TEST_CASE("zero weights reduce to the output bias") {
  MlpSpec spec{{2, 4, 3}};
  ParamStore ps = init_params(spec, 2);
  std::fill(ps.flat.begin(), ps.flat.end(), 0.0);
  const LayerLayout& last = ps.layout.back();
  ps.flat[last.b_off + 0] = 1.5;
  ps.flat[last.b_off + 1] = -2.0;
  ps.flat[last.b_off + 2] = 0.25;
  Mat x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  Mat y = eval_net(ps, spec, x);
  for (int j = 0; j < 3; ++j) {
    CHECK(y(0, j) == 1.5);
    CHECK(y(1, j) == -2.0);
    CHECK(y(2, j) == 0.25);
  }
}

TEST_CASE("eval_net matches the index-loop reference") {
  MlpSpec spec{{4, 9, 8, 3}};
  ParamStore ps = init_params(spec, 77);
  Rng rng(13);
  Mat x(4, 6);
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 4; ++i) x(i, j) = rng.next_gaussian();
  Mat got = eval_net(ps, spec, x);
  Mat want = eval_reference(ps, spec, x);
  REQUIRE(got.rows() == want.rows());
  REQUIRE(got.cols() == want.cols());
  CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("jvp matches central finite differences") {
  MlpSpec spec{{3, 8, 8, 2}};
  ParamStore ps = init_params(spec, 5);
  Rng rng(6);
  Mat x(3, 4), dir(3, 4);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 3; ++i) {
      x(i, j) = rng.next_gaussian();
      dir(i, j) = rng.next_gaussian();
    }
  Mat val, tan;
  eval_net_jvp(ps, spec, x, dir, val, tan);
  CHECK((val - eval_net(ps, spec, x)).cwiseAbs().maxCoeff() == 0.0);
  const double h = 1e-6;
  Mat fd = (eval_net(ps, spec, x + h * dir) - eval_net(ps, spec, x - h * dir)) / (2 * h);
  double scale = std::max(1.0, tan.cwiseAbs().maxCoeff());
  CHECK((tan - fd).cwiseAbs().maxCoeff() / scale <= 1e-6);
}

TEST_CASE("init draws have the expected scale") {
  MlpSpec spec{{64, 64, 64}};
  ParamStore ps = init_params(spec, 123);
  for (const LayerLayout& ll : ps.layout) {
    const double lim = std::sqrt(6.0 / (ll.in + ll.out));
    double sumsq = 0.0, mx = 0.0;
    const std::size_t n = static_cast<std::size_t>(ll.out) * ll.in;
    for (std::size_t k = 0; k < n; ++k) {
      double w = ps.flat[ll.w_off + k];
      sumsq += w * w;
      mx = std::max(mx, std::abs(w));
    }
    CHECK(mx <= lim);
    // uniform on [-lim, lim] has variance lim^2/3 = 2/(in+out)
    double var = sumsq / n;
    CHECK(var == doctest::Approx(lim * lim / 3.0).epsilon(0.10));
    for (int k = 0; k < ll.out; ++k) CHECK(ps.flat[ll.b_off + k] == 0.0);
  }
}

TEST_CASE("same seed gives bit-identical params, different seeds differ") {
  MlpSpec spec{{5, 10, 5}};
  ParamStore a = init_params(spec, 42);
  ParamStore b = init_params(spec, 42);
  ParamStore c = init_params(spec, 43);
  REQUIRE(a.flat.size() == b.flat.size());
  for (std::size_t i = 0; i < a.flat.size(); ++i) CHECK(a.flat[i] == b.flat[i]);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.flat.size(); ++i) any_diff |= (a.flat[i] != c.flat[i]);
  CHECK(any_diff);
}

TEST_CASE("width mismatches are rejected") {
  MlpSpec spec{{3, 4, 2}};
  ParamStore ps = init_params(spec, 1);
  Mat bad(2, 5);
  bad.setZero();
  CHECK_THROWS_AS(eval_net(ps, spec, bad), std::invalid_argument);
  CHECK_THROWS_AS(init_params(MlpSpec{{3}}, 1), std::invalid_argument);
}

TEST_SUITE_END();
