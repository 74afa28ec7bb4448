#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fae/datagen.hpp"
#include "fae/train.hpp"

using namespace fae;

namespace {

FvaeModel tiny_model(int d_latent, unsigned seed, bool gaussian = false) {
  EncoderSpec enc;
  enc.d = 1;
  enc.m = 1;
  enc.k = 3;
  enc.d_latent = d_latent;
  enc.gaussian = gaussian;
  enc.kernel_hidden = {8};
  enc.pooled = 6;
  DecoderSpec dec;
  dec.d = 1;
  dec.m = 1;
  dec.k = 3;
  dec.d_latent = d_latent;
  dec.hidden = {8};
  return FvaeModel::create(enc, dec, seed);
}

std::vector<PointCloudFunction> sine_dataset(int n_samples, int n_points) {
  std::vector<PointCloudFunction> data;
  for (int s = 0; s < n_samples; ++s) {
    PointCloudFunction c;
    c.coords.resize(1, n_points);
    c.values.resize(1, n_points);
    for (int i = 0; i < n_points; ++i) {
      const double x = static_cast<double>(i) / (n_points - 1);
      c.coords(0, i) = x;
      c.values(0, i) = 0.2 * (s + 1) * std::sin(6.283185307179586 * x) + 0.1 * s;
    }
    c.domain = Domain::unit_box(1);
    data.push_back(std::move(c));
  }
  return data;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(static_cast<bool>(is));
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

double mean_loss(const std::vector<MetricsRow>& trace, std::size_t lo, std::size_t hi) {
  double sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) sum += trace[i].loss;
  return sum / (hi - lo);
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("first update matches the bias-corrected closed form") {
  Rng rng(4);
  std::vector<double> params(7), grad(7), before;
  for (int i = 0; i < 7; ++i) {
    params[i] = rng.next_gaussian();
    grad[i] = rng.next_gaussian();
  }
  before = params;
  AdamState st;
  const double lr = 1e-3;
  adam_step(params, grad, st, lr);
  for (int i = 0; i < 7; ++i) {
    const double want = -lr * grad[i] / (std::abs(grad[i]) + 1e-8);
    CHECK(std::abs((params[i] - before[i]) - want) <= 1e-12);
  }

  SUBCASE("zero gradients never move the parameters") {
    std::vector<double> zero(7, 0.0);
    AdamState fresh;
    before = params;
    for (int k = 0; k < 10; ++k) adam_step(params, zero, fresh, lr);
    for (int i = 0; i < 7; ++i) CHECK(params[i] == before[i]);
  }

  SUBCASE("size mismatches throw") {
    std::vector<double> short_grad(3, 0.0);
    CHECK_THROWS_AS(adam_step(params, short_grad, st, lr), std::invalid_argument);
    AdamState bad;
    bad.reset(3);
    CHECK_THROWS_AS(adam_step(params, grad, bad, lr), std::invalid_argument);
  }
}

TEST_CASE("a quadratic bowl is driven to its minimum") {
  std::vector<double> x = {0.6, -0.4, 0.3, -0.2};
  const std::vector<double> c = {-0.1, 0.25, 0.0, 0.35};
  AdamState st;
  std::vector<double> grad(4);
  for (int step = 0; step < 500; ++step) {
    for (int i = 0; i < 4; ++i) grad[i] = x[i] - c[i];
    adam_step(x, grad, st, 1e-2);
  }
  double gnorm = 0.0;
  for (int i = 0; i < 4; ++i) gnorm += (x[i] - c[i]) * (x[i] - c[i]);
  CHECK(std::sqrt(gnorm) < 1e-6);
}

TEST_CASE("staircase schedule") {
  TrainConfig cfg;
  cfg.lr0 = 0.1;
  cfg.decay_factor = 0.98;
  cfg.decay_every = 1000;
  CHECK(lr_at(0, cfg) == 0.1);
  CHECK(lr_at(999, cfg) == 0.1);
  CHECK(std::abs(lr_at(1000, cfg) - 0.098) <= 1e-15);
  CHECK(std::abs(lr_at(2500, cfg) - 0.1 * 0.98 * 0.98) <= 1e-15);
  CHECK_THROWS_AS(lr_at(-1, cfg), std::invalid_argument);

  TrainConfig bad = cfg;
  bad.decay_factor = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.steps = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lr0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("zero steps returns the initial state and an empty trace") {
  FvaeModel model = tiny_model(1, 3);
  const std::vector<double> enc0 = model.enc_params.flat;
  const std::vector<double> dec0 = model.dec_params.flat;
  TrainConfig cfg;
  cfg.steps = 0;
  auto trace = train_fae(model, sine_dataset(4, 9), FaeNorm{}, cfg);
  CHECK(trace.empty());
  CHECK(model.enc_params.flat == enc0);
  CHECK(model.dec_params.flat == dec0);
}

TEST_CASE("batches draw without replacement and reshuffle per epoch") {
  ParamStore dummy = init_params(MlpSpec{{1, 1}}, 0);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 2;
  cfg.lr0 = 1e-3;
  cfg.seed = 11;
  std::vector<int> seen;
  SampleLoss loss = [&seen](Tape& t, int sample, Rng&) {
    seen.push_back(sample);
    return t.constant(Mat::Constant(1, 1, 0.5));
  };
  auto trace = train_loop({&dummy}, 5, cfg, loss);
  REQUIRE(seen.size() == 10);
  for (int epoch = 0; epoch < 2; ++epoch) {
    std::vector<int> ids(seen.begin() + 5 * epoch, seen.begin() + 5 * (epoch + 1));
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<int>{0, 1, 2, 3, 4});
  }
  for (const auto& row : trace) CHECK(row.loss == 0.5);
}

TEST_CASE("a non-finite loss aborts with the step and sample named") {
  ParamStore dummy = init_params(MlpSpec{{1, 1}}, 0);
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.batch_size = 2;
  cfg.seed = 7;
  int calls = 0;
  SampleLoss loss = [&calls](Tape& t, int, Rng&) {
    const double v = (calls++ == 5) ? std::numeric_limits<double>::quiet_NaN() : 1.0;
    return t.constant(Mat::Constant(1, 1, v));
  };
  try {
    train_loop({&dummy}, 4, cfg, loss);
    FAIL("expected an abort");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 2") != std::string::npos);
    CHECK(msg.find("sample") != std::string::npos);
  }
}

TEST_CASE("toy objective training is reproducible and improves") {
  auto data = sine_dataset(8, 9);
  TrainConfig cfg;
  cfg.steps = 40;
  cfg.batch_size = 3;
  cfg.lr0 = 3e-3;
  cfg.beta = 1e-6;
  cfg.seed = 42;

  FvaeModel a = tiny_model(1, 21);
  FvaeModel b = tiny_model(1, 21);
  auto trace_a = train_fae(a, data, FaeNorm{}, cfg);
  auto trace_b = train_fae(b, data, FaeNorm{}, cfg);
  REQUIRE(trace_a.size() == 40);
  CHECK(a.enc_params.flat == b.enc_params.flat);
  CHECK(a.dec_params.flat == b.dec_params.flat);
  for (std::size_t i = 0; i < trace_a.size(); ++i) {
    CHECK(trace_a[i].loss == trace_b[i].loss);
    CHECK(trace_a[i].lr == lr_at(static_cast<int>(i), cfg));
    CHECK(std::isfinite(trace_a[i].loss));
  }
  CHECK(mean_loss(trace_a, 30, 40) < mean_loss(trace_a, 0, 10));

  SUBCASE("a different seed gives a different trajectory") {
    FvaeModel c = tiny_model(1, 21);
    TrainConfig cfg2 = cfg;
    cfg2.seed = 43;
    auto trace_c = train_fae(c, data, FaeNorm{}, cfg2);
    CHECK(c.enc_params.flat != a.enc_params.flat);
  }

  SUBCASE("random masks keep training finite and reproducible") {
    TrainConfig cfg2 = cfg;
    cfg2.mask_mode = MaskMode::kRandom;
    cfg2.r_enc = 0.5;
    cfg2.r_dec = 0.6;
    FvaeModel c = tiny_model(1, 21);
    FvaeModel d = tiny_model(1, 21);
    auto trace_c = train_fae(c, data, FaeNorm{}, cfg2);
    auto trace_d = train_fae(d, data, FaeNorm{}, cfg2);
    CHECK(c.enc_params.flat == d.enc_params.flat);
    for (const auto& row : trace_c) CHECK(std::isfinite(row.loss));
  }
}

TEST_CASE("held-out metric lands at the requested cadence") {
  auto data = sine_dataset(3, 9);
  FvaeModel model = tiny_model(1, 5);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 2;
  cfg.lr0 = 1e-3;
  cfg.heldout_every = 2;
  int evals = 0;
  auto trace = train_fae(model, data, FaeNorm{}, cfg, [&evals]() {
    ++evals;
    return 0.5;
  });
  REQUIRE(trace.size() == 4);
  CHECK(evals == 2);
  CHECK(std::isnan(trace[0].heldout));
  CHECK(trace[1].heldout == 0.5);
  CHECK(std::isnan(trace[2].heldout));
  CHECK(trace[3].heldout == 0.5);

  const std::string path = "train_metrics_test.csv";
  write_metrics_csv(path, trace);
  const std::string text = slurp(path);
  const std::string again = (write_metrics_csv(path, trace), slurp(path));
  CHECK(text == again);
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "step,lr,loss,heldout_mse");
  std::getline(lines, line);
  CHECK(line.substr(0, 2) == "0,");
  CHECK(line.back() == ',');
  std::getline(lines, line);
  CHECK(line.find(",0.5") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("spike model training stays finite and improves") {
  auto data = gen_dirac_dataset(8);
  DiracModel model = DiracModel::create(MlpSpec{{1, 8, 2}}, MlpSpec{{1, 8, 2}}, 1, true, 17);
  TrainConfig cfg;
  cfg.steps = 150;
  cfg.batch_size = 4;
  cfg.mc_samples = 4;
  cfg.lr0 = 1e-2;
  cfg.beta = 1e-4;
  cfg.seed = 9;
  auto trace = train_dirac_fvae(model, data, cfg);
  for (const auto& row : trace) CHECK(std::isfinite(row.loss));
  CHECK(mean_loss(trace, 130, 150) < mean_loss(trace, 0, 20));
}

TEST_CASE("checkpoint round trip preserves every byte") {
  FvaeModel model = tiny_model(2, 21);
  Checkpoint ck = make_checkpoint(model, "{\"train\":{\"steps\":5}}");
  ck.has_gmm = true;
  ck.gmm.weights = Eigen::VectorXd(2);
  ck.gmm.weights << 0.25, 0.75;
  ck.gmm.means = Mat(2, 2);
  ck.gmm.means << 1.0, -1.0, 0.5, 2.0;
  ck.gmm.vars = Mat::Constant(2, 2, 0.3);

  const std::string pa = "ck_test_a.bin", pb = "ck_test_b.bin";
  save_checkpoint(pa, ck);
  Checkpoint got = load_checkpoint(pa);
  CHECK(got.config_text == ck.config_text);
  CHECK((got.fourier - ck.fourier).cwiseAbs().maxCoeff() == 0.0);
  CHECK(got.theta.flat == ck.theta.flat);
  CHECK(got.psi.flat == ck.psi.flat);
  REQUIRE(got.has_gmm);
  CHECK((got.gmm.weights - ck.gmm.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK((got.gmm.means - ck.gmm.means).cwiseAbs().maxCoeff() == 0.0);
  CHECK((got.gmm.vars - ck.gmm.vars).cwiseAbs().maxCoeff() == 0.0);
  save_checkpoint(pb, got);
  CHECK(slurp(pa) == slurp(pb));

  SUBCASE("restoring transfers the trained map exactly") {
    FvaeModel other = tiny_model(2, 99);
    restore_checkpoint(got, other);
    Rng rng(1);
    Eigen::VectorXd z(2);
    z << rng.next_gaussian(), rng.next_gaussian();
    Mat coords(1, 5);
    coords << 0.0, 0.25, 0.5, 0.75, 1.0;
    Mat ga = decode_values(z, coords, model.dec_params, model.dec_spec, model.map);
    Mat gb = decode_values(z, coords, other.dec_params, other.dec_spec, other.map);
    CHECK((ga - gb).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("shape mismatches and corrupt files are rejected") {
    FvaeModel other = tiny_model(3, 99);
    CHECK_THROWS_AS(restore_checkpoint(got, other), std::runtime_error);

    std::ofstream bad(pb, std::ios::binary);
    bad << "FAEX garbage";
    bad.close();
    CHECK_THROWS_AS(load_checkpoint(pb), std::runtime_error);

    const std::string full = slurp(pa);
    std::ofstream trunc(pb, std::ios::binary);
    trunc.write(full.data(), 10);
    trunc.close();
    CHECK_THROWS_AS(load_checkpoint(pb), std::runtime_error);
  }

  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

}  // TEST_SUITE
