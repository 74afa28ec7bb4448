#include "fae/gradcheck.hpp"

#include <algorithm>

#include "fae/datagen.hpp"
#include "fae/encdec.hpp"
#include "fae/losses.hpp"
#include "fae/mesh.hpp"
#include "fae/net.hpp"
#include "fae/rng.hpp"

namespace fae {
namespace {

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.next_gaussian();
  return m;
}

// Builds the loss on a fresh tape, backpropagates, and packages the result
// for fd_gradient_check.
double check_tape(std::vector<ParamStore*> stores, const std::function<int(Tape&)>& build,
                  double step = 1e-6) {
  auto loss = [&]() {
    std::vector<const ParamStore*> cs(stores.begin(), stores.end());
    Tape tape(cs);
    int root = build(tape);
    tape.backward(root);
    LossEval ev;
    ev.value = tape.scalar(root);
    for (std::size_t s = 0; s < stores.size(); ++s) ev.grads.push_back(tape.grad(s));
    return ev;
  };
  return fd_gradient_check(loss, stores, step);
}

FvaeModel small_fvae(std::uint64_t seed, bool gaussian) {
  EncoderSpec enc;
  enc.d = 1;
  enc.m = 1;
  enc.k = 3;
  enc.d_latent = 2;
  enc.gaussian = gaussian;
  enc.kernel_hidden = {6};
  enc.pooled = 5;
  DecoderSpec dec;
  dec.d = 1;
  dec.m = 1;
  dec.k = 3;
  dec.d_latent = 2;
  dec.hidden = {7};
  return FvaeModel::create(enc, dec, seed);
}

PointCloudFunction random_path(int n, double u0, Rng& rng) {
  PointCloudFunction p;
  p.coords.resize(1, n);
  p.values.resize(1, n);
  for (int i = 0; i < n; ++i) {
    p.coords(0, i) = static_cast<double>(i) / (n - 1);
    p.values(0, i) = (i == 0) ? u0 : u0 + 0.4 * rng.next_gaussian();
  }
  p.domain.lo = Eigen::VectorXd::Zero(1);
  p.domain.hi = Eigen::VectorXd::Ones(1);
  p.domain.periodic = {0};
  return p;
}

PointCloudFunction random_field(int n, Rng& rng) {
  PointCloudFunction c;
  c.coords.resize(1, n);
  c.values.resize(1, n);
  for (int i = 0; i < n; ++i) {
    c.coords(0, i) = static_cast<double>(i + 1) / (n + 1);
    c.values(0, i) = rng.next_gaussian();
  }
  c.domain = Domain::unit_box(1);
  return c;
}

}  // namespace

std::vector<GradcheckRow> gradcheck_losses(std::uint64_t seed) {
  std::vector<GradcheckRow> rows;
  Rng rng(seed);

  {
    VaeModel model = VaeModel::create(MlpSpec{{4, 8, 6}}, MlpSpec{{3, 8, 4}}, 3, seed + 11);
    Eigen::VectorXd u = random_mat(4, 1, rng).col(0);
    const Mat xi = random_mat(3, 2, rng);
    rows.push_back({"vae_gaussian",
                    check_tape({&model.enc_params, &model.dec_params}, [&](Tape& t) {
                      return tape_loss_vae(t, model, u, 0.7, xi);
                    })});
  }

  {
    FvaeModel model = small_fvae(seed + 23, true);
    PointCloudFunction path = random_path(9, 0.3, rng);
    SDEConfig cfg;
    cfg.eps = 0.9;
    cfg.T = 1.0;
    cfg.kappa = 0.8;
    cfg.lambda = 1.3;
    cfg.beta = 1.1;
    cfg.u0 = Eigen::VectorXd::Constant(1, 0.3);
    const Mat xi = random_mat(2, 2, rng);
    rows.push_back({"sde", check_tape({&model.enc_params, &model.dec_params}, [&](Tape& t) {
                      return tape_loss_sde(t, model, path, path, cfg, xi);
                    })});
  }

  {
    FvaeModel model = small_fvae(seed + 37, true);
    PointCloudFunction cloud = random_field(10, rng);
    SpectralOperator op;
    op.multipliers.resize(5);
    for (int j = 0; j < 5; ++j) op.multipliers(j) = 0.5 + rng.next_uniform();
    Eigen::VectorXd coeffs = random_mat(5, 1, rng).col(0);
    Mat dec_coords(1, 12);
    for (int i = 0; i < 12; ++i) dec_coords(0, i) = static_cast<double>(i + 1) / 13.0;
    const Mat xi = random_mat(2, 2, rng);
    rows.push_back({"bip", check_tape({&model.enc_params, &model.dec_params}, [&](Tape& t) {
                      return tape_loss_bip(t, model, cloud, coeffs, op, dec_coords, xi);
                    })});
  }

  {
    DiracModel model = DiracModel::create(MlpSpec{{1, 6, 2}}, MlpSpec{{1, 6, 2}}, 1, true,
                                          seed + 41);
    PointCloudFunction cloud = gen_dirac_dataset(8)[3];
    const Mat xi = random_mat(1, 3, rng);
    rows.push_back({"whitenoise",
                    check_tape({&model.rho_params, &model.dec_params}, [&](Tape& t) {
                      return tape_loss_whitenoise(t, model, cloud, 1e-2, xi);
                    })});
  }

  {
    FvaeModel model = small_fvae(seed + 53, false);
    PointCloudFunction cloud = random_field(10, rng);
    FaeNorm norm;
    rows.push_back({"fae", check_tape({&model.enc_params, &model.dec_params}, [&](Tape& t) {
                      return tape_loss_fae(t, model, cloud, cloud, 0.5, norm);
                    })});
  }

  return rows;
}

double gradcheck_time_derivative(std::uint64_t seed) {
  FvaeModel model = small_fvae(seed + 67, true);
  Rng rng(seed);
  Eigen::VectorXd z = random_mat(2, 1, rng).col(0);
  Mat times(1, 11);
  for (int i = 0; i < 11; ++i) times(0, i) = 0.05 + 0.9 * i / 10.0;
  Mat g, gp;
  decode_time_path(z, times, model.dec_params, model.dec_spec, model.map, g, gp);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 11; ++i) {
    Mat up(1, 1), dn(1, 1);
    up(0, 0) = times(0, i) + h;
    dn(0, 0) = times(0, i) - h;
    const double fd = (decode_values(z, up, model.dec_params, model.dec_spec, model.map)(0, 0) -
                       decode_values(z, dn, model.dec_params, model.dec_spec, model.map)(0, 0)) /
                      (2.0 * h);
    const double err = std::abs(gp(0, i) - fd) / std::max(1.0, std::abs(gp(0, i)));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace fae
