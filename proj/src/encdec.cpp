#include "fae/encdec.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fae {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

FourierFeatureMap FourierFeatureMap::create(int k, int d, std::uint64_t seed) {
  if (k < 0 || d < 1) throw std::invalid_argument("fourier map needs k >= 0 and d >= 1");
  FourierFeatureMap map;
  map.B.resize(k, d);
  Rng rng(seed);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < k; ++i) map.B(i, j) = rng.next_gaussian();
  return map;
}

Mat fourier_features(const FourierFeatureMap& map, const Mat& x) {
  if (x.rows() != map.d()) throw std::invalid_argument("fourier_features: point dimension mismatch");
  Mat arg = kTwoPi * (map.B * x);
  Mat out(2 * map.k(), x.cols());
  out.topRows(map.k()) = arg.array().cos();
  out.bottomRows(map.k()) = arg.array().sin();
  return out;
}

void fourier_features_1d_derivative(const FourierFeatureMap& map, const Mat& t,
                                    Mat& feat, Mat& dfeat) {
  if (map.d() != 1 || t.rows() != 1)
    throw std::invalid_argument("fourier feature derivative needs a 1-D map and row of times");
  Mat arg = kTwoPi * (map.B * t);
  const int k = map.k();
  feat.resize(2 * k, t.cols());
  dfeat.resize(2 * k, t.cols());
  feat.topRows(k) = arg.array().cos();
  feat.bottomRows(k) = arg.array().sin();
  // d/dt cos(2πB t) = −2πB sin, d/dt sin(2πB t) = 2πB cos
  dfeat.topRows(k) = (-kTwoPi) * feat.bottomRows(k).cwiseProduct(map.B.replicate(1, t.cols()));
  dfeat.bottomRows(k) = kTwoPi * feat.topRows(k).cwiseProduct(map.B.replicate(1, t.cols()));
}

MlpSpec EncoderSpec::kernel_spec() const {
  std::vector<int> w;
  w.push_back(d + 2 * k + m);
  w.insert(w.end(), kernel_hidden.begin(), kernel_hidden.end());
  w.push_back(pooled);
  return MlpSpec{std::move(w)};
}

MlpSpec DecoderSpec::mlp_spec() const {
  std::vector<int> w;
  w.push_back(d_latent + d + 2 * k);
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(m);
  return MlpSpec{std::move(w)};
}

ParamStore init_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  if (spec.d_latent < 1 || spec.pooled < 1) throw std::invalid_argument("encoder spec widths must be positive");
  ParamStore ps;
  Rng root(seed);
  MlpSpec kernel = spec.kernel_spec();
  append_mlp(ps, kernel, "kernel", root, 0);
  append_mlp(ps, spec.head_spec(), "head", root, static_cast<std::size_t>(kernel.n_layers()));
  ps.validate();
  return ps;
}

ParamStore init_decoder(const DecoderSpec& spec, std::uint64_t seed) {
  if (spec.d_latent < 1 || spec.m < 1) throw std::invalid_argument("decoder spec widths must be positive");
  return init_params(spec.mlp_spec(), seed);
}

namespace {

Mat encoder_input(const PointCloudFunction& cloud, const EncoderSpec& spec,
                  const FourierFeatureMap& map) {
  if (cloud.points() < 1) throw std::invalid_argument("encode of empty cloud");
  if (cloud.dim() != spec.d || cloud.channels() != spec.m)
    throw std::invalid_argument("cloud shape does not match encoder spec");
  Mat in(spec.d + 2 * spec.k + spec.m, cloud.points());
  in.topRows(spec.d) = cloud.coords;
  in.middleRows(spec.d, 2 * spec.k) = fourier_features(map, cloud.coords);
  in.bottomRows(spec.m) = cloud.values;
  return in;
}

}  // namespace

Eigen::VectorXd encode_vector(const PointCloudFunction& cloud, const ParamStore& ps,
                              const EncoderSpec& spec, const FourierFeatureMap& map) {
  Mat in = encoder_input(cloud, spec, map);
  Mat pooled_feats = eval_net(ps, spec.kernel_spec(), in, 0);
  Eigen::VectorXd pooled = cloud.domain.volume() * pooled_feats.rowwise().mean();
  Mat head = eval_net(ps, spec.head_spec(), pooled, spec.kernel_spec().n_layers());
  return head.col(0);
}

GaussianLatent encode_gaussian(const PointCloudFunction& cloud, const ParamStore& ps,
                               const EncoderSpec& spec, const FourierFeatureMap& map) {
  if (!spec.gaussian) throw std::invalid_argument("encoder spec is not in gaussian mode");
  Eigen::VectorXd v = encode_vector(cloud, ps, spec, map);
  GaussianLatent out;
  out.mean = v.head(spec.d_latent);
  out.logdiag = v.tail(spec.d_latent);
  return out;
}

int tape_encode(Tape& tape, int store, const ParamStore& ps, const EncoderSpec& spec,
                const FourierFeatureMap& map, const PointCloudFunction& cloud) {
  Mat in = encoder_input(cloud, spec, map);
  int h = tape_mlp(tape, store, ps, spec.kernel_spec(), tape.constant(std::move(in)), 0);
  int pooled = tape.mean_cols(h, cloud.domain.volume());
  return tape_mlp(tape, store, ps, spec.head_spec(), pooled, spec.kernel_spec().n_layers());
}

Mat decode_values(const Eigen::VectorXd& z, const Mat& coords, const ParamStore& ps,
                  const DecoderSpec& spec, const FourierFeatureMap& map) {
  if (z.size() != spec.d_latent) throw std::invalid_argument("decode: latent dimension mismatch");
  if (coords.rows() != spec.d) throw std::invalid_argument("decode: coordinate dimension mismatch");
  Mat feats = fourier_features(map, coords);
  const MlpSpec net = spec.mlp_spec();
  Mat out(spec.m, coords.cols());
  Mat in(net.input_dim(), 1);
  in.topRows(spec.d_latent) = z;
  // one column at a time: the value at a coordinate must not depend on which
  // other coordinates were requested alongside it
  for (Eigen::Index j = 0; j < coords.cols(); ++j) {
    in.middleRows(spec.d_latent, spec.d) = coords.col(j);
    in.bottomRows(2 * spec.k) = feats.col(j);
    out.col(j) = eval_net(ps, net, in, 0);
  }
  return out;
}

void decode_time_path(const Eigen::VectorXd& z, const Mat& times, const ParamStore& ps,
                      const DecoderSpec& spec, const FourierFeatureMap& map,
                      Mat& g, Mat& gprime) {
  if (spec.d != 1 || times.rows() != 1)
    throw std::invalid_argument("decode_time_path needs a 1-D decoder and row of times");
  if (z.size() != spec.d_latent) throw std::invalid_argument("decode: latent dimension mismatch");
  Mat feat, dfeat;
  fourier_features_1d_derivative(map, times, feat, dfeat);
  const MlpSpec net = spec.mlp_spec();
  Mat in(net.input_dim(), times.cols()), dir(net.input_dim(), times.cols());
  in.topRows(spec.d_latent).colwise() = z;
  in.middleRows(spec.d_latent, 1) = times;
  in.bottomRows(2 * spec.k) = feat;
  dir.setZero();
  dir.middleRows(spec.d_latent, 1).setOnes();
  dir.bottomRows(2 * spec.k) = dfeat;
  eval_net_jvp(ps, net, in, dir, g, gprime, 0);
}

int tape_decode(Tape& tape, int store, const ParamStore& ps, const DecoderSpec& spec,
                const FourierFeatureMap& map, int z, const Mat& coords,
                bool with_time_derivative) {
  if (tape.value(z).rows() != spec.d_latent)
    throw std::invalid_argument("tape_decode: latent dimension mismatch");
  if (coords.rows() != spec.d) throw std::invalid_argument("tape_decode: coordinate dimension mismatch");
  const int q = static_cast<int>(tape.value(z).cols());
  const int n = static_cast<int>(coords.cols());
  int zrep = tape.repeat_cols(z, n);
  Mat cfeat(spec.d + 2 * spec.k, n);
  int cnode;
  if (with_time_derivative) {
    if (spec.d != 1) throw std::invalid_argument("tape_decode: time derivative needs d = 1");
    Mat feat, dfeat;
    fourier_features_1d_derivative(map, coords, feat, dfeat);
    cfeat.topRows(1) = coords;
    cfeat.bottomRows(2 * spec.k) = feat;
    Mat ctan(spec.d + 2 * spec.k, n);
    ctan.topRows(1).setOnes();
    ctan.bottomRows(2 * spec.k) = dfeat;
    cnode = tape.constant_dual(cfeat.replicate(1, q), ctan.replicate(1, q));
  } else {
    cfeat.topRows(spec.d) = coords;
    cfeat.bottomRows(2 * spec.k) = fourier_features(map, coords);
    cnode = tape.constant(cfeat.replicate(1, q));
  }
  int in = tape.concat_rows({zrep, cnode});
  return tape_mlp(tape, store, ps, spec.mlp_spec(), in, 0);
}

namespace {

// Cubic B-spline bump b(s), support |s| < 2; the mesh convolution below uses
// s = offset/2, giving a half-width of 4 cells.
double bspline(double s) {
  s = std::abs(s);
  if (s >= 2.0) return 0.0;
  if (s >= 1.0) {
    const double t = 2.0 - s;
    return t * t * t / 6.0;
  }
  return 2.0 / 3.0 - s * s + 0.5 * s * s * s;
}

}  // namespace

double spike_argmax_location(const PointCloudFunction& cloud) {
  if (cloud.dim() != 1 || cloud.channels() != 1)
    throw std::invalid_argument("spike encoder needs a scalar function on a 1-D mesh");
  const int I = cloud.points();
  if (I < 1) throw std::invalid_argument("spike encoder on empty cloud");
  double best = -std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i < I; ++i) {
    double acc = 0.0;
    for (int o = -3; o <= 3; ++o) {
      const int j = i + o;
      if (j < 0 || j >= I) continue;  // zero beyond the mesh
      acc += bspline(0.5 * o) * cloud.values(0, j);
    }
    if (acc > best) {  // strict: ties keep the smallest index
      best = acc;
      best_i = i;
    }
  }
  return cloud.coords(0, best_i);
}

GaussianLatent dirac_encode(const PointCloudFunction& cloud, const ParamStore& rho,
                            const MlpSpec& rho_spec) {
  const int out = rho_spec.output_dim();
  if (out < 2 || out % 2 != 0)
    throw std::invalid_argument("spike encoder head must emit (mean, logdiag)");
  Mat x(1, 1);
  x(0, 0) = spike_argmax_location(cloud);
  Mat v = eval_net(rho, rho_spec, x, 0);
  GaussianLatent latent;
  latent.mean = v.topRows(out / 2).col(0);
  latent.logdiag = v.bottomRows(out / 2).col(0);
  return latent;
}

// Raw head output; gaussian callers slice (mean, logdiag) halves, deterministic
// ones use it as the latent directly.
int tape_dirac_encode(Tape& tape, int store, const ParamStore& rho, const MlpSpec& rho_spec,
                      const PointCloudFunction& cloud) {
  Mat x(1, 1);
  x(0, 0) = spike_argmax_location(cloud);
  return tape_mlp(tape, store, rho, rho_spec, tape.constant(std::move(x)), 0);
}

double spike_sigma_floor(double dx) {
  if (dx <= 0.0) throw std::invalid_argument("mesh spacing must be positive");
  return kInvSqrt2Pi * dx;
}

Mat dirac_decode(const Eigen::VectorXd& z, const Mat& coords, const ParamStore& net,
                 const MlpSpec& net_spec, double dx) {
  if (z.size() != net_spec.input_dim()) throw std::invalid_argument("spike decode: latent dimension mismatch");
  if (coords.rows() != 1) throw std::invalid_argument("spike decode: coords must be a row vector");
  const double floor = spike_sigma_floor(dx);
  Mat h = eval_net(net, net_spec, z, 0);
  const double mu = sigmoid(h(0, 0));
  const double sg = floor + softplus(h(1, 0));
  Mat out(1, coords.cols());
  for (Eigen::Index j = 0; j < coords.cols(); ++j) {
    const double r = (coords(0, j) - mu) / sg;
    out(0, j) = kInvSqrt2Pi / sg * std::exp(-0.5 * r * r);
  }
  return out;
}

int tape_dirac_decode(Tape& tape, int store, const ParamStore& net, const MlpSpec& net_spec,
                      int z, const Mat& coords, double dx) {
  const double floor = spike_sigma_floor(dx);
  if (net_spec.output_dim() != 2) throw std::invalid_argument("spike decoder net must emit (mu_raw, sigma_raw)");
  int h = tape_mlp(tape, store, net, net_spec, z, 0);
  int mu = tape.sigmoid(tape.slice_rows(h, 0, 1));
  int sg = tape.shift(floor, tape.softplus(tape.slice_rows(h, 1, 1)));
  return tape.gauss_pdf(mu, sg, coords);
}

FvaeModel FvaeModel::create(const EncoderSpec& enc, const DecoderSpec& dec, std::uint64_t seed) {
  if (enc.d != dec.d || enc.m != dec.m || enc.k != dec.k || enc.d_latent != dec.d_latent)
    throw std::invalid_argument("FvaeModel: encoder and decoder specs disagree");
  FvaeModel model;
  model.enc_spec = enc;
  model.dec_spec = dec;
  model.map = FourierFeatureMap::create(enc.k, enc.d, seed);
  model.enc_params = init_encoder(enc, seed + 1);
  model.dec_params = init_decoder(dec, seed + 2);
  return model;
}

DiracModel DiracModel::create(const MlpSpec& rho, const MlpSpec& dec, int d_latent, bool gaussian,
                              std::uint64_t seed) {
  if (d_latent < 1) throw std::invalid_argument("DiracModel: d_latent must be positive");
  if (rho.input_dim() != 1) throw std::invalid_argument("DiracModel: rho net takes the scalar spike location");
  if (rho.output_dim() != (gaussian ? 2 : 1) * d_latent)
    throw std::invalid_argument("DiracModel: rho output does not match the latent head");
  if (dec.input_dim() != d_latent) throw std::invalid_argument("DiracModel: decoder input is the latent");
  if (dec.output_dim() != 2) throw std::invalid_argument("DiracModel: decoder must emit (mu_raw, sigma_raw)");
  DiracModel model;
  model.rho_spec = rho;
  model.dec_spec = dec;
  model.d_latent = d_latent;
  model.gaussian = gaussian;
  model.rho_params = init_params(rho, seed + 1);
  model.dec_params = init_params(dec, seed + 2);
  return model;
}

VaeModel VaeModel::create(const MlpSpec& enc, const MlpSpec& dec, int d_latent, std::uint64_t seed) {
  if (d_latent < 1) throw std::invalid_argument("VaeModel: d_latent must be positive");
  if (enc.output_dim() != 2 * d_latent)
    throw std::invalid_argument("VaeModel: encoder must emit (mean, logdiag)");
  if (dec.input_dim() != d_latent) throw std::invalid_argument("VaeModel: decoder input is the latent");
  if (enc.input_dim() != dec.output_dim())
    throw std::invalid_argument("VaeModel: reconstruction dimension mismatch");
  VaeModel model;
  model.enc_spec = enc;
  model.dec_spec = dec;
  model.d_latent = d_latent;
  model.enc_params = init_params(enc, seed + 1);
  model.dec_params = init_params(dec, seed + 2);
  return model;
}

}  // namespace fae
