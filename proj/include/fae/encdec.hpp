#pragma once

#include <cstdint>
#include <vector>

#include "fae/mesh.hpp"
#include "fae/net.hpp"
#include "fae/tape.hpp"

namespace fae {

// Random Fourier coordinate features. B is a fixed hyperparameter shared by
// encoder and decoder, never trained.
struct FourierFeatureMap {
  Mat B;  // k x d, iid standard normal

  int k() const { return static_cast<int>(B.rows()); }
  int d() const { return static_cast<int>(B.cols()); }
  static FourierFeatureMap create(int k, int d, std::uint64_t seed);
};

// [cos(2πBx); sin(2πBx)] per column; output is 2k x n.
Mat fourier_features(const FourierFeatureMap& map, const Mat& x);

// 1-D only: also returns the elementwise t-derivative of the features.
void fourier_features_1d_derivative(const FourierFeatureMap& map, const Mat& t,
                                    Mat& feat, Mat& dfeat);

struct GaussianLatent {
  Eigen::VectorXd mean, logdiag;
};

// Point-cloud encoder: pool a kernel net over (x, features, u) and apply a
// linear head. In gaussian mode the head emits (mean, logdiag) stacked.
struct EncoderSpec {
  int d = 1, m = 1, k = 16, d_latent = 1;
  bool gaussian = true;
  std::vector<int> kernel_hidden = {64, 64};
  int pooled = 64;

  MlpSpec kernel_spec() const;
  int head_out() const { return (gaussian ? 2 : 1) * d_latent; }
  int head_layer_index() const { return static_cast<int>(kernel_hidden.size()) + 1; }
  MlpSpec head_spec() const { return MlpSpec{{pooled, head_out()}}; }
};

// Coordinate-network decoder: per query point, feed [z; x; features(x)].
struct DecoderSpec {
  int d = 1, m = 1, k = 16, d_latent = 1;
  std::vector<int> hidden = {100, 100, 100, 100, 100};

  MlpSpec mlp_spec() const;
};

ParamStore init_encoder(const EncoderSpec& spec, std::uint64_t seed);
ParamStore init_decoder(const DecoderSpec& spec, std::uint64_t seed);

// Raw head output (d_latent, or 2*d_latent in gaussian mode).
Eigen::VectorXd encode_vector(const PointCloudFunction& cloud, const ParamStore& ps,
                              const EncoderSpec& spec, const FourierFeatureMap& map);
GaussianLatent encode_gaussian(const PointCloudFunction& cloud, const ParamStore& ps,
                               const EncoderSpec& spec, const FourierFeatureMap& map);

// Decoded values at the query coords (m x n). Each column is computed by its
// own matrix-vector products, so a value depends only on z and its own
// coordinate, bit for bit.
Mat decode_values(const Eigen::VectorXd& z, const Mat& coords, const ParamStore& ps,
                  const DecoderSpec& spec, const FourierFeatureMap& map);

// 1-D decode along a time grid, returning values and exact t-derivatives
// (chain rule through the Fourier features included).
void decode_time_path(const Eigen::VectorXd& z, const Mat& times, const ParamStore& ps,
                      const DecoderSpec& spec, const FourierFeatureMap& map,
                      Mat& g, Mat& gprime);

// Tape builders for training. tape_encode returns the head output (head_out x 1).
int tape_encode(Tape& tape, int store, const ParamStore& ps, const EncoderSpec& spec,
                const FourierFeatureMap& map, const PointCloudFunction& cloud);

// z is a d_latent x q node (q latent draws). Returns m x (q*n): draw l's
// values occupy columns [l*n, (l+1)*n). with_time_derivative seeds the 1-D
// coordinate tangent so tangent_of(result) is dg/dt.
int tape_decode(Tape& tape, int store, const ParamStore& ps, const DecoderSpec& spec,
                const FourierFeatureMap& map, int z, const Mat& coords,
                bool with_time_derivative = false);

// Spike-data encoder: mollify with a cubic B-spline bump (half-width 4 cells),
// take the argmax location (smallest index on ties), feed it to the head net.
double spike_argmax_location(const PointCloudFunction& cloud);
GaussianLatent dirac_encode(const PointCloudFunction& cloud, const ParamStore& rho,
                            const MlpSpec& rho_spec);
int tape_dirac_encode(Tape& tape, int store, const ParamStore& rho, const MlpSpec& rho_spec,
                      const PointCloudFunction& cloud);

// Spike-data decoder: net(z) -> (mu_raw, sigma_raw); mu = sigmoid(mu_raw),
// sigma = dx/sqrt(2π) + softplus(sigma_raw); output is the N(mu, sigma²) pdf
// at the coords.
double spike_sigma_floor(double dx);
Mat dirac_decode(const Eigen::VectorXd& z, const Mat& coords, const ParamStore& net,
                 const MlpSpec& net_spec, double dx);
int tape_dirac_decode(Tape& tape, int store, const ParamStore& net, const MlpSpec& net_spec,
                      int z, const Mat& coords, double dx);

double sigmoid(double x);
double softplus(double x);

// Encoder/decoder pair sharing one coordinate feature map. Tape convention
// used throughout: store 0 holds the encoder, store 1 the decoder.
struct FvaeModel {
  EncoderSpec enc_spec;
  DecoderSpec dec_spec;
  FourierFeatureMap map;
  ParamStore enc_params, dec_params;

  std::vector<const ParamStore*> stores() const { return {&enc_params, &dec_params}; }
  static FvaeModel create(const EncoderSpec& enc, const DecoderSpec& dec, std::uint64_t seed);
};

// Spike-data pair: rho net over the mollified-argmax location, spike decoder.
// In gaussian mode rho emits (mean, logdiag) stacked, otherwise the latent.
struct DiracModel {
  MlpSpec rho_spec, dec_spec;
  int d_latent = 1;
  bool gaussian = true;
  ParamStore rho_params, dec_params;

  std::vector<const ParamStore*> stores() const { return {&rho_params, &dec_params}; }
  static DiracModel create(const MlpSpec& rho, const MlpSpec& dec, int d_latent, bool gaussian,
                           std::uint64_t seed);
};

// Finite-dimensional autoencoder on plain vectors: encoder u -> (mean, logdiag),
// decoder z -> reconstruction.
struct VaeModel {
  MlpSpec enc_spec, dec_spec;
  int d_latent = 1;
  ParamStore enc_params, dec_params;

  std::vector<const ParamStore*> stores() const { return {&enc_params, &dec_params}; }
  static VaeModel create(const MlpSpec& enc, const MlpSpec& dec, int d_latent, std::uint64_t seed);
};

}  // namespace fae
