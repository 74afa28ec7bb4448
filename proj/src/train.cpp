#include "fae/train.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace fae {

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes a little-endian host");

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamShift = 1e-8;

// Dedicated shuffle stream; step streams use indices below 2^31.
constexpr std::uint64_t kShuffleStream = 0xffffffffffffffffull;

void shuffle_indices(std::vector<int>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
  }
}

// One fresh substream per Monte Carlo draw: column l comes from rng child 1+l
// (child 0 is reserved for the mask).
Mat draw_xi(int d, int q, Rng& rng) {
  Mat xi(d, q);
  for (int l = 0; l < q; ++l) {
    Rng dr = rng.substream(1 + static_cast<std::uint64_t>(l));
    for (int j = 0; j < d; ++j) xi(j, l) = dr.next_gaussian();
  }
  return xi;
}

}  // namespace

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr) {
  if (grad.size() != params.size())
    throw std::invalid_argument("adam_step: gradient size mismatch");
  if (state.m.empty() && state.t == 0) state.reset(params.size());
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  state.t += 1;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g;
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamShift);
  }
}

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("train: steps must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
  if (!(lr0 > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0))
    throw std::invalid_argument("train: decay factor must lie in (0,1]");
  if (decay_every < 1) throw std::invalid_argument("train: decay interval must be positive");
  if (mc_samples < 1) throw std::invalid_argument("train: needs at least one draw");
  if (heldout_every < 0) throw std::invalid_argument("train: held-out cadence must be nonnegative");
}

double lr_at(int step, const TrainConfig& cfg) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  const int k = step / cfg.decay_every;
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(k));
}

std::vector<MetricsRow> train_loop(const std::vector<ParamStore*>& stores, int n_samples,
                                   const TrainConfig& cfg, const SampleLoss& sample_loss,
                                   const HeldoutFn& heldout) {
  cfg.validate();
  if (n_samples < 1) throw std::invalid_argument("train_loop: empty dataset");
  if (stores.empty()) throw std::invalid_argument("train_loop: no parameter stores");
  std::vector<const ParamStore*> cstores;
  for (ParamStore* s : stores) {
    if (s == nullptr) throw std::invalid_argument("train_loop: null parameter store");
    cstores.push_back(s);
  }

  std::vector<AdamState> adam(stores.size());
  std::vector<std::vector<double>> gsum(stores.size());
  for (std::size_t k = 0; k < stores.size(); ++k) adam[k].reset(stores[k]->size());

  std::vector<int> order(static_cast<std::size_t>(n_samples));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  Rng shuffle_rng = Rng(cfg.seed).substream(kShuffleStream);

  std::vector<MetricsRow> trace;
  trace.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    const double lr = lr_at(step, cfg);
    const Rng step_rng = Rng(cfg.seed).substream(static_cast<std::uint64_t>(step));
    for (std::size_t k = 0; k < stores.size(); ++k) gsum[k].assign(stores[k]->size(), 0.0);

    double batch_loss = 0.0;
    for (int slot = 0; slot < cfg.batch_size; ++slot) {
      if (cursor == order.size()) {
        shuffle_indices(order, shuffle_rng);
        cursor = 0;
      }
      const int s = order[cursor++];
      Rng slot_rng = step_rng.substream(static_cast<std::uint64_t>(slot));
      Tape t(cstores);
      const int root = sample_loss(t, s, slot_rng);
      const double v = t.scalar(root);
      if (!std::isfinite(v))
        throw std::runtime_error("training aborted: non-finite loss at step " +
                                 std::to_string(step) + ", sample " + std::to_string(s));
      batch_loss += v;
      t.backward(root);
      for (std::size_t k = 0; k < stores.size(); ++k) {
        const std::vector<double>& g = t.grad(static_cast<int>(k));
        for (std::size_t i = 0; i < g.size(); ++i) gsum[k][i] += g[i];
      }
    }

    batch_loss /= cfg.batch_size;
    for (std::size_t k = 0; k < stores.size(); ++k) {
      for (double& g : gsum[k]) g /= cfg.batch_size;
      adam_step(stores[k]->flat, gsum[k], adam[k], lr);
    }

    MetricsRow row;
    row.step = step;
    row.lr = lr;
    row.loss = batch_loss;
    if (cfg.heldout_every > 0 && heldout &&
        ((step + 1) % cfg.heldout_every == 0 || step + 1 == cfg.steps))
      row.heldout = heldout();
    trace.push_back(row);
  }
  return trace;
}

std::vector<MetricsRow> train_sde(FvaeModel& model, const std::vector<PointCloudFunction>& paths,
                                  const SDEConfig& sde, const TrainConfig& cfg,
                                  const HeldoutFn& heldout) {
  if (paths.empty()) throw std::invalid_argument("train_sde: empty dataset");
  if (cfg.mask_mode == MaskMode::kComplement)
    throw std::invalid_argument("train_sde: complement masks do not apply to paths");
  const int dz = model.enc_spec.d_latent;
  SampleLoss loss = [&model, &paths, &sde, &cfg, dz](Tape& t, int s, Rng& rng) {
    const PointCloudFunction* view = &paths[static_cast<std::size_t>(s)];
    PointCloudFunction dropped;
    if (cfg.mask_mode == MaskMode::kRandom) {
      Rng mask_rng = rng.substream(0);
      dropped = subsample_drop(*view, 1, 1.0 - cfg.r_enc, mask_rng);
      view = &dropped;
    }
    const Mat xi = draw_xi(dz, cfg.mc_samples, rng);
    return tape_loss_sde(t, model, *view, *view, sde, xi);
  };
  return train_loop({&model.enc_params, &model.dec_params},
                    static_cast<int>(paths.size()), cfg, loss, heldout);
}

std::vector<MetricsRow> train_fae(FvaeModel& model, const std::vector<PointCloudFunction>& data,
                                  const FaeNorm& norm, const TrainConfig& cfg,
                                  const HeldoutFn& heldout) {
  if (data.empty()) throw std::invalid_argument("train_fae: empty dataset");
  SampleLoss loss = [&model, &data, &norm, &cfg](Tape& t, int s, Rng& rng) {
    const PointCloudFunction& cloud = data[static_cast<std::size_t>(s)];
    Rng mask_rng = rng.substream(0);
    const MaskPair mask = make_mask(cloud.points(), cfg.mask_mode, cfg.r_enc, cfg.r_dec, mask_rng);
    const PointCloudFunction enc = restrict_cloud(cloud, mask.enc);
    const PointCloudFunction dec = restrict_cloud(cloud, mask.dec);
    return tape_loss_fae(t, model, enc, dec, cfg.beta, norm);
  };
  return train_loop({&model.enc_params, &model.dec_params},
                    static_cast<int>(data.size()), cfg, loss, heldout);
}

std::vector<MetricsRow> train_dirac_fvae(DiracModel& model,
                                         const std::vector<PointCloudFunction>& data,
                                         const TrainConfig& cfg, const HeldoutFn& heldout) {
  if (data.empty()) throw std::invalid_argument("train_dirac_fvae: empty dataset");
  const int dz = model.d_latent;
  SampleLoss loss = [&model, &data, &cfg, dz](Tape& t, int s, Rng& rng) {
    const Mat xi = draw_xi(dz, cfg.mc_samples, rng);
    return tape_loss_whitenoise(t, model, data[static_cast<std::size_t>(s)], cfg.beta, xi);
  };
  return train_loop({&model.rho_params, &model.dec_params},
                    static_cast<int>(data.size()), cfg, loss, heldout);
}

std::vector<MetricsRow> train_dirac_fae(DiracModel& model,
                                        const std::vector<PointCloudFunction>& data,
                                        const FaeNorm& norm, const TrainConfig& cfg,
                                        const HeldoutFn& heldout) {
  if (data.empty()) throw std::invalid_argument("train_dirac_fae: empty dataset");
  SampleLoss loss = [&model, &data, &norm, &cfg](Tape& t, int s, Rng&) {
    const PointCloudFunction& cloud = data[static_cast<std::size_t>(s)];
    return tape_loss_fae_dirac(t, model, cloud, cloud, cfg.beta, norm);
  };
  return train_loop({&model.rho_params, &model.dec_params},
                    static_cast<int>(data.size()), cfg, loss, heldout);
}

std::vector<MetricsRow> train_bip(FvaeModel& model, const std::vector<BipSample>& data,
                                  const SpectralOperator& op, const Mat& dec_coords,
                                  const TrainConfig& cfg, const HeldoutFn& heldout) {
  if (data.empty()) throw std::invalid_argument("train_bip: empty dataset");
  const int dz = model.enc_spec.d_latent;
  SampleLoss loss = [&model, &data, &op, &dec_coords, &cfg, dz](Tape& t, int s, Rng& rng) {
    const BipSample& sample = data[static_cast<std::size_t>(s)];
    const Mat xi = draw_xi(dz, cfg.mc_samples, rng);
    return tape_loss_bip(t, model, sample.cloud, sample.coeffs, op, dec_coords, xi);
  };
  return train_loop({&model.enc_params, &model.dec_params},
                    static_cast<int>(data.size()), cfg, loss, heldout);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("metrics: cannot write " + path);
  os << "step,lr,loss,heldout_mse\n";
  char buf[128];
  for (const MetricsRow& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,", row.step, row.lr, row.loss);
    os << buf;
    if (!std::isnan(row.heldout)) {
      std::snprintf(buf, sizeof(buf), "%.17g", row.heldout);
      os << buf;
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("metrics: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'F', 'A', 'E', 'C'};
constexpr char kGmmMagic[4] = {'G', 'M', 'M', 'X'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_doubles(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

template <typename T>
T get_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void get_doubles(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
}

void put_store(std::ostream& os, const ParamStore& ps) {
  put_pod<std::uint64_t>(os, ps.flat.size());
  put_doubles(os, ps.flat.data(), ps.flat.size());
  put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ps.layout.size()));
  for (const LayerLayout& l : ps.layout) {
    put_pod<std::uint16_t>(os, static_cast<std::uint16_t>(l.name.size()));
    os.write(l.name.data(), static_cast<std::streamsize>(l.name.size()));
    put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.out));
    put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.in));
  }
}

ParamStore get_store(std::istream& is) {
  ParamStore ps;
  const std::uint64_t n = get_pod<std::uint64_t>(is);
  ps.flat.resize(static_cast<std::size_t>(n));
  get_doubles(is, ps.flat.data(), ps.flat.size());
  const std::uint32_t layers = get_pod<std::uint32_t>(is);
  std::size_t off = 0;
  for (std::uint32_t i = 0; i < layers; ++i) {
    LayerLayout l;
    const std::uint16_t len = get_pod<std::uint16_t>(is);
    l.name.resize(len);
    is.read(l.name.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    l.out = static_cast<int>(get_pod<std::uint32_t>(is));
    l.in = static_cast<int>(get_pod<std::uint32_t>(is));
    l.w_off = off;
    off += static_cast<std::size_t>(l.out) * static_cast<std::size_t>(l.in);
    l.b_off = off;
    off += static_cast<std::size_t>(l.out);
    ps.layout.push_back(std::move(l));
  }
  ps.validate();
  return ps;
}

void require_same_shape(const ParamStore& got, const ParamStore& want, const char* which) {
  const std::string tag(which);
  if (got.flat.size() != want.flat.size())
    throw std::runtime_error("checkpoint: " + tag + " parameter count mismatch");
  if (got.layout.size() != want.layout.size())
    throw std::runtime_error("checkpoint: " + tag + " layer count mismatch");
  for (std::size_t i = 0; i < got.layout.size(); ++i) {
    const LayerLayout& a = got.layout[i];
    const LayerLayout& b = want.layout[i];
    if (a.name != b.name || a.out != b.out || a.in != b.in)
      throw std::runtime_error("checkpoint: " + tag + " layer mismatch at " + b.name);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(kMagic, 4);
  put_pod<std::uint32_t>(os, kVersion);
  put_pod<std::uint64_t>(os, ck.config_text.size());
  os.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
  put_pod<std::uint64_t>(os, static_cast<std::uint64_t>(ck.fourier.size()));
  put_doubles(os, ck.fourier.data(), static_cast<std::size_t>(ck.fourier.size()));
  put_store(os, ck.theta);
  put_store(os, ck.psi);
  if (ck.has_gmm) {
    ck.gmm.validate();
    os.write(kGmmMagic, 4);
    put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ck.gmm.components()));
    put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ck.gmm.dim()));
    put_doubles(os, ck.gmm.weights.data(), static_cast<std::size_t>(ck.gmm.weights.size()));
    put_doubles(os, ck.gmm.means.data(), static_cast<std::size_t>(ck.gmm.means.size()));
    put_doubles(os, ck.gmm.vars.data(), static_cast<std::size_t>(ck.gmm.vars.size()));
  }
  os.flush();
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot read " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = get_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ck;
  const std::uint64_t cfg_len = get_pod<std::uint64_t>(is);
  ck.config_text.resize(static_cast<std::size_t>(cfg_len));
  is.read(ck.config_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  const std::uint64_t feat = get_pod<std::uint64_t>(is);
  ck.fourier.resize(static_cast<Eigen::Index>(feat));
  get_doubles(is, ck.fourier.data(), static_cast<std::size_t>(feat));
  ck.theta = get_store(is);
  ck.psi = get_store(is);

  is.read(magic, 4);
  if (is.gcount() == 0) return ck;  // no trailer
  if (is.gcount() != 4 || std::memcmp(magic, kGmmMagic, 4) != 0)
    throw std::runtime_error("checkpoint: unrecognised trailer in " + path);
  const std::uint32_t k = get_pod<std::uint32_t>(is);
  const std::uint32_t d = get_pod<std::uint32_t>(is);
  ck.gmm.weights.resize(k);
  ck.gmm.means.resize(d, k);
  ck.gmm.vars.resize(d, k);
  get_doubles(is, ck.gmm.weights.data(), k);
  get_doubles(is, ck.gmm.means.data(), static_cast<std::size_t>(d) * k);
  get_doubles(is, ck.gmm.vars.data(), static_cast<std::size_t>(d) * k);
  ck.gmm.validate();
  ck.has_gmm = true;
  char extra;
  is.read(&extra, 1);
  if (is.gcount() != 0) throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return ck;
}

Checkpoint make_checkpoint(const FvaeModel& model, const std::string& config_text) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.fourier = Eigen::Map<const Eigen::VectorXd>(model.map.B.data(), model.map.B.size());
  ck.theta = model.enc_params;
  ck.psi = model.dec_params;
  return ck;
}

Checkpoint make_checkpoint(const DiracModel& model, const std::string& config_text) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.theta = model.rho_params;
  ck.psi = model.dec_params;
  return ck;
}

void restore_checkpoint(const Checkpoint& ck, FvaeModel& model) {
  require_same_shape(ck.theta, model.enc_params, "encoder");
  require_same_shape(ck.psi, model.dec_params, "decoder");
  if (ck.fourier.size() != model.map.B.size())
    throw std::runtime_error("checkpoint: feature matrix size mismatch");
  model.map.B = Eigen::Map<const Mat>(ck.fourier.data(), model.map.B.rows(), model.map.B.cols());
  model.enc_params.flat = ck.theta.flat;
  model.dec_params.flat = ck.psi.flat;
}

void restore_checkpoint(const Checkpoint& ck, DiracModel& model) {
  require_same_shape(ck.theta, model.rho_params, "location net");
  require_same_shape(ck.psi, model.dec_params, "decoder");
  if (ck.fourier.size() != 0)
    throw std::runtime_error("checkpoint: unexpected feature matrix for a spike model");
  model.rho_params.flat = ck.theta.flat;
  model.dec_params.flat = ck.psi.flat;
}

}  // namespace fae
