#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fae/encdec.hpp"
#include "fae/genmodel.hpp"
#include "fae/losses.hpp"
#include "fae/mesh.hpp"

namespace fae {

// First/second-moment accumulators for one flat parameter vector.
struct AdamState {
  std::vector<double> m, v;
  long long t = 0;

  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    t = 0;
  }
};

// One bias-corrected update (decay rates 0.9 / 0.999, denominator shift 1e-8).
// An empty state is sized on first use; a mismatched one throws.
void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr);

struct TrainConfig {
  int steps = 1000;       // 0 is allowed: return the initial state untouched
  int batch_size = 16;
  double lr0 = 1e-3;
  double decay_factor = 1.0;  // staircase multiplier, in (0, 1]
  int decay_every = 1000;
  int mc_samples = 1;
  MaskMode mask_mode = MaskMode::kNone;
  double r_enc = 1.0, r_dec = 1.0;
  double beta = 1.0;
  std::uint64_t seed = 0;
  int heldout_every = 0;  // 0: never run the held-out callback

  void validate() const;  // throws std::invalid_argument
};

// lr0 * decay_factor^floor(step / decay_every).
double lr_at(int step, const TrainConfig& cfg);

struct MetricsRow {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  // NaN when the held-out metric was not evaluated at this step.
  double heldout = std::numeric_limits<double>::quiet_NaN();
};

// Builds one sample's objective on the tape. rng is exclusive to this
// (step, batch-slot) pair; implementations split it further per draw.
using SampleLoss = std::function<int(Tape& t, int sample, Rng& rng)>;
using HeldoutFn = std::function<double()>;

// Adam over uniformly-shuffled without-replacement minibatches. The sample
// order is a fresh permutation per epoch and batches may straddle epoch
// boundaries; the per-step loss is the batch mean. Everything is deterministic
// in cfg.seed. A non-finite per-sample loss aborts with the step and sample
// named in the error. Returns one trace row per step.
std::vector<MetricsRow> train_loop(const std::vector<ParamStore*>& stores, int n_samples,
                                   const TrainConfig& cfg, const SampleLoss& sample_loss,
                                   const HeldoutFn& heldout = {});

// Path-space objective. With mask_mode = kRandom each step sees a fresh view
// of every path with round((1-r_enc)*(points-1)) non-initial points dropped;
// the view is both the encoder input and the likelihood target.
std::vector<MetricsRow> train_sde(FvaeModel& model, const std::vector<PointCloudFunction>& paths,
                                  const SDEConfig& sde, const TrainConfig& cfg,
                                  const HeldoutFn& heldout = {});

// Deterministic objective; encoder/decoder views drawn per (step, sample)
// via make_mask with cfg's mode and ratios.
std::vector<MetricsRow> train_fae(FvaeModel& model, const std::vector<PointCloudFunction>& data,
                                  const FaeNorm& norm, const TrainConfig& cfg,
                                  const HeldoutFn& heldout = {});

// Spike-data models; meshes are used in full (the spike must stay visible).
std::vector<MetricsRow> train_dirac_fvae(DiracModel& model,
                                         const std::vector<PointCloudFunction>& data,
                                         const TrainConfig& cfg, const HeldoutFn& heldout = {});
std::vector<MetricsRow> train_dirac_fae(DiracModel& model,
                                        const std::vector<PointCloudFunction>& data,
                                        const FaeNorm& norm, const TrainConfig& cfg,
                                        const HeldoutFn& heldout = {});

// Spectral objective on (observation cloud, data coefficients) pairs.
struct BipSample {
  PointCloudFunction cloud;
  Eigen::VectorXd coeffs;
};
std::vector<MetricsRow> train_bip(FvaeModel& model, const std::vector<BipSample>& data,
                                  const SpectralOperator& op, const Mat& dec_coords,
                                  const TrainConfig& cfg, const HeldoutFn& heldout = {});

// step,lr,loss,heldout_mse rows; the last column is empty where unset.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& trace);

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

// Binary snapshot of a trained pair. Layout (little-endian): magic "FAEC",
// u32 version, u64 config-text length + bytes, u64 feature-matrix element
// count + doubles (column-major), then for each store a u64 length + doubles
// and a layout table (u32 layer count, then per layer u16 name length, name
// bytes, u32 out, u32 in). An optional mixture trailer is tagged "GMMX":
// u32 components, u32 dim, then weights/means/variances as doubles.
struct Checkpoint {
  std::string config_text;
  Eigen::VectorXd fourier;  // empty for models without coordinate features
  ParamStore theta, psi;
  bool has_gmm = false;
  GaussianMixture gmm;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const FvaeModel& model, const std::string& config_text);
Checkpoint make_checkpoint(const DiracModel& model, const std::string& config_text);

// Copies parameters (and features) back into a model with matching shapes.
void restore_checkpoint(const Checkpoint& ck, FvaeModel& model);
void restore_checkpoint(const Checkpoint& ck, DiracModel& model);

}  // namespace fae
