#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fae/encdec.hpp"
#include "fae/genmodel.hpp"
#include "fae/losses.hpp"
#include "fae/mesh.hpp"
#include "fae/train.hpp"

namespace fae {

// Configuration document shared by the train subcommand, the presets, and the
// checkpoints (which embed the text so downstream subcommands can rebuild the
// model and its data distribution). Unknown keys are an error.
struct ModelConfig {
  int d_latent = 1;
  std::vector<int> encoder_widths = {64, 64};  // kernel hidden widths; pooled dim = last entry
  std::vector<int> decoder_widths = {100, 100, 100, 100, 100};
  int fourier_k = 16;
  std::uint64_t fourier_seed = 1;
};

// kind selects the objective and the model family:
//   sde, bip        -> function autoencoder with a gaussian encoder
//   fae             -> function autoencoder with a deterministic encoder
//   dirac_fvae      -> spike model with a gaussian location head
//   dirac_fae       -> spike model with a deterministic location head
struct LossConfig {
  std::string kind;
  double beta = 1.0;
  double lambda = 0.0;
  double kappa = 0.0;
  double epsilon = 1.0;
  int mc_samples = 1;
  double sobolev_s = 0.0;  // 0: plain L2 misfit for the fae kinds
};

struct TrainKeys {
  int steps = 1000;
  int batch = 16;
  double lr = 1e-3;
  double decay = 1.0;
  int decay_every = 1000;
  std::uint64_t seed = 0;
};

struct MaskConfig {
  MaskMode mode = MaskMode::kNone;
  double r_enc = 1.0;
  double r_dec = 1.0;
};

// Synthetic data source; used by the presets and by eval subcommands that
// need fresh simulations. kind "none" means the run is driven by data files.
struct DataConfig {
  std::string kind = "none";  // none | sde1d | sde2d | dirac | darcy | grf1d
  int n_train = 0;
  int n_heldout = 0;
  double T = 0.0;
  int dt_steps = 8192;  // internal integrator steps per unit time
  int keep_every = 1;
  double drop = 0.0;
  std::vector<double> u0;
  int resolution = 64;  // dirac mesh size
  int grid = 47;        // darcy cells per side
  double tau_sq = 9.0;
  double alpha = 2.0;
  int modes = 32;
  double scale = 1.0;
  int points = 129;  // grf1d mesh size
};

struct CliConfig {
  ModelConfig model;
  LossConfig loss;
  TrainKeys train;
  MaskConfig mask;
  DataConfig data;
};

// Strict JSON reader: known groups model/loss/train/mask/data, unknown keys
// and out-of-range values throw std::runtime_error naming the key. loss.kind
// is required.
CliConfig parse_config(const std::string& path);
CliConfig parse_config_text(const std::string& text);

// Mask specifier "none" | "random:R" | "complement:R".
MaskConfig parse_mask_spec(const std::string& spec);

// Mesh specifier: "grid:AxB" (cell-centred on the unit square, x fastest),
// "grid:N" (cell-centred on the unit interval), or the path of a cloud file
// whose first sample's coordinates are used.
Mat parse_mesh_spec(const std::string& spec);

// Model family selected by cfg.loss.kind, sized for d-dimensional input with
// m channels. Parameters are seeded from cfg.train.seed; the feature matrix
// from cfg.model.fourier_seed.
struct BuiltModel {
  bool is_dirac = false;
  FvaeModel fvae;
  DiracModel dirac;

  std::vector<ParamStore*> stores();
};
BuiltModel build_model(const CliConfig& cfg, int d, int m);

// Input dimension / channel count implied by a data kind.
void data_dims(const DataConfig& data, int& d, int& m);

// Deterministic stream splitter for deriving purpose-specific seeds (data,
// init, training, evaluation) from one user seed.
std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t tag);

// Fixed purpose tags; changing a value would change every seeded artefact.
constexpr std::uint64_t kSeedData = 1;     // training dataset
constexpr std::uint64_t kSeedHeldout = 2;  // held-out dataset
constexpr std::uint64_t kSeedInit = 3;     // parameter initialisation
constexpr std::uint64_t kSeedTrain = 4;    // minibatching and objective noise
constexpr std::uint64_t kSeedEval = 5;     // evaluation-time masking
constexpr std::uint64_t kSeedGmm = 6;      // latent mixture fitting
constexpr std::uint64_t kSeedSim = 7;      // reference simulations
constexpr std::uint64_t kSeedGen = 8;      // decoder-side generation

// Optimiser settings implied by a config (mask and objective knobs included).
TrainConfig train_config_from(const CliConfig& cfg);

// Simulation and path-objective settings; requires an sde data kind.
SDEConfig sde_config_from(const CliConfig& cfg);

// Misfit norm for the fae kinds; n_points sets the sine truncation when the
// config requests a Sobolev norm.
FaeNorm fae_norm_from(const CliConfig& cfg, int n_points);

// Trains bm on the dataset per cfg.loss.kind (sde, fae, dirac_fvae,
// dirac_fae); the bip kind is coefficient-based and rejected here. When a
// held-out callback is given, heldout_every = 0 means evaluate only at the end.
std::vector<MetricsRow> train_model(const CliConfig& cfg, BuiltModel& bm,
                                    const std::vector<PointCloudFunction>& data,
                                    const HeldoutFn& heldout = {}, int heldout_every = 0);

// Checkpoint plus the model rebuilt from its embedded config.
struct LoadedModel {
  CliConfig cfg;
  BuiltModel model;
  Checkpoint ck;
};
LoadedModel load_model(const std::string& checkpoint_path);

// Synthetic dataset for cfg.data.kind (the sde temperature comes from
// loss.epsilon). Deterministic in seed. n <= 0 yields an empty set; kind
// none throws. The dirac kind ignores n: its dataset is one sample per mesh
// point of data.resolution.
std::vector<PointCloudFunction> gen_data(const CliConfig& cfg, int n, std::uint64_t seed);

// Sine-basis covariance shared by the coefficient sampler and the spectral
// training objective: eigenvalues (pi j)^-2, j = 1..modes.
SpectralOperator bip_operator(int modes);

// Random fields u = sum_j a_j sqrt(2) sin(pi j x) with a_j = sqrt(lambda_j) xi_j
// on the zero-boundary mesh of data.points, paired with their coefficients.
std::vector<BipSample> gen_bip_dataset(const DataConfig& data, int n, std::uint64_t seed);

// Uniform time mesh 0..T with data.T*dt_steps/keep_every + 1 points (the
// resolution of the training paths before dropping); override with a point
// count > 0.
Mat sde_time_mesh(const DataConfig& data, int points_override = -1);

// First-crossing ensembles: n_gen decoder-side draws on the training time
// mesh and n_sim fresh simulations at the integrator resolution. The two
// streams split from seed with kSeedGen / kSeedSim.
void crossing_ensembles(const CliConfig& cfg, const FvaeModel& model, const GaussianMixture* mix,
                        int n_gen, int n_sim, std::uint64_t seed, std::vector<double>& gen,
                        std::vector<double>& sim);

// n decoder-side paths and n fresh simulations thinned to the training mesh,
// for transition-matrix comparisons. Seed split as in crossing_ensembles.
void msm_ensembles(const CliConfig& cfg, const FvaeModel& model, const GaussianMixture* mix,
                   int n, std::uint64_t seed, std::vector<PointCloudFunction>& gen,
                   std::vector<PointCloudFunction>& dns);

// Distributional comparison of the scalar field summaries (max value, L2
// norm) of generated samples against a held-out set on the held-out mesh.
struct QoiEval {
  std::vector<double> gen_q1, gen_q2, held_q1, held_q2;
  double w1_q1 = 0.0, w1_q2 = 0.0;
  double sd_q1 = 0.0, sd_q2 = 0.0;  // held-out population SDs
};
QoiEval eval_darcy_qoi(const FvaeModel& model, const GaussianMixture* mix,
                       const std::vector<PointCloudFunction>& held, int n_gen,
                       std::uint64_t seed);

// Entry point used by the binary and the tests. Exit codes: 0 success,
// 1 usage error (message on standard error), 2 runtime error.
int run_cli(int argc, const char* const* argv);

}  // namespace fae
