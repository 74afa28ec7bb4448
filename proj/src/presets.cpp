#include "fae/presets.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fae/analysis.hpp"
#include "fae/genmodel.hpp"
#include "fae/losses.hpp"

namespace fae {

namespace {

using nlohmann::json;

std::string now_stamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tmv{};
  gmtime_r(&t, &tmv);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tmv);
  return buf;
}

json sde_train_block(std::uint64_t seed) {
  return {{"steps", 20000}, {"batch", 32},          {"lr", 1e-3},
          {"decay", 0.98},  {"decay_every", 1000},  {"seed", seed}};
}

std::string preset_text(const std::string& name, const PresetOptions& options) {
  if (!options.variant.empty() && name != "msm2d")
    throw std::runtime_error("preset: " + name + " has no variants");
  if (options.resolution > 0 && name != "dirac-fvae" && name != "dirac-fae")
    throw std::runtime_error("preset: only the dirac presets take a resolution");

  json doc;
  if (name == "sde1d") {
    doc["model"] = {{"d_latent", 1},
                    {"encoder_widths", {64, 64}},
                    {"decoder_widths", {100, 100, 100, 100, 100}},
                    {"fourier_k", 16},
                    {"fourier_seed", 1}};
    doc["loss"] = {{"kind", "sde"}, {"beta", 1.2},    {"lambda", 10.0},
                   {"kappa", 25.0}, {"epsilon", 1.0}, {"mc_samples", 4}};
    doc["train"] = sde_train_block(options.seed);
    doc["data"] = {{"kind", "sde1d"}, {"n_train", 2048},  {"n_heldout", 256},
                   {"T", 5.0},        {"dt_steps", 8192}, {"keep_every", 80},
                   {"drop", 0.5},     {"u0", {-1.0}}};
  } else if (name == "msm2d") {
    const bool appendix = options.variant == "appendix";
    if (!options.variant.empty() && !appendix)
      throw std::runtime_error("preset: msm2d variants are '' and appendix");
    doc["model"] = {{"d_latent", 16},
                    {"encoder_widths", {64, 64}},
                    {"decoder_widths", {100, 100, 100, 100, 100}},
                    {"fourier_k", 16},
                    {"fourier_seed", 1}};
    doc["loss"] = {{"kind", "sde"},
                   {"beta", appendix ? 10.0 : 0.02},
                   {"lambda", 50.0},
                   {"kappa", appendix ? 50.0 : 100.0},
                   {"epsilon", 0.1},
                   {"mc_samples", 4}};
    doc["train"] = sde_train_block(options.seed);
    doc["data"] = {{"kind", "sde2d"}, {"n_train", 2048},  {"n_heldout", 256},
                   {"T", 3.0},        {"dt_steps", 8192}, {"keep_every", 48},
                   {"drop", 0.5},     {"u0", {0.0, 0.0}}};
  } else if (name == "dirac-fvae" || name == "dirac-fae") {
    const bool fae = name == "dirac-fae";
    const int resolution = options.resolution > 0 ? options.resolution : 64;
    doc["model"] = {{"d_latent", 1},
                    {"encoder_widths", {128, 128, 128}},
                    {"decoder_widths", {128, 128, 128}}};
    if (fae)
      doc["loss"] = {{"kind", "dirac_fae"}, {"beta", 1e-12}, {"sobolev_s", -1.0}};
    else
      doc["loss"] = {{"kind", "dirac_fvae"}, {"beta", 1e-4}, {"mc_samples", 16}};
    doc["train"] = {{"steps", 30000},          {"batch", 6},
                    {"lr", 1e-4},              {"decay", fae ? 0.9 : 0.7},
                    {"decay_every", 1000},     {"seed", options.seed}};
    doc["data"] = {{"kind", "dirac"},
                   {"resolution", resolution},
                   {"n_train", resolution},
                   {"n_heldout", 0}};
  } else if (name == "darcy-fae") {
    doc["model"] = {{"d_latent", 64},
                    {"encoder_widths", {64, 64}},
                    {"decoder_widths", {100, 100, 100, 100, 100}},
                    {"fourier_k", 16},
                    {"fourier_seed", 1}};
    doc["loss"] = {{"kind", "fae"}, {"beta", 1e-3}};
    doc["train"] = sde_train_block(options.seed);
    doc["mask"] = {{"mode", "complement"}, {"r_enc", 0.3}, {"r_dec", 1.0}};
    doc["data"] = {{"kind", "darcy"}, {"n_train", 512}, {"n_heldout", 256},
                   {"grid", 47},      {"tau_sq", 9.0},  {"alpha", 2.0},
                   {"modes", 32},     {"scale", 1.0}};
  } else if (name == "bip-demo") {
    doc["model"] = {{"d_latent", 4},
                    {"encoder_widths", {64, 64}},
                    {"decoder_widths", {64, 64}},
                    {"fourier_k", 16},
                    {"fourier_seed", 1}};
    doc["loss"] = {{"kind", "bip"}, {"beta", 1.0}, {"mc_samples", 4}};
    doc["train"] = {{"steps", 2000},       {"batch", 16}, {"lr", 1e-3},
                    {"decay", 1.0},        {"decay_every", 1000},
                    {"seed", options.seed}};
    doc["data"] = {{"kind", "grf1d"}, {"n_train", 256}, {"n_heldout", 64},
                   {"points", 129},   {"modes", 32}};
  } else {
    throw std::runtime_error(
        "preset: unknown name " + name +
        " (expected dirac-fvae, dirac-fae, sde1d, msm2d, darcy-fae, or bip-demo)");
  }
  if (options.steps >= 0) doc["train"]["steps"] = options.steps;
  return doc.dump(2) + "\n";
}

double final_loss_of(const std::vector<MetricsRow>& trace) {
  return trace.empty() ? std::numeric_limits<double>::quiet_NaN() : trace.back().loss;
}

// Mean training objective over the last tenth of the run; steadier than the
// single final batch.
double tail_mean_loss(const std::vector<MetricsRow>& trace) {
  if (trace.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t tail = std::max<std::size_t>(1, trace.size() / 10);
  double acc = 0.0;
  for (std::size_t i = trace.size() - tail; i < trace.size(); ++i) acc += trace[i].loss;
  return acc / static_cast<double>(tail);
}

void write_summary_csv(const std::string& path, const std::map<std::string, double>& summary) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "key,value\n");
  for (const auto& [key, value] : summary) std::fprintf(f, "%s,%.17g\n", key.c_str(), value);
  std::fclose(f);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

CliConfig preset_config(const std::string& name, const PresetOptions& options) {
  return parse_config_text(preset_text(name, options));
}

PresetOutcome run_preset(const std::string& name, const PresetOptions& options) {
  if (options.out_dir.empty()) throw std::runtime_error("preset: an output directory is needed");
  if (options.threads < 1) throw std::runtime_error("preset: threads must be >= 1");
  namespace fs = std::filesystem;

  const std::string config_text = preset_text(name, options);
  const CliConfig cfg = parse_config_text(config_text);

  fs::create_directories(options.out_dir);
  const fs::path dir(options.out_dir);
  write_text((dir / "config.json").string(), config_text);
  std::string log = now_stamp() + " preset " + name + " start\n";
  const auto tic = std::chrono::steady_clock::now();

  PresetOutcome outcome;
  outcome.checkpoint_file = (dir / "checkpoint.ckpt").string();
  Checkpoint ck;

  if (name == "bip-demo") {
    const auto train_set = gen_bip_dataset(cfg.data, cfg.data.n_train,
                                           seed_mix(options.seed, kSeedData));
    const auto held_set = gen_bip_dataset(cfg.data, cfg.data.n_heldout,
                                          seed_mix(options.seed, kSeedHeldout));
    std::vector<PointCloudFunction> held;
    for (const auto& s : held_set) held.push_back(s.cloud);
    BuiltModel bm = build_model(cfg, 1, 1);
    TrainConfig tc = train_config_from(cfg);
    HeldoutFn heldout;
    if (!held.empty()) {
      tc.heldout_every = std::max(1, tc.steps);
      heldout = [&bm, &held]() { return recon_mse(bm.fvae, held); };
    }
    const auto trace = train_bip(bm.fvae, train_set, bip_operator(cfg.data.modes),
                                 train_set.front().cloud.coords, tc, heldout);
    write_metrics_csv((dir / "metrics.csv").string(), trace);
    ck = make_checkpoint(bm.fvae, config_text);
    outcome.summary["final_loss"] = final_loss_of(trace);
    if (!held.empty()) outcome.summary["heldout_mse"] = recon_mse(bm.fvae, held);
  } else {
    const auto train_set = gen_data(cfg, cfg.data.n_train, seed_mix(options.seed, kSeedData));
    const auto held = gen_data(cfg, cfg.data.n_heldout, seed_mix(options.seed, kSeedHeldout));
    if (train_set.empty()) throw std::runtime_error("preset: the training set is empty");
    int d = 0, m = 0;
    data_dims(cfg.data, d, m);
    BuiltModel bm = build_model(cfg, d, m);
    HeldoutFn heldout;
    if (!held.empty())
      heldout = [&bm, &held]() {
        return bm.is_dirac ? recon_mse(bm.dirac, held) : recon_mse(bm.fvae, held);
      };
    const auto trace = train_model(cfg, bm, train_set, heldout, 0);
    write_metrics_csv((dir / "metrics.csv").string(), trace);
    ck = bm.is_dirac ? make_checkpoint(bm.dirac, config_text)
                     : make_checkpoint(bm.fvae, config_text);
    outcome.summary["final_loss"] = final_loss_of(trace);
    if (!held.empty())
      outcome.summary["heldout_mse"] =
          bm.is_dirac ? recon_mse(bm.dirac, held) : recon_mse(bm.fvae, held);

    if (name == "sde1d") {
      outcome.summary["pointwise_var"] = pointwise_variance(held, cfg.data.dt_steps);
      std::vector<double> gen, sim;
      crossing_ensembles(cfg, bm.fvae, nullptr, 1024, 1024, options.seed, gen, sim);
      outcome.summary["w1_t0"] = wasserstein1(gen, sim);
      double gsum = 0.0, ssum = 0.0;
      for (double v : gen) gsum += v;
      for (double v : sim) ssum += v;
      outcome.summary["t0_gen_mean"] = gsum / static_cast<double>(gen.size());
      outcome.summary["t0_sim_mean"] = ssum / static_cast<double>(sim.size());
      const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(512, 0.0, cfg.data.T);
      write_kde_csv((dir / "t0_kde.csv").string(), xs, kde_scott(gen, xs));
      write_kde_csv((dir / "t0_kde_sim.csv").string(), xs, kde_scott(sim, xs));
    } else if (name == "msm2d") {
      std::vector<PointCloudFunction> gpaths, dpaths;
      msm_ensembles(cfg, bm.fvae, nullptr, 2048, options.seed, gpaths, dpaths);
      const TransitionMatrix tg = msm_transition(gpaths);
      const TransitionMatrix td = msm_transition(dpaths);
      int excluded = 0;
      outcome.summary["msm_gap"] = msm_gap(tg, td, 50, &excluded);
      outcome.summary["msm_rows_excluded"] = excluded;
      write_matrix_csv((dir / "msm_model.csv").string(), tg.probs);
      write_matrix_csv((dir / "msm_dns.csv").string(), td.probs);
      const Mat counts = td.counts.cast<double>();
      write_matrix_csv((dir / "msm_dns_counts.csv").string(), counts);
    } else if (name == "dirac-fvae" || name == "dirac-fae") {
      outcome.summary["resolution"] = cfg.data.resolution;
      outcome.summary["final_objective"] = tail_mean_loss(trace);
      if (name == "dirac-fae") {
        const FaeNorm norm = fae_norm_from(cfg, train_set.front().points());
        double acc = 0.0;
        for (const auto& s : train_set)
          acc += loss_fae_dirac(bm.dirac, s, s, cfg.loss.beta, norm);
        outcome.summary["final_misfit"] = acc / static_cast<double>(train_set.size());
      }
    } else if (name == "darcy-fae") {
      Mat latents(cfg.model.d_latent, static_cast<int>(train_set.size()));
      for (std::size_t i = 0; i < train_set.size(); ++i)
        latents.col(static_cast<int>(i)) = latent_mean(bm.fvae, train_set[i]);
      ck.gmm = gmm_fit(latents, 10, 100, seed_mix(options.seed, kSeedGmm));
      ck.has_gmm = true;
      const QoiEval q = eval_darcy_qoi(bm.fvae, &ck.gmm, held, 1024, options.seed);
      outcome.summary["w1_q1"] = q.w1_q1;
      outcome.summary["w1_q2"] = q.w1_q2;
      outcome.summary["sd_q1"] = q.sd_q1;
      outcome.summary["sd_q2"] = q.sd_q2;
      Mat qg(static_cast<int>(q.gen_q1.size()), 2);
      for (int i = 0; i < qg.rows(); ++i) {
        qg(i, 0) = q.gen_q1[static_cast<std::size_t>(i)];
        qg(i, 1) = q.gen_q2[static_cast<std::size_t>(i)];
      }
      Mat qh(static_cast<int>(q.held_q1.size()), 2);
      for (int i = 0; i < qh.rows(); ++i) {
        qh(i, 0) = q.held_q1[static_cast<std::size_t>(i)];
        qh(i, 1) = q.held_q2[static_cast<std::size_t>(i)];
      }
      write_matrix_csv((dir / "qoi_gen.csv").string(), qg);
      write_matrix_csv((dir / "qoi_held.csv").string(), qh);
    }
  }

  save_checkpoint(outcome.checkpoint_file, ck);
  write_summary_csv((dir / "summary.csv").string(), outcome.summary);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
  char wall_line[64];
  std::snprintf(wall_line, sizeof wall_line, "wall_s %.3f\n", wall);
  log += now_stamp() + " preset " + name + " end\n" + wall_line;
  write_text((dir / "run.log").string(), log);
  return outcome;
}

}  // namespace fae
