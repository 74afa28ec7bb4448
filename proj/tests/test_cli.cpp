#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fae/cli.hpp"
#include "fae/fpc_io.hpp"
#include "fae/presets.hpp"

namespace fs = std::filesystem;
using namespace fae;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "fae");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string thrown_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "fae_cli_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config defaults and strictness") {
  const CliConfig cfg = parse_config_text(R"({"loss": {"kind": "fae"}})");
  CHECK(cfg.model.d_latent == 1);
  CHECK(cfg.model.fourier_k == 16);
  CHECK(cfg.model.encoder_widths == std::vector<int>{64, 64});
  CHECK(cfg.model.decoder_widths == std::vector<int>{100, 100, 100, 100, 100});
  CHECK(cfg.loss.beta == 1.0);
  CHECK(cfg.train.steps == 1000);
  CHECK(cfg.train.decay == 1.0);
  CHECK(cfg.mask.mode == MaskMode::kNone);
  CHECK(cfg.data.kind == "none");

  CHECK(thrown_message([] { parse_config_text("{}"); }).find("loss.kind") != std::string::npos);
  CHECK(thrown_message([] {
          parse_config_text(R"({"loss": {"kind": "fae"}, "model": {"widht": 3}})");
        }).find("model.widht") != std::string::npos);
  CHECK(thrown_message([] {
          parse_config_text(R"({"loss": {"kind": "fae", "beta": "big"}})");
        }).find("loss.beta") != std::string::npos);
  CHECK(thrown_message([] {
          parse_config_text(R"({"loss": {"kind": "fae"}, "train": {"decay": 1.5}})");
        }).find("train.decay") != std::string::npos);
  CHECK(thrown_message([] {
          parse_config_text(R"({"loss": {"kind": "elbo"}})");
        }).find("loss.kind") != std::string::npos);
  CHECK(thrown_message([] {
          parse_config_text(R"({"loss": {"kind": "fae"}, "mask": {"mode": "complement"}})");
        }).find("r_enc") != std::string::npos);
  CHECK(thrown_message([] { parse_config_text("not json"); }).find("config:") !=
        std::string::npos);
}

TEST_CASE("mask specs") {
  CHECK(parse_mask_spec("none").mode == MaskMode::kNone);
  const MaskConfig r = parse_mask_spec("random:0.25");
  CHECK(r.mode == MaskMode::kRandom);
  CHECK(r.r_enc == 0.25);
  const MaskConfig c = parse_mask_spec("complement:0.3");
  CHECK(c.mode == MaskMode::kComplement);
  CHECK(c.r_enc == 0.3);
  CHECK_THROWS(parse_mask_spec("half"));
  CHECK_THROWS(parse_mask_spec("random:1.5"));
  CHECK_THROWS(parse_mask_spec("complement:1"));
  CHECK_THROWS(parse_mask_spec("random:0.5x"));
}

TEST_CASE("mesh specs") {
  const Mat line = parse_mesh_spec("grid:5");
  REQUIRE(line.rows() == 1);
  REQUIRE(line.cols() == 5);
  CHECK(line(0, 0) == doctest::Approx(0.1));
  CHECK(line(0, 4) == doctest::Approx(0.9));

  const Mat grid = parse_mesh_spec("grid:4x3");
  REQUIRE(grid.rows() == 2);
  REQUIRE(grid.cols() == 12);
  CHECK(grid(0, 0) == doctest::Approx(0.125));
  CHECK(grid(1, 0) == doctest::Approx(1.0 / 6.0));
  CHECK(grid(0, 1) == doctest::Approx(0.375));  // x varies fastest
  CHECK(grid(1, 1) == doctest::Approx(1.0 / 6.0));

  const fs::path dir = fresh_dir("mesh");
  PointCloudFunction f;
  f.coords = Mat::Zero(1, 3);
  f.coords << 0.25, 0.5, 0.75;
  f.values = Mat::Ones(1, 3);
  f.domain = Domain::unit_box(1);
  write_jsonl((dir / "cloud.jsonl").string(), {f});
  const Mat from_file = parse_mesh_spec((dir / "cloud.jsonl").string());
  CHECK(from_file == f.coords);

  CHECK_THROWS(parse_mesh_spec("grid:0"));
  CHECK_THROWS(parse_mesh_spec("grid:4x"));
}

TEST_CASE("seed mixing is stable and tag-separated") {
  CHECK(seed_mix(0, kSeedData) == seed_mix(0, kSeedData));
  CHECK(seed_mix(0, kSeedData) != seed_mix(0, kSeedHeldout));
  CHECK(seed_mix(0, kSeedData) != seed_mix(1, kSeedData));
  CHECK(seed_mix(7, kSeedGen) != seed_mix(7, kSeedSim));
}

TEST_CASE("exit codes") {
  CHECK(run({}) == 1);
  CHECK(run({"frobnicate"}) == 1);
  CHECK(run({"gen", "dirac", "--no-such-flag"}) == 1);
  CHECK(run({"--help"}) == 0);
  CHECK(run({"gen", "--help"}) == 0);
  CHECK(run({"train", "--config", "/nonexistent.json", "--data", "/nonexistent.fpc", "--out",
             "/tmp/x"}) == 2);
}

TEST_CASE("gen writes readable datasets") {
  const fs::path dir = fresh_dir("gen");
  const std::string out = (dir / "spikes.fpc").string();
  CHECK(run({"gen", "dirac", "--resolution", "16", "--out", out}) == 0);
  const auto spikes = read_fpc(out);
  REQUIRE(spikes.size() == 16);
  CHECK(spikes.front().points() == 16);

  const std::string paths = (dir / "paths.jsonl").string();
  CHECK(run({"gen", "sde1d", "--T", "1", "--dt-steps", "64", "--keep-every", "8", "--n", "3",
             "--seed", "5", "--out", paths}) == 0);
  const auto sde = read_jsonl(paths);
  REQUIRE(sde.size() == 3);
  CHECK(sde.front().points() == 9);
  CHECK(sde.front().values(0, 0) == -1.0);
}

TEST_CASE("seed comes from FAE_SEED when the flag is absent") {
  const fs::path dir = fresh_dir("envseed");
  const std::string a = (dir / "a.fpc").string(), b = (dir / "b.fpc").string();
  REQUIRE(setenv("FAE_SEED", "7", 1) == 0);
  CHECK(run({"gen", "sde1d", "--T", "1", "--dt-steps", "64", "--n", "2", "--out", a}) == 0);
  REQUIRE(unsetenv("FAE_SEED") == 0);
  CHECK(run({"gen", "sde1d", "--T", "1", "--dt-steps", "64", "--n", "2", "--seed", "7", "--out",
             b}) == 0);
  CHECK(file_bytes(a) == file_bytes(b));
}

TEST_CASE("train, eval, and sample round-trip through a checkpoint") {
  const fs::path dir = fresh_dir("roundtrip");
  const std::string data = (dir / "spikes.fpc").string();
  REQUIRE(run({"gen", "dirac", "--resolution", "8", "--out", data}) == 0);
  const std::string config = (dir / "config.json").string();
  {
    std::ofstream out(config);
    out << R"({"model": {"d_latent": 1, "encoder_widths": [16], "decoder_widths": [16]},
               "loss": {"kind": "dirac_fvae", "beta": 0.001, "mc_samples": 2},
               "train": {"steps": 3, "batch": 4, "lr": 0.001},
               "data": {"kind": "dirac", "resolution": 8}})";
  }
  const std::string run_dir = (dir / "run").string();
  CHECK(run({"train", "--config", config, "--data", data, "--out", run_dir, "--heldout", data}) ==
        0);
  const std::string ck = run_dir + "/checkpoint.ckpt";
  CHECK(fs::exists(ck));
  CHECK(fs::exists(run_dir + "/metrics.csv"));
  CHECK(fs::exists(run_dir + "/run.log"));

  CHECK(run({"eval", "mse", "--checkpoint", ck, "--data", data}) == 0);
  CHECK(run({"eval", "mse", "--checkpoint", ck, "--data", data, "--mask", "random:0.5"}) == 0);
  const std::string gen_out = (dir / "gen.fpc").string();
  CHECK(run({"sample", "--checkpoint", ck, "--n", "4", "--out", gen_out}) == 0);
  CHECK(read_fpc(gen_out).size() == 4);
  const std::string interp_out = (dir / "interp.jsonl").string();
  CHECK(run({"interpolate", "--checkpoint", ck, "--input", data, "--i", "0", "--j", "7",
             "--decode", "grid:24", "--out", interp_out}) == 0);
  CHECK(read_jsonl(interp_out).size() == 5);
  const std::string recon_out = (dir / "recon.fpc").string();
  CHECK(run({"inpaint", "--checkpoint", ck, "--input", data, "--index", "2", "--mask",
             "random:0.5", "--decode", "grid:8", "--out", recon_out}) == 0);
  CHECK(read_fpc(recon_out).front().points() == 8);
}

TEST_CASE("presets are bit-reproducible") {
  const fs::path dir = fresh_dir("preset");
  PresetOptions opt;
  opt.steps = 2;
  opt.seed = 3;
  opt.out_dir = (dir / "a").string();
  const PresetOutcome a = run_preset("bip-demo", opt);
  opt.out_dir = (dir / "b").string();
  const PresetOutcome b = run_preset("bip-demo", opt);
  CHECK(a.summary.at("final_loss") == b.summary.at("final_loss"));
  CHECK(a.summary.count("heldout_mse") == 1);
  for (const char* name : {"checkpoint.ckpt", "metrics.csv", "summary.csv", "config.json"})
    CHECK(file_bytes(dir / "a" / name) == file_bytes(dir / "b" / name));
  CHECK_THROWS(run_preset("unknown", opt));
  PresetOptions bad = opt;
  bad.variant = "appendix";
  CHECK_THROWS(run_preset("bip-demo", bad));
}

TEST_CASE("preset configs honour overrides") {
  PresetOptions opt;
  opt.seed = 11;
  opt.steps = 17;
  const CliConfig sde = preset_config("sde1d", opt);
  CHECK(sde.loss.kind == "sde");
  CHECK(sde.loss.beta == 1.2);
  CHECK(sde.loss.kappa == 25.0);
  CHECK(sde.train.steps == 17);
  CHECK(sde.train.seed == 11);
  CHECK(sde.data.keep_every == 80);

  PresetOptions dopt;
  dopt.resolution = 32;
  const CliConfig dirac = preset_config("dirac-fae", dopt);
  CHECK(dirac.loss.kind == "dirac_fae");
  CHECK(dirac.loss.sobolev_s == -1.0);
  CHECK(dirac.data.resolution == 32);
  CHECK(dirac.data.n_train == 32);

  PresetOptions mopt;
  mopt.variant = "appendix";
  const CliConfig msm = preset_config("msm2d", mopt);
  CHECK(msm.loss.beta == 10.0);
  CHECK(msm.loss.kappa == 50.0);
  const CliConfig main_msm = preset_config("msm2d", PresetOptions{});
  CHECK(main_msm.loss.beta == 0.02);
  CHECK(main_msm.loss.kappa == 100.0);
}

}  // TEST_SUITE
