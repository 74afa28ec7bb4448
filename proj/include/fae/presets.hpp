#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fae/cli.hpp"

namespace fae {

struct PresetOptions {
  std::uint64_t seed = 0;
  std::string out_dir;
  int steps = -1;       // -1: preset default
  int resolution = -1;  // dirac presets only
  std::string variant;  // msm2d: "" (main) or "appendix"
  int threads = 1;
};

struct PresetOutcome {
  std::string checkpoint_file;
  std::map<std::string, double> summary;
};

// Built-in experiment configurations. Each run generates its data, trains,
// saves out_dir/checkpoint.ckpt + metrics.csv + summary.csv (+ preset-specific
// CSVs), and returns the summary values. Everything except run.log is
// bit-identical across runs with the same options.
// Names: dirac-fvae, dirac-fae, sde1d, msm2d, darcy-fae, bip-demo.
PresetOutcome run_preset(const std::string& name, const PresetOptions& options);

// The configuration document a preset trains with, after applying overrides.
CliConfig preset_config(const std::string& name, const PresetOptions& options);

}  // namespace fae
