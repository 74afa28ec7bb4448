#include "fae/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fae/analysis.hpp"
#include "fae/datagen.hpp"
#include "fae/fpc_io.hpp"
#include "fae/gradcheck.hpp"
#include "fae/presets.hpp"

namespace fae {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846264338327950288;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error("config: " + what);
}

[[noreturn]] void bad_key(const std::string& group, const std::string& key, const char* expected) {
  throw std::runtime_error("config: " + group + "." + key + " must be " + expected);
}

void check_keys(const json& obj, const std::string& group,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known)
      throw std::runtime_error("config: unknown key " +
                               (group.empty() ? it.key() : group + "." + it.key()));
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void fetch_int(const json& g, const std::string& group, const char* key, int& out) {
  if (const json* v = find(g, key)) {
    if (!v->is_number_integer()) bad_key(group, key, "an integer");
    out = v->get<int>();
  }
}

void fetch_u64(const json& g, const std::string& group, const char* key, std::uint64_t& out) {
  if (const json* v = find(g, key)) {
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0))
      bad_key(group, key, "a nonnegative integer");
    out = v->get<std::uint64_t>();
  }
}

void fetch_double(const json& g, const std::string& group, const char* key, double& out) {
  if (const json* v = find(g, key)) {
    if (!v->is_number()) bad_key(group, key, "a number");
    out = v->get<double>();
  }
}

void fetch_string(const json& g, const std::string& group, const char* key, std::string& out) {
  if (const json* v = find(g, key)) {
    if (!v->is_string()) bad_key(group, key, "a string");
    out = v->get<std::string>();
  }
}

void fetch_ivec(const json& g, const std::string& group, const char* key, std::vector<int>& out) {
  if (const json* v = find(g, key)) {
    if (!v->is_array()) bad_key(group, key, "an array of integers");
    std::vector<int> vals;
    for (const json& e : *v) {
      if (!e.is_number_integer()) bad_key(group, key, "an array of integers");
      vals.push_back(e.get<int>());
    }
    out = std::move(vals);
  }
}

void fetch_dvec(const json& g, const std::string& group, const char* key,
                std::vector<double>& out) {
  if (const json* v = find(g, key)) {
    if (!v->is_array()) bad_key(group, key, "an array of numbers");
    std::vector<double> vals;
    for (const json& e : *v) {
      if (!e.is_number()) bad_key(group, key, "an array of numbers");
      vals.push_back(e.get<double>());
    }
    out = std::move(vals);
  }
}

void validate_mask(const MaskConfig& mc) {
  require(mc.r_enc > 0.0 && mc.r_enc <= 1.0, "mask.r_enc must be in (0, 1]");
  require(mc.r_dec > 0.0 && mc.r_dec <= 1.0, "mask.r_dec must be in (0, 1]");
  if (mc.mode == MaskMode::kComplement)
    require(mc.r_enc < 1.0, "mask.r_enc must be < 1 with the complement mode");
}

bool positive_widths(const std::vector<int>& w) {
  if (w.empty()) return false;
  for (int x : w)
    if (x < 1) return false;
  return true;
}

void validate_config(const CliConfig& cfg) {
  require(cfg.model.d_latent >= 1, "model.d_latent must be >= 1");
  require(cfg.model.fourier_k >= 1, "model.fourier_k must be >= 1");
  require(positive_widths(cfg.model.encoder_widths),
          "model.encoder_widths must be a nonempty array of positive integers");
  require(positive_widths(cfg.model.decoder_widths),
          "model.decoder_widths must be a nonempty array of positive integers");

  static const std::set<std::string> kKinds = {"sde", "bip", "fae", "dirac_fvae", "dirac_fae"};
  require(kKinds.count(cfg.loss.kind) != 0,
          "loss.kind must be one of sde, bip, fae, dirac_fvae, dirac_fae");
  require(std::isfinite(cfg.loss.beta) && cfg.loss.beta > 0.0, "loss.beta must be positive");
  require(std::isfinite(cfg.loss.lambda) && cfg.loss.lambda >= 0.0,
          "loss.lambda must be nonnegative");
  require(std::isfinite(cfg.loss.kappa) && cfg.loss.kappa >= 0.0,
          "loss.kappa must be nonnegative");
  require(std::isfinite(cfg.loss.epsilon) && cfg.loss.epsilon > 0.0,
          "loss.epsilon must be positive");
  require(cfg.loss.mc_samples >= 1, "loss.mc_samples must be >= 1");
  require(std::isfinite(cfg.loss.sobolev_s), "loss.sobolev_s must be finite");

  require(cfg.train.steps >= 0, "train.steps must be >= 0");
  require(cfg.train.batch >= 1, "train.batch must be >= 1");
  require(std::isfinite(cfg.train.lr) && cfg.train.lr > 0.0, "train.lr must be positive");
  require(cfg.train.decay > 0.0 && cfg.train.decay <= 1.0, "train.decay must be in (0, 1]");
  require(cfg.train.decay_every >= 1, "train.decay_every must be >= 1");

  validate_mask(cfg.mask);

  static const std::set<std::string> kData = {"none",  "sde1d", "sde2d",
                                              "dirac", "darcy", "grf1d"};
  require(kData.count(cfg.data.kind) != 0,
          "data.kind must be one of none, sde1d, sde2d, dirac, darcy, grf1d");
  require(cfg.data.n_train >= 0, "data.n_train must be >= 0");
  require(cfg.data.n_heldout >= 0, "data.n_heldout must be >= 0");
  require(std::isfinite(cfg.data.T) && cfg.data.T >= 0.0, "data.T must be nonnegative");
  require(cfg.data.dt_steps >= 1, "data.dt_steps must be >= 1");
  require(cfg.data.keep_every >= 1, "data.keep_every must be >= 1");
  require(cfg.data.drop >= 0.0 && cfg.data.drop < 1.0, "data.drop must be in [0, 1)");
  for (double v : cfg.data.u0) require(std::isfinite(v), "data.u0 entries must be finite");
  require(cfg.data.resolution >= 2, "data.resolution must be >= 2");
  require(cfg.data.grid >= 2, "data.grid must be >= 2");
  require(std::isfinite(cfg.data.tau_sq) && cfg.data.tau_sq >= 0.0,
          "data.tau_sq must be nonnegative");
  require(std::isfinite(cfg.data.alpha), "data.alpha must be finite");
  require(cfg.data.modes >= 1, "data.modes must be >= 1");
  require(std::isfinite(cfg.data.scale) && cfg.data.scale > 0.0, "data.scale must be positive");
  require(cfg.data.points >= 2, "data.points must be >= 2");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<PointCloudFunction> read_samples(const std::string& path) {
  return path.ends_with(".jsonl") ? read_jsonl(path) : read_fpc(path);
}

void write_samples_file(const std::string& path, const std::vector<PointCloudFunction>& samples) {
  if (path.ends_with(".jsonl"))
    write_jsonl(path, samples);
  else
    write_fpc(path, samples);
}

int parse_positive_int(const std::string& s, const char* what) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (s.empty() || pos != s.size() || v < 1)
    throw std::runtime_error(std::string(what) + ": expected a positive integer, got '" + s + "'");
  return v;
}

std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (item.empty() || pos != item.size())
      throw std::runtime_error(std::string(what) + ": bad entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::runtime_error(std::string(what) + ": empty list");
  return out;
}

PotentialSpec potential_from(const DataConfig& data) {
  return data.kind == "sde2d" ? PotentialSpec::multiwell2d() : PotentialSpec::double_well();
}

Mat dirac_mesh(int resolution) {
  Mat coords(1, resolution);
  for (int i = 0; i < resolution; ++i) coords(0, i) = (i + 1) / (resolution + 1.0);
  return coords;
}

// 1-d mesh spacing; throws unless the mesh is uniform to 1e-9.
double uniform_spacing(const Mat& coords) {
  if (coords.rows() != 1 || coords.cols() < 2)
    throw std::runtime_error("mesh: need a 1-d mesh with at least 2 points");
  const double dx = coords(0, 1) - coords(0, 0);
  if (!(dx > 0.0)) throw std::runtime_error("mesh: points must be strictly increasing");
  for (int i = 2; i < coords.cols(); ++i)
    if (std::fabs(coords(0, i) - coords(0, i - 1) - dx) > 1e-9 * std::max(1.0, dx))
      throw std::runtime_error("mesh: spike decoding needs uniform spacing");
  return dx;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sd_pop(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double mu = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

Mat two_column(const std::vector<double>& a, const std::vector<double>& b) {
  Mat m(static_cast<int>(a.size()), 2);
  for (int i = 0; i < m.rows(); ++i) {
    m(i, 0) = a[static_cast<std::size_t>(i)];
    m(i, 1) = b[static_cast<std::size_t>(i)];
  }
  return m;
}

}  // namespace

CliConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  require(doc.is_object(), "top level must be an object with groups model/loss/train/mask/data");
  check_keys(doc, "", {"model", "loss", "train", "mask", "data"});

  CliConfig cfg;
  if (const json* g = find(doc, "model")) {
    require(g->is_object(), "model must be an object");
    check_keys(*g, "model",
               {"d_latent", "encoder_widths", "decoder_widths", "fourier_k", "fourier_seed"});
    fetch_int(*g, "model", "d_latent", cfg.model.d_latent);
    fetch_ivec(*g, "model", "encoder_widths", cfg.model.encoder_widths);
    fetch_ivec(*g, "model", "decoder_widths", cfg.model.decoder_widths);
    fetch_int(*g, "model", "fourier_k", cfg.model.fourier_k);
    fetch_u64(*g, "model", "fourier_seed", cfg.model.fourier_seed);
  }
  {
    const json* g = find(doc, "loss");
    require(g != nullptr && g->is_object() && find(*g, "kind") != nullptr,
            "loss.kind is required");
    check_keys(*g, "loss",
               {"kind", "beta", "lambda", "kappa", "epsilon", "mc_samples", "sobolev_s"});
    fetch_string(*g, "loss", "kind", cfg.loss.kind);
    fetch_double(*g, "loss", "beta", cfg.loss.beta);
    fetch_double(*g, "loss", "lambda", cfg.loss.lambda);
    fetch_double(*g, "loss", "kappa", cfg.loss.kappa);
    fetch_double(*g, "loss", "epsilon", cfg.loss.epsilon);
    fetch_int(*g, "loss", "mc_samples", cfg.loss.mc_samples);
    fetch_double(*g, "loss", "sobolev_s", cfg.loss.sobolev_s);
  }
  if (const json* g = find(doc, "train")) {
    require(g->is_object(), "train must be an object");
    check_keys(*g, "train", {"steps", "batch", "lr", "decay", "decay_every", "seed"});
    fetch_int(*g, "train", "steps", cfg.train.steps);
    fetch_int(*g, "train", "batch", cfg.train.batch);
    fetch_double(*g, "train", "lr", cfg.train.lr);
    fetch_double(*g, "train", "decay", cfg.train.decay);
    fetch_int(*g, "train", "decay_every", cfg.train.decay_every);
    fetch_u64(*g, "train", "seed", cfg.train.seed);
  }
  if (const json* g = find(doc, "mask")) {
    require(g->is_object(), "mask must be an object");
    check_keys(*g, "mask", {"mode", "r_enc", "r_dec"});
    std::string mode = "none";
    fetch_string(*g, "mask", "mode", mode);
    if (mode == "none")
      cfg.mask.mode = MaskMode::kNone;
    else if (mode == "random")
      cfg.mask.mode = MaskMode::kRandom;
    else if (mode == "complement")
      cfg.mask.mode = MaskMode::kComplement;
    else
      bad_key("mask", "mode", "one of none, random, complement");
    fetch_double(*g, "mask", "r_enc", cfg.mask.r_enc);
    fetch_double(*g, "mask", "r_dec", cfg.mask.r_dec);
  }
  if (const json* g = find(doc, "data")) {
    require(g->is_object(), "data must be an object");
    check_keys(*g, "data",
               {"kind", "n_train", "n_heldout", "T", "dt_steps", "keep_every", "drop", "u0",
                "resolution", "grid", "tau_sq", "alpha", "modes", "scale", "points"});
    fetch_string(*g, "data", "kind", cfg.data.kind);
    fetch_int(*g, "data", "n_train", cfg.data.n_train);
    fetch_int(*g, "data", "n_heldout", cfg.data.n_heldout);
    fetch_double(*g, "data", "T", cfg.data.T);
    fetch_int(*g, "data", "dt_steps", cfg.data.dt_steps);
    fetch_int(*g, "data", "keep_every", cfg.data.keep_every);
    fetch_double(*g, "data", "drop", cfg.data.drop);
    fetch_dvec(*g, "data", "u0", cfg.data.u0);
    fetch_int(*g, "data", "resolution", cfg.data.resolution);
    fetch_int(*g, "data", "grid", cfg.data.grid);
    fetch_double(*g, "data", "tau_sq", cfg.data.tau_sq);
    fetch_double(*g, "data", "alpha", cfg.data.alpha);
    fetch_int(*g, "data", "modes", cfg.data.modes);
    fetch_double(*g, "data", "scale", cfg.data.scale);
    fetch_int(*g, "data", "points", cfg.data.points);
  }
  validate_config(cfg);
  return cfg;
}

CliConfig parse_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const std::exception&) {
    throw std::runtime_error("config: cannot open " + path);
  }
  return parse_config_text(text);
}

MaskConfig parse_mask_spec(const std::string& spec) {
  MaskConfig mc;
  if (spec == "none") return mc;
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  if (colon == std::string::npos || (head != "random" && head != "complement"))
    throw std::runtime_error("mask: expected none, random:R, or complement:R, got '" + spec +
                             "'");
  mc.mode = head == "random" ? MaskMode::kRandom : MaskMode::kComplement;
  const std::string tail = spec.substr(colon + 1);
  std::size_t pos = 0;
  double r = 0.0;
  try {
    r = std::stod(tail, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (tail.empty() || pos != tail.size())
    throw std::runtime_error("mask: bad ratio in '" + spec + "'");
  mc.r_enc = r;
  validate_mask(mc);
  return mc;
}

Mat parse_mesh_spec(const std::string& spec) {
  if (spec.rfind("grid:", 0) == 0) {
    const std::string body = spec.substr(5);
    const auto cross = body.find('x');
    if (cross == std::string::npos) {
      const int n = parse_positive_int(body, "mesh");
      Mat coords(1, n);
      for (int i = 0; i < n; ++i) coords(0, i) = (i + 0.5) / n;
      return coords;
    }
    const int a = parse_positive_int(body.substr(0, cross), "mesh");
    const int b = parse_positive_int(body.substr(cross + 1), "mesh");
    Mat coords(2, a * b);
    for (int j = 0; j < b; ++j)
      for (int i = 0; i < a; ++i) {
        coords(0, j * a + i) = (i + 0.5) / a;
        coords(1, j * a + i) = (j + 0.5) / b;
      }
    return coords;
  }
  const auto samples = read_samples(spec);
  if (samples.empty()) throw std::runtime_error("mesh: " + spec + " holds no samples");
  return samples.front().coords;
}

std::uint64_t seed_mix(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void data_dims(const DataConfig& data, int& d, int& m) {
  if (data.kind == "sde1d") {
    d = 1;
    m = 1;
  } else if (data.kind == "sde2d") {
    d = 1;
    m = 2;
  } else if (data.kind == "dirac" || data.kind == "grf1d") {
    d = 1;
    m = 1;
  } else if (data.kind == "darcy") {
    d = 2;
    m = 1;
  } else {
    throw std::runtime_error("config: data.kind " + data.kind + " does not fix input dimensions");
  }
}

std::vector<ParamStore*> BuiltModel::stores() {
  if (is_dirac) return {&dirac.rho_params, &dirac.dec_params};
  return {&fvae.enc_params, &fvae.dec_params};
}

BuiltModel build_model(const CliConfig& cfg, int d, int m) {
  BuiltModel bm;
  const bool gaussian = cfg.loss.kind != "fae" && cfg.loss.kind != "dirac_fae";
  const std::uint64_t init_seed = seed_mix(cfg.train.seed, kSeedInit);
  if (cfg.loss.kind == "dirac_fvae" || cfg.loss.kind == "dirac_fae") {
    if (d != 1 || m != 1)
      throw std::invalid_argument("build_model: spike models take 1-d scalar data");
    bm.is_dirac = true;
    MlpSpec rho;
    rho.widths.push_back(1);
    rho.widths.insert(rho.widths.end(), cfg.model.encoder_widths.begin(),
                      cfg.model.encoder_widths.end());
    rho.widths.push_back((gaussian ? 2 : 1) * cfg.model.d_latent);
    MlpSpec dec;
    dec.widths.push_back(cfg.model.d_latent);
    dec.widths.insert(dec.widths.end(), cfg.model.decoder_widths.begin(),
                      cfg.model.decoder_widths.end());
    dec.widths.push_back(2);
    bm.dirac = DiracModel::create(rho, dec, cfg.model.d_latent, gaussian, init_seed);
    return bm;
  }
  EncoderSpec enc;
  enc.d = d;
  enc.m = m;
  enc.k = cfg.model.fourier_k;
  enc.d_latent = cfg.model.d_latent;
  enc.gaussian = gaussian;
  enc.kernel_hidden = cfg.model.encoder_widths;
  enc.pooled = cfg.model.encoder_widths.back();
  DecoderSpec dec;
  dec.d = d;
  dec.m = m;
  dec.k = enc.k;
  dec.d_latent = enc.d_latent;
  dec.hidden = cfg.model.decoder_widths;
  bm.fvae = FvaeModel::create(enc, dec, init_seed);
  // The coordinate features are a fixed hyperparameter, seeded independently
  // of the trainable parameters so reruns with a new train.seed share them.
  bm.fvae.map = FourierFeatureMap::create(enc.k, d, cfg.model.fourier_seed);
  return bm;
}

TrainConfig train_config_from(const CliConfig& cfg) {
  TrainConfig tc;
  tc.steps = cfg.train.steps;
  tc.batch_size = cfg.train.batch;
  tc.lr0 = cfg.train.lr;
  tc.decay_factor = cfg.train.decay;
  tc.decay_every = cfg.train.decay_every;
  tc.mc_samples = cfg.loss.mc_samples;
  tc.mask_mode = cfg.mask.mode;
  tc.r_enc = cfg.mask.r_enc;
  tc.r_dec = cfg.mask.r_dec;
  tc.beta = cfg.loss.beta;
  tc.seed = seed_mix(cfg.train.seed, kSeedTrain);
  return tc;
}

SDEConfig sde_config_from(const CliConfig& cfg) {
  if (cfg.data.kind != "sde1d" && cfg.data.kind != "sde2d")
    throw std::runtime_error(
        "config: the sde objective needs data.kind sde1d or sde2d (for T, u0, and the drift)");
  SDEConfig sde;
  sde.drift = cfg.data.kind == "sde1d" ? DriftKind::kDoubleWell : DriftKind::kMultiwell2d;
  sde.eps = cfg.loss.epsilon;
  sde.T = cfg.data.T;
  sde.kappa = cfg.loss.kappa;
  sde.lambda = cfg.loss.lambda;
  sde.beta = cfg.loss.beta;
  sde.u0.resize(static_cast<Eigen::Index>(cfg.data.u0.size()));
  for (std::size_t i = 0; i < cfg.data.u0.size(); ++i)
    sde.u0(static_cast<Eigen::Index>(i)) = cfg.data.u0[i];
  sde.validate(cfg.data.kind == "sde1d" ? 1 : 2);
  return sde;
}

FaeNorm fae_norm_from(const CliConfig& cfg, int n_points) {
  FaeNorm norm;
  if (cfg.loss.sobolev_s != 0.0) {
    norm.sobolev = true;
    norm.s = cfg.loss.sobolev_s;
    norm.n_modes = n_points;
    // Keeps spike-model objective values comparable across mesh resolutions.
    norm.subtract_data_norm = cfg.loss.kind == "dirac_fae";
  }
  return norm;
}

std::vector<MetricsRow> train_model(const CliConfig& cfg, BuiltModel& bm,
                                    const std::vector<PointCloudFunction>& data,
                                    const HeldoutFn& heldout, int heldout_every) {
  TrainConfig tc = train_config_from(cfg);
  if (heldout) tc.heldout_every = heldout_every > 0 ? heldout_every : std::max(1, tc.steps);
  const std::string& kind = cfg.loss.kind;
  if (kind == "sde") return train_sde(bm.fvae, data, sde_config_from(cfg), tc, heldout);
  const int n_points = data.empty() ? 0 : data.front().points();
  if (kind == "fae") return train_fae(bm.fvae, data, fae_norm_from(cfg, n_points), tc, heldout);
  if (kind == "dirac_fvae") return train_dirac_fvae(bm.dirac, data, tc, heldout);
  if (kind == "dirac_fae")
    return train_dirac_fae(bm.dirac, data, fae_norm_from(cfg, n_points), tc, heldout);
  throw std::runtime_error("config: loss.kind " + kind + " trains through the bip-demo preset");
}

LoadedModel load_model(const std::string& checkpoint_path) {
  LoadedModel lm;
  lm.ck = load_checkpoint(checkpoint_path);
  lm.cfg = parse_config_text(lm.ck.config_text);
  int d = 1, m = 1;
  if (lm.cfg.loss.kind != "dirac_fvae" && lm.cfg.loss.kind != "dirac_fae") {
    const int k = lm.cfg.model.fourier_k;
    if (lm.ck.fourier.size() == 0 || lm.ck.fourier.size() % k != 0)
      throw std::runtime_error("checkpoint: feature matrix does not match model.fourier_k");
    d = static_cast<int>(lm.ck.fourier.size()) / k;
    if (lm.ck.psi.layout.empty()) throw std::runtime_error("checkpoint: decoder layout is empty");
    m = lm.ck.psi.layout.back().out;
  }
  lm.model = build_model(lm.cfg, d, m);
  if (lm.model.is_dirac)
    restore_checkpoint(lm.ck, lm.model.dirac);
  else
    restore_checkpoint(lm.ck, lm.model.fvae);
  return lm;
}

std::vector<PointCloudFunction> gen_data(const CliConfig& cfg, int n, std::uint64_t seed) {
  const DataConfig& data = cfg.data;
  if (n <= 0) return {};
  if (data.kind == "sde1d" || data.kind == "sde2d") {
    const SDEConfig sde = sde_config_from(cfg);
    return gen_sde_dataset(sde, potential_from(data), 1.0 / data.dt_steps, data.keep_every,
                           data.drop, n, seed);
  }
  if (data.kind == "dirac") return gen_dirac_dataset(data.resolution);
  if (data.kind == "darcy") {
    GRFSpec spec{data.tau_sq, data.alpha, data.modes, data.scale};
    spec.validate();
    std::vector<PointCloudFunction> out;
    out.reserve(static_cast<std::size_t>(n));
    Rng base(seed);
    for (int i = 0; i < n; ++i) {
      Rng stream = base.substream(static_cast<std::uint64_t>(i));
      out.push_back(gen_darcy_sample(spec, data.grid, stream).pressure);
    }
    return out;
  }
  if (data.kind == "grf1d") {
    std::vector<PointCloudFunction> out;
    out.reserve(static_cast<std::size_t>(n));
    for (auto& s : gen_bip_dataset(data, n, seed)) out.push_back(std::move(s.cloud));
    return out;
  }
  throw std::runtime_error("config: data.kind " + data.kind + " cannot be generated");
}

SpectralOperator bip_operator(int modes) {
  if (modes < 1) throw std::invalid_argument("bip_operator: modes must be >= 1");
  SpectralOperator op;
  op.sine = true;
  op.multipliers.resize(modes);
  for (int j = 1; j <= modes; ++j) op.multipliers(j - 1) = 1.0 / (kPi * j * kPi * j);
  return op;
}

std::vector<BipSample> gen_bip_dataset(const DataConfig& data, int n, std::uint64_t seed) {
  const SpectralOperator op = bip_operator(data.modes);
  if (data.points < 2) throw std::invalid_argument("gen_bip_dataset: points must be >= 2");
  const Mat coords = dirac_mesh(data.points);
  Mat basis(op.modes(), data.points);
  for (int j = 1; j <= op.modes(); ++j)
    for (int i = 0; i < data.points; ++i)
      basis(j - 1, i) = std::sqrt(2.0) * std::sin(kPi * j * coords(0, i));
  std::vector<BipSample> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  Rng base(seed);
  for (int s = 0; s < n; ++s) {
    Rng stream = base.substream(static_cast<std::uint64_t>(s));
    BipSample sample;
    sample.coeffs.resize(op.modes());
    for (int j = 0; j < op.modes(); ++j)
      sample.coeffs(j) = std::sqrt(op.multipliers(j)) * stream.next_gaussian();
    sample.cloud.coords = coords;
    sample.cloud.values = sample.coeffs.transpose() * basis;
    sample.cloud.domain = Domain::unit_box(1);
    out.push_back(std::move(sample));
  }
  return out;
}

Mat sde_time_mesh(const DataConfig& data, int points_override) {
  if (!(data.T > 0.0)) throw std::runtime_error("config: data.T must be positive for a time mesh");
  int points = points_override;
  if (points <= 0)
    points = static_cast<int>(
                 std::llround(data.T * data.dt_steps / static_cast<double>(data.keep_every))) +
             1;
  if (points < 2) throw std::runtime_error("config: the time mesh needs at least 2 points");
  Mat t(1, points);
  for (int i = 0; i < points; ++i) t(0, i) = data.T * i / (points - 1);
  return t;
}

void crossing_ensembles(const CliConfig& cfg, const FvaeModel& model, const GaussianMixture* mix,
                        int n_gen, int n_sim, std::uint64_t seed, std::vector<double>& gen,
                        std::vector<double>& sim) {
  const SDEConfig sde = sde_config_from(cfg);
  gen.clear();
  sim.clear();
  if (n_gen > 0) {
    const Mat times = sde_time_mesh(cfg.data);
    for (const auto& p : generate_fvae_sde(model, times, cfg.loss.kappa, cfg.loss.epsilon, n_gen,
                                           seed_mix(seed, kSeedGen), mix))
      gen.push_back(first_crossing(p));
  }
  const PotentialSpec pot = potential_from(cfg.data);
  const double dt = 1.0 / cfg.data.dt_steps;
  Rng base(seed_mix(seed, kSeedSim));
  for (int i = 0; i < n_sim; ++i) {
    Rng stream = base.substream(static_cast<std::uint64_t>(i));
    sim.push_back(first_crossing(simulate_sde(sde, pot, dt, stream)));
  }
}

void msm_ensembles(const CliConfig& cfg, const FvaeModel& model, const GaussianMixture* mix,
                   int n, std::uint64_t seed, std::vector<PointCloudFunction>& gen,
                   std::vector<PointCloudFunction>& dns) {
  const SDEConfig sde = sde_config_from(cfg);
  if (cfg.data.kind != "sde2d")
    throw std::runtime_error("config: transition matrices need data.kind sde2d");
  const Mat times = sde_time_mesh(cfg.data);
  gen = generate_fvae_sde(model, times, cfg.loss.kappa, cfg.loss.epsilon, n,
                          seed_mix(seed, kSeedGen), mix);
  const PotentialSpec pot = potential_from(cfg.data);
  const double dt = 1.0 / cfg.data.dt_steps;
  Rng base(seed_mix(seed, kSeedSim));
  Rng idle(0);  // the thinning pass draws nothing at drop ratio 0
  dns.clear();
  dns.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng stream = base.substream(static_cast<std::uint64_t>(i));
    dns.push_back(subsample_drop(simulate_sde(sde, pot, dt, stream), cfg.data.keep_every, 0.0,
                                 idle));
  }
}

QoiEval eval_darcy_qoi(const FvaeModel& model, const GaussianMixture* mix,
                       const std::vector<PointCloudFunction>& held, int n_gen,
                       std::uint64_t seed) {
  if (held.empty()) throw std::invalid_argument("eval_darcy_qoi: held-out set is empty");
  if (n_gen < 1) throw std::invalid_argument("eval_darcy_qoi: n_gen must be >= 1");
  QoiEval out;
  for (const auto& h : held) {
    const auto q = qoi_darcy(h);
    out.held_q1.push_back(q.first);
    out.held_q2.push_back(q.second);
  }
  for (const auto& g : generate_fvae(model, held.front().coords, held.front().domain, n_gen,
                                     seed_mix(seed, kSeedGen), mix)) {
    const auto q = qoi_darcy(g);
    out.gen_q1.push_back(q.first);
    out.gen_q2.push_back(q.second);
  }
  out.w1_q1 = wasserstein1(out.gen_q1, out.held_q1);
  out.w1_q2 = wasserstein1(out.gen_q2, out.held_q2);
  out.sd_q1 = sd_pop(out.held_q1);
  out.sd_q2 = sd_pop(out.held_q2);
  return out;
}

namespace {

std::string now_stamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tmv{};
  gmtime_r(&t, &tmv);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tmv);
  return buf;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Function-space autoencoders: synthetic data, training, evaluation, sampling"};
  app.require_subcommand(1);

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->require_subcommand(1);
  struct GenOpts {
    int n = 128;
    std::uint64_t seed = 0;
    std::string out, perm_out;
    double T = 1.0, eps = 1.0, drop = 0.0;
    int dt_steps = 8192, keep_every = 1;
    std::vector<double> u0;
    int resolution = 64, grid = 47, modes = 32;
    double tau_sq = 9.0, alpha = 2.0, scale = 1.0;
  } g;
  auto add_gen_common = [&g](CLI::App* sub) {
    sub->add_option("--n", g.n, "Sample count")->capture_default_str();
    sub->add_option("--seed", g.seed, "Base seed")->envname("FAE_SEED")->capture_default_str();
    sub->add_option("--out", g.out, "Output file (.fpc, or .jsonl by extension)")->required();
  };
  auto add_grf_opts = [&g](CLI::App* sub) {
    sub->add_option("--tau-sq", g.tau_sq, "Spectral shift tau^2")->capture_default_str();
    sub->add_option("--alpha", g.alpha, "Spectral decay exponent")->capture_default_str();
    sub->add_option("--modes", g.modes, "Kept modes per axis")->capture_default_str();
    sub->add_option("--scale", g.scale, "Spectral scale")->capture_default_str();
  };
  auto* gen_sde1 = gen->add_subcommand("sde1d", "Double-well diffusion paths");
  auto* gen_sde2 = gen->add_subcommand("sde2d", "Planar multiwell diffusion paths");
  for (auto* sub : {gen_sde1, gen_sde2}) {
    add_gen_common(sub);
    sub->add_option("--T", g.T, "Time horizon")->required();
    sub->add_option("--eps", g.eps, "Noise temperature")->capture_default_str();
    sub->add_option("--dt-steps", g.dt_steps, "Integrator steps per unit time")
        ->capture_default_str();
    sub->add_option("--keep-every", g.keep_every, "Keep every k-th integrator point")
        ->capture_default_str();
    sub->add_option("--drop", g.drop, "Fraction of non-initial points to drop")
        ->capture_default_str();
    sub->add_option("--u0", g.u0, "Initial state, one value per channel");
  }
  auto run_gen_sde = [&g](const std::string& kind) {
    CliConfig cfg;
    cfg.loss.kind = "sde";
    cfg.loss.epsilon = g.eps;
    cfg.data.kind = kind;
    cfg.data.T = g.T;
    cfg.data.dt_steps = g.dt_steps;
    cfg.data.keep_every = g.keep_every;
    cfg.data.drop = g.drop;
    if (g.u0.empty())
      cfg.data.u0 = kind == "sde1d" ? std::vector<double>{-1.0} : std::vector<double>{0.0, 0.0};
    else
      cfg.data.u0 = g.u0;
    const auto samples = gen_data(cfg, g.n, seed_mix(g.seed, kSeedData));
    write_samples_file(g.out, samples);
    std::printf("wrote %d samples to %s\n", static_cast<int>(samples.size()), g.out.c_str());
  };
  gen_sde1->callback([&run_gen_sde]() { run_gen_sde("sde1d"); });
  gen_sde2->callback([&run_gen_sde]() { run_gen_sde("sde2d"); });

  auto* gen_dirac = gen->add_subcommand("dirac", "Discretised point masses, one per mesh point");
  gen_dirac->add_option("--resolution", g.resolution, "Mesh size (also the sample count)")
      ->capture_default_str();
  gen_dirac->add_option("--out", g.out, "Output file (.fpc, or .jsonl by extension)")->required();
  gen_dirac->callback([&g]() {
    const auto samples = gen_dirac_dataset(g.resolution);
    write_samples_file(g.out, samples);
    std::printf("wrote %d samples to %s\n", static_cast<int>(samples.size()), g.out.c_str());
  });

  auto* gen_darcy = gen->add_subcommand("darcy", "Pressure fields of the thresholded-field flow");
  add_gen_common(gen_darcy);
  gen_darcy->add_option("--grid", g.grid, "Cells per side")->capture_default_str();
  add_grf_opts(gen_darcy);
  gen_darcy->add_option("--perm-out", g.perm_out, "Also write the permeability fields here");
  gen_darcy->callback([&g]() {
    GRFSpec spec{g.tau_sq, g.alpha, g.modes, g.scale};
    spec.validate();
    std::vector<PointCloudFunction> press, perm;
    Rng base(seed_mix(g.seed, kSeedData));
    for (int i = 0; i < g.n; ++i) {
      Rng stream = base.substream(static_cast<std::uint64_t>(i));
      DarcySample s = gen_darcy_sample(spec, g.grid, stream);
      press.push_back(std::move(s.pressure));
      if (!g.perm_out.empty()) perm.push_back(std::move(s.permeability));
    }
    write_samples_file(g.out, press);
    if (!g.perm_out.empty()) write_samples_file(g.perm_out, perm);
    std::printf("wrote %d samples to %s\n", static_cast<int>(press.size()), g.out.c_str());
  });

  auto* gen_grf = gen->add_subcommand("grf", "Random fields on the square grid");
  add_gen_common(gen_grf);
  gen_grf->add_option("--grid", g.grid, "Cells per side")->capture_default_str();
  add_grf_opts(gen_grf);
  gen_grf->callback([&g]() {
    GRFSpec spec{g.tau_sq, g.alpha, g.modes, g.scale};
    spec.validate();
    const Mat coords = darcy_grid(g.grid);
    std::vector<PointCloudFunction> out;
    Rng base(seed_mix(g.seed, kSeedData));
    for (int i = 0; i < g.n; ++i) {
      Rng stream = base.substream(static_cast<std::uint64_t>(i));
      PointCloudFunction f;
      f.coords = coords;
      f.values = grf_sample(spec, coords, stream);
      f.domain = Domain::unit_box(2);
      out.push_back(std::move(f));
    }
    write_samples_file(g.out, out);
    std::printf("wrote %d samples to %s\n", static_cast<int>(out.size()), g.out.c_str());
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train a model from a config and a dataset");
  struct TrainOpts {
    std::string config, data, out, heldout;
    int heldout_every = 0;
    std::uint64_t seed = 0;
    int threads = 1;
  } t;
  train->add_option("--config", t.config, "JSON config file")->required();
  train->add_option("--data", t.data, "Training dataset (.fpc or .jsonl)")->required();
  train->add_option("--out", t.out, "Output directory")->required();
  train->add_option("--heldout", t.heldout, "Held-out dataset for reconstruction tracking");
  train->add_option("--heldout-every", t.heldout_every,
                    "Steps between held-out evaluations (0: final step only)");
  auto* train_seed_opt =
      train->add_option("--seed", t.seed, "Overrides train.seed from the config")
          ->envname("FAE_SEED");
  train->add_option("--threads", t.threads, "Worker cap; results do not depend on it")
      ->check(CLI::PositiveNumber);
  train->callback([&t, train_seed_opt]() {
    const std::string config_text = read_text_file(t.config);
    CliConfig cfg = parse_config_text(config_text);
    if (train_seed_opt->count() > 0) cfg.train.seed = t.seed;
    const auto data = read_samples(t.data);
    if (data.empty()) throw std::runtime_error("train: dataset " + t.data + " is empty");
    const int d = data.front().dim(), m = data.front().channels();
    if (cfg.data.kind != "none") {
      int dd = 0, mm = 0;
      data_dims(cfg.data, dd, mm);
      if (dd != d || mm != m)
        throw std::runtime_error("train: dataset dimensions do not match data.kind " +
                                 cfg.data.kind);
    }
    BuiltModel bm = build_model(cfg, d, m);
    std::vector<PointCloudFunction> held;
    HeldoutFn heldout_cb;
    if (!t.heldout.empty()) {
      held = read_samples(t.heldout);
      if (held.empty()) throw std::runtime_error("train: held-out dataset is empty");
      heldout_cb = [&bm, &held]() {
        return bm.is_dirac ? recon_mse(bm.dirac, held) : recon_mse(bm.fvae, held);
      };
    }
    namespace fs = std::filesystem;
    fs::create_directories(t.out);
    const std::string started = now_stamp();
    const auto tic = std::chrono::steady_clock::now();
    const auto trace = train_model(cfg, bm, data, heldout_cb, t.heldout_every);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
                            .count();
    const Checkpoint ck = bm.is_dirac ? make_checkpoint(bm.dirac, config_text)
                                      : make_checkpoint(bm.fvae, config_text);
    const std::string ck_path = (fs::path(t.out) / "checkpoint.ckpt").string();
    save_checkpoint(ck_path, ck);
    write_metrics_csv((fs::path(t.out) / "metrics.csv").string(), trace);
    char wall_line[64];
    std::snprintf(wall_line, sizeof wall_line, "wall_s %.3f", wall);
    write_lines((fs::path(t.out) / "run.log").string(),
                {started + " train start (" + std::to_string(data.size()) + " samples)",
                 now_stamp() + " train end", wall_line});
    const double final_loss =
        trace.empty() ? std::numeric_limits<double>::quiet_NaN() : trace.back().loss;
    std::printf("final_loss=%.17g\n", final_loss);
    std::printf("checkpoint=%s\n", ck_path.c_str());
  });

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->require_subcommand(1);
  struct EvalOpts {
    std::string checkpoint, data, mask = "none", out_dir;
    std::string kde_out, sim_kde_out, samples_out, sim_samples_out;
    std::uint64_t seed = 0;
    int n = 1024;
    int n_msm = 2048;
    long long min_visits = 50;
    int modes = 256, draws = 256;
    double s = 0.0;
  } e;

  auto* ev_mse = eval->add_subcommand("mse", "Mean squared reconstruction error on a dataset");
  ev_mse->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required();
  ev_mse->add_option("--data", e.data, "Dataset to reconstruct")->required();
  ev_mse->add_option("--mask", e.mask, "Encoder view: none or random:R")->capture_default_str();
  ev_mse->add_option("--seed", e.seed, "Masking seed")->envname("FAE_SEED");
  ev_mse->callback([&e]() {
    const LoadedModel lm = load_model(e.checkpoint);
    const auto data = read_samples(e.data);
    const MaskConfig mc = parse_mask_spec(e.mask);
    const std::uint64_t ms = seed_mix(e.seed, kSeedEval);
    const double mse = lm.model.is_dirac
                           ? recon_mse(lm.model.dirac, data, mc.mode, mc.r_enc, ms)
                           : recon_mse(lm.model.fvae, data, mc.mode, mc.r_enc, ms);
    std::printf("mse=%.17g\n", mse);
  });

  auto* ev_t0 =
      eval->add_subcommand("t0", "First-crossing distribution against fresh simulations");
  ev_t0->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required();
  ev_t0->add_option("--n", e.n, "Ensemble size per side")->capture_default_str();
  ev_t0->add_option("--seed", e.seed, "Ensemble seed")->envname("FAE_SEED");
  ev_t0->add_option("--kde-out", e.kde_out, "Write the generated-side density here");
  ev_t0->add_option("--sim-kde-out", e.sim_kde_out, "Write the simulated-side density here");
  ev_t0->add_option("--samples-out", e.samples_out, "Write the generated crossing times here");
  ev_t0->add_option("--sim-samples-out", e.sim_samples_out,
                    "Write the simulated crossing times here");
  ev_t0->callback([&e]() {
    const LoadedModel lm = load_model(e.checkpoint);
    if (lm.cfg.loss.kind != "sde" || lm.cfg.data.kind != "sde1d")
      throw std::runtime_error("eval t0 needs a checkpoint trained with the sde objective on "
                               "sde1d data");
    std::vector<double> gen, sim;
    crossing_ensembles(lm.cfg, lm.model.fvae, lm.ck.has_gmm ? &lm.ck.gmm : nullptr, e.n, e.n,
                       e.seed, gen, sim);
    const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(512, 0.0, lm.cfg.data.T);
    if (!e.kde_out.empty()) write_kde_csv(e.kde_out, xs, kde_scott(gen, xs));
    if (!e.sim_kde_out.empty()) write_kde_csv(e.sim_kde_out, xs, kde_scott(sim, xs));
    if (!e.samples_out.empty()) write_samples_csv(e.samples_out, "t0", gen);
    if (!e.sim_samples_out.empty()) write_samples_csv(e.sim_samples_out, "t0", sim);
    std::printf("w1_t0=%.17g\n", wasserstein1(gen, sim));
    std::printf("gen_mean=%.17g\n", mean_of(gen));
    std::printf("sim_mean=%.17g\n", mean_of(sim));
  });

  auto* ev_msm =
      eval->add_subcommand("msm", "State-transition matrices against fresh simulations");
  ev_msm->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required();
  ev_msm->add_option("--n", e.n_msm, "Paths per side")->capture_default_str();
  ev_msm->add_option("--min-visits", e.min_visits,
                     "Skip rows the reference visits fewer times than this")
      ->capture_default_str();
  ev_msm->add_option("--seed", e.seed, "Ensemble seed")->envname("FAE_SEED");
  ev_msm->add_option("--out-dir", e.out_dir, "Write the transition matrices here");
  ev_msm->callback([&e]() {
    const LoadedModel lm = load_model(e.checkpoint);
    if (lm.cfg.loss.kind != "sde")
      throw std::runtime_error("eval msm needs a checkpoint trained with the sde objective");
    std::vector<PointCloudFunction> gpaths, dpaths;
    msm_ensembles(lm.cfg, lm.model.fvae, lm.ck.has_gmm ? &lm.ck.gmm : nullptr, e.n_msm, e.seed,
                  gpaths, dpaths);
    const TransitionMatrix tg = msm_transition(gpaths);
    const TransitionMatrix td = msm_transition(dpaths);
    int excluded = 0;
    const double gap = msm_gap(tg, td, e.min_visits, &excluded);
    if (!e.out_dir.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(e.out_dir);
      write_matrix_csv((fs::path(e.out_dir) / "msm_model.csv").string(), tg.probs);
      write_matrix_csv((fs::path(e.out_dir) / "msm_dns.csv").string(), td.probs);
      const Mat counts = td.counts.cast<double>();
      write_matrix_csv((fs::path(e.out_dir) / "msm_dns_counts.csv").string(), counts);
    }
    std::printf("max_abs_diff=%.17g\n", gap);
    std::printf("rows_excluded=%d\n", excluded);
  });

  auto* ev_qoi =
      eval->add_subcommand("qoi", "Field-summary distributions against held-out data");
  ev_qoi->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required();
  ev_qoi->add_option("--data", e.data, "Held-out dataset")->required();
  ev_qoi->add_option("--n", e.n, "Generated sample count")->capture_default_str();
  ev_qoi->add_option("--seed", e.seed, "Generation seed")->envname("FAE_SEED");
  ev_qoi->add_option("--out-dir", e.out_dir, "Write per-sample summaries here");
  ev_qoi->callback([&e]() {
    const LoadedModel lm = load_model(e.checkpoint);
    if (lm.model.is_dirac)
      throw std::runtime_error("eval qoi needs a function-autoencoder checkpoint");
    if (!lm.ck.has_gmm)
      throw std::runtime_error(
          "eval qoi needs a checkpoint with a latent mixture (train via the darcy-fae preset)");
    const auto held = read_samples(e.data);
    const QoiEval q = eval_darcy_qoi(lm.model.fvae, &lm.ck.gmm, held, e.n, e.seed);
    if (!e.out_dir.empty()) {
      namespace fs = std::filesystem;
      fs::create_directories(e.out_dir);
      write_matrix_csv((fs::path(e.out_dir) / "qoi_gen.csv").string(),
                       two_column(q.gen_q1, q.gen_q2));
      write_matrix_csv((fs::path(e.out_dir) / "qoi_held.csv").string(),
                       two_column(q.held_q1, q.held_q2));
    }
    std::printf("w1_q1=%.17g\n", q.w1_q1);
    std::printf("w1_q2=%.17g\n", q.w1_q2);
    std::printf("sd_q1=%.17g\n", q.sd_q1);
    std::printf("sd_q2=%.17g\n", q.sd_q2);
  });

  auto* ev_wn = eval->add_subcommand(
      "whitenoise", "Monte-Carlo mean of the truncated squared norm of white noise");
  ev_wn->add_option("--modes", e.modes, "Series truncation")->capture_default_str();
  ev_wn->add_option("--s", e.s, "Smoothness exponent")->capture_default_str();
  ev_wn->add_option("--draws", e.draws, "Monte-Carlo draws")->capture_default_str();
  ev_wn->add_option("--seed", e.seed, "Draw seed")->envname("FAE_SEED");
  ev_wn->callback([&e]() {
    Rng rng(seed_mix(e.seed, kSeedEval));
    std::printf("mean=%.17g\n", whitenoise_norm_mc(e.modes, e.s, e.draws, rng));
  });

  // ---- sample ----
  auto* sample = app.add_subcommand("sample", "Draw new functions from a trained model");
  struct SampleOpts {
    std::string checkpoint, out, decode;
    int n = 16, points = -1;
    std::uint64_t seed = 0;
  } sp;
  sample->add_option("--checkpoint", sp.checkpoint, "Checkpoint file")->required();
  sample->add_option("--n", sp.n, "Sample count")->capture_default_str();
  sample->add_option("--seed", sp.seed, "Latent seed")->envname("FAE_SEED");
  sample->add_option("--out", sp.out, "Output file (.fpc or .jsonl)")->required();
  sample->add_option("--decode", sp.decode,
                     "Output mesh for static models: grid:N, grid:AxB, or a cloud file");
  sample->add_option("--points", sp.points, "Time mesh size for path models");
  sample->callback([&sp]() {
    const LoadedModel lm = load_model(sp.checkpoint);
    if (sp.n < 1) throw std::runtime_error("sample: --n must be >= 1");
    const GaussianMixture* mix = lm.ck.has_gmm ? &lm.ck.gmm : nullptr;
    std::vector<PointCloudFunction> out;
    if (lm.cfg.loss.kind == "sde") {
      if (!sp.decode.empty())
        throw std::runtime_error("sample: path models take --points, not --decode");
      const Mat times = sde_time_mesh(lm.cfg.data, sp.points);
      out = generate_fvae_sde(lm.model.fvae, times, lm.cfg.loss.kappa, lm.cfg.loss.epsilon, sp.n,
                              seed_mix(sp.seed, kSeedGen), mix);
    } else if (!lm.model.is_dirac) {
      Mat coords;
      if (!sp.decode.empty())
        coords = parse_mesh_spec(sp.decode);
      else if (lm.cfg.data.kind == "darcy")
        coords = darcy_grid(lm.cfg.data.grid);
      else
        throw std::runtime_error("sample: pass --decode for this model");
      if (coords.rows() != lm.model.fvae.dec_spec.d)
        throw std::runtime_error("sample: mesh dimension does not match the model");
      out = generate_fvae(lm.model.fvae, coords, Domain::unit_box(lm.model.fvae.dec_spec.d),
                          sp.n, seed_mix(sp.seed, kSeedGen), mix);
    } else {
      const Mat coords =
          sp.decode.empty() ? dirac_mesh(lm.cfg.data.resolution) : parse_mesh_spec(sp.decode);
      const double dx = uniform_spacing(coords);
      Rng base(seed_mix(sp.seed, kSeedGen));
      for (int i = 0; i < sp.n; ++i) {
        Rng stream = base.substream(static_cast<std::uint64_t>(i));
        Eigen::VectorXd z(lm.model.dirac.d_latent);
        if (mix) {
          z = gmm_sample(*mix, stream);
        } else {
          for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = stream.next_gaussian();
        }
        PointCloudFunction f;
        f.coords = coords;
        f.values = dirac_decode(z, coords, lm.model.dirac.dec_params, lm.model.dirac.dec_spec, dx);
        f.domain = Domain::unit_box(1);
        out.push_back(std::move(f));
      }
    }
    write_samples_file(sp.out, out);
    std::printf("wrote %d samples to %s\n", static_cast<int>(out.size()), sp.out.c_str());
  });

  // ---- inpaint / superres ----
  struct ReconOpts {
    std::string checkpoint, input, decode, out, mask = "random:0.5", masked_out;
    int index = 0;
    std::uint64_t seed = 0;
  } io;
  auto run_reconstruct = [&io](bool masked) {
    const LoadedModel lm = load_model(io.checkpoint);
    const auto data = read_samples(io.input);
    if (io.index < 0 || io.index >= static_cast<int>(data.size()))
      throw std::runtime_error("sample index " + std::to_string(io.index) +
                               " is out of range for " + io.input);
    const PointCloudFunction& full = data[static_cast<std::size_t>(io.index)];
    PointCloudFunction view = full;
    if (masked) {
      const MaskConfig mc = parse_mask_spec(io.mask);
      if (mc.mode != MaskMode::kNone) {
        Rng rng(seed_mix(io.seed, kSeedEval));
        const MaskPair mp = make_mask(full.points(), mc.mode, mc.r_enc, mc.r_dec, rng);
        view = restrict_cloud(full, mp.enc);
      }
    }
    const Mat coords = parse_mesh_spec(io.decode);
    if (coords.rows() != full.dim())
      throw std::runtime_error("mesh dimension does not match the input sample");
    PointCloudFunction recon;
    recon.coords = coords;
    recon.values = lm.model.is_dirac ? reconstruct(lm.model.dirac, view, coords)
                                     : reconstruct(lm.model.fvae, view, coords);
    recon.domain = full.domain;
    write_samples_file(io.out, {recon});
    if (masked && !io.masked_out.empty()) write_samples_file(io.masked_out, {view});
    std::printf("encoder saw %d of %d points\n", view.points(), full.points());
    std::printf("wrote %s\n", io.out.c_str());
  };
  auto* inpaint = app.add_subcommand("inpaint", "Reconstruct one sample from a masked view");
  auto* superres = app.add_subcommand("superres", "Reconstruct one sample on a new mesh");
  for (auto* sub : {inpaint, superres}) {
    sub->add_option("--checkpoint", io.checkpoint, "Checkpoint file")->required();
    sub->add_option("--input", io.input, "Dataset holding the sample")->required();
    sub->add_option("--index", io.index, "Sample index")->capture_default_str();
    sub->add_option("--decode", io.decode, "Output mesh: grid:N, grid:AxB, or a cloud file")
        ->required();
    sub->add_option("--out", io.out, "Output file (.fpc or .jsonl)")->required();
  }
  inpaint->add_option("--mask", io.mask, "Encoder view: random:R or complement:R")
      ->capture_default_str();
  inpaint->add_option("--masked-out", io.masked_out, "Also write the encoder view here");
  inpaint->add_option("--seed", io.seed, "Masking seed")->envname("FAE_SEED");
  inpaint->callback([&run_reconstruct]() { run_reconstruct(true); });
  superres->callback([&run_reconstruct]() { run_reconstruct(false); });

  // ---- interpolate ----
  auto* interp = app.add_subcommand("interpolate", "Decode along a latent line between samples");
  struct InterpOpts {
    std::string checkpoint, input, decode, out;
    int i = 0, j = 1;
    std::string alphas = "0,0.25,0.5,0.75,1";
  } ip;
  interp->add_option("--checkpoint", ip.checkpoint, "Checkpoint file")->required();
  interp->add_option("--input", ip.input, "Dataset holding the endpoints")->required();
  interp->add_option("--i", ip.i, "First endpoint index")->capture_default_str();
  interp->add_option("--j", ip.j, "Second endpoint index")->capture_default_str();
  interp->add_option("--alphas", ip.alphas, "Comma-separated line positions (0: i, 1: j)")
      ->capture_default_str();
  interp->add_option("--decode", ip.decode, "Output mesh: grid:N, grid:AxB, or a cloud file")
      ->required();
  interp->add_option("--out", ip.out, "Output file (.fpc or .jsonl)")->required();
  interp->callback([&ip]() {
    const LoadedModel lm = load_model(ip.checkpoint);
    const auto data = read_samples(ip.input);
    const int count = static_cast<int>(data.size());
    if (ip.i < 0 || ip.i >= count || ip.j < 0 || ip.j >= count)
      throw std::runtime_error("endpoint indices are out of range for " + ip.input);
    const auto alphas = parse_double_list(ip.alphas, "alphas");
    const Mat coords = parse_mesh_spec(ip.decode);
    if (coords.rows() != data.front().dim())
      throw std::runtime_error("mesh dimension does not match the input samples");
    Eigen::VectorXd za, zb;
    if (lm.model.is_dirac) {
      za = latent_mean(lm.model.dirac, data[static_cast<std::size_t>(ip.i)]);
      zb = latent_mean(lm.model.dirac, data[static_cast<std::size_t>(ip.j)]);
    } else {
      za = latent_mean(lm.model.fvae, data[static_cast<std::size_t>(ip.i)]);
      zb = latent_mean(lm.model.fvae, data[static_cast<std::size_t>(ip.j)]);
    }
    // z(alpha) walks from endpoint i at alpha = 0 to endpoint j at alpha = 1.
    const auto zs = interpolate_latent(zb, za, alphas);
    const double dx = lm.model.is_dirac ? uniform_spacing(coords) : 0.0;
    std::vector<PointCloudFunction> out;
    out.reserve(zs.size());
    for (const auto& z : zs) {
      PointCloudFunction f;
      f.coords = coords;
      f.values = lm.model.is_dirac
                     ? dirac_decode(z, coords, lm.model.dirac.dec_params, lm.model.dirac.dec_spec,
                                    dx)
                     : decode_values(z, coords, lm.model.fvae.dec_params, lm.model.fvae.dec_spec,
                                     lm.model.fvae.map);
      f.domain = data.front().domain;
      out.push_back(std::move(f));
    }
    write_samples_file(ip.out, out);
    std::printf("wrote %d samples to %s\n", static_cast<int>(out.size()), ip.out.c_str());
  });

  // ---- gradcheck ----
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference audit of every loss family");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed, "Model and data seed")->envname("FAE_SEED");
  gc->callback([&gc_seed]() {
    bool ok = true;
    for (const auto& row : gradcheck_losses(gc_seed)) {
      std::printf("%-14s %.3e\n", row.family.c_str(), row.max_rel_err);
      ok = ok && row.max_rel_err <= 1e-5;
    }
    const double dt_err = gradcheck_time_derivative(gc_seed);
    std::printf("%-14s %.3e\n", "decode_dt", dt_err);
    ok = ok && dt_err <= 1e-6;
    if (!ok) throw std::runtime_error("gradient check failed");
    std::printf("all gradients within tolerance\n");
  });

  // ---- preset ----
  auto* preset = app.add_subcommand("preset", "Run a built-in experiment end to end");
  struct PresetCliOpts {
    std::string name, out, variant;
    std::uint64_t seed = 0;
    int steps = -1, resolution = -1, threads = 1;
  } p;
  preset->add_option("name", p.name, "dirac-fvae | dirac-fae | sde1d | msm2d | darcy-fae | bip-demo")
      ->required();
  preset->add_option("--out", p.out, "Output directory")->required();
  preset->add_option("--seed", p.seed, "Base seed")->envname("FAE_SEED");
  preset->add_option("--steps", p.steps, "Override the preset's training steps");
  preset->add_option("--resolution", p.resolution, "Spike mesh size (dirac presets)");
  preset->add_option("--variant", p.variant, "msm2d only: appendix");
  preset->add_option("--threads", p.threads, "Worker cap; results do not depend on it")
      ->check(CLI::PositiveNumber);
  preset->callback([&p]() {
    PresetOptions opt;
    opt.seed = p.seed;
    opt.out_dir = p.out;
    opt.steps = p.steps;
    opt.resolution = p.resolution;
    opt.variant = p.variant;
    opt.threads = p.threads;
    const PresetOutcome outcome = run_preset(p.name, opt);
    for (const auto& [key, value] : outcome.summary)
      std::printf("%s=%.17g\n", key.c_str(), value);
    std::printf("checkpoint=%s\n", outcome.checkpoint_file.c_str());
  });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& err) {
    // Help requests exit 0; anything else is a usage error. The help or the
    // message goes to the deepest subcommand that was being parsed.
    const CLI::App* deepest = &app;
    while (!deepest->get_subcommands().empty()) deepest = deepest->get_subcommands().back();
    const int code = deepest->exit(err);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
}

}  // namespace fae
