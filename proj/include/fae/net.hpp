#pragma once

#include <string>
#include <vector>

#include "fae/params.hpp"
#include "fae/rng.hpp"
#include "fae/tape.hpp"

namespace fae {

// Fully connected net: widths {in, hidden..., out}, GELU on hidden layers,
// linear output layer. The only network family used anywhere in the library.
struct MlpSpec {
  std::vector<int> widths;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int n_layers() const { return static_cast<int>(widths.size()) - 1; }
};

// Layer layout for the spec: per layer, weight block then bias block.
std::vector<LayerLayout> mlp_layout(const MlpSpec& spec, const std::string& prefix = "layer");

// Glorot-uniform weights (±√(6/(fan_in+fan_out))), zero biases; deterministic in seed.
ParamStore init_params(const MlpSpec& spec, uint64_t seed);

// Appends the spec's layers to an existing store (composite models keep all
// their nets in one flat vector). Layer l draws from streams.substream(stream_base+l).
void append_mlp(ParamStore& ps, const MlpSpec& spec, const std::string& prefix,
                Rng& streams, std::size_t stream_base);

// Plain forward pass; input columns are independent evaluation points.
// layer_base selects where this net's layers start inside the store's layout.
Mat eval_net(const ParamStore& params, const MlpSpec& spec, const Mat& input,
             int layer_base = 0);

// Forward pass carrying an input-direction tangent: returns the value and the
// Jacobian-vector product along `direction` (columnwise).
void eval_net_jvp(const ParamStore& params, const MlpSpec& spec, const Mat& input,
                  const Mat& direction, Mat& value, Mat& tangent, int layer_base = 0);

// Record the same net on a tape; `x` may carry a tangent, which propagates.
int tape_mlp(Tape& tape, int store, const ParamStore& params, const MlpSpec& spec, int x,
             int layer_base = 0);

}  // namespace fae
