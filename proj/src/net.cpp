#include "fae/net.hpp"

#include <cmath>
#include <stdexcept>

#include "fae/gelu.hpp"

namespace fae {

std::vector<LayerLayout> mlp_layout(const MlpSpec& spec, const std::string& prefix) {
  if (spec.widths.size() < 2) throw std::invalid_argument("mlp_layout: need at least two widths");
  std::vector<LayerLayout> layout;
  std::size_t off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    LayerLayout ll;
    ll.name = prefix + std::to_string(l);
    ll.in = spec.widths[l];
    ll.out = spec.widths[l + 1];
    ll.w_off = off;
    off += static_cast<std::size_t>(ll.out) * ll.in;
    ll.b_off = off;
    off += static_cast<std::size_t>(ll.out);
    layout.push_back(std::move(ll));
  }
  return layout;
}

void append_mlp(ParamStore& ps, const MlpSpec& spec, const std::string& prefix,
                Rng& streams, std::size_t stream_base) {
  const std::size_t base_off = ps.flat.size();
  std::vector<LayerLayout> added = mlp_layout(spec, prefix);
  ps.flat.resize(base_off + added.back().b_off + added.back().out, 0.0);
  for (std::size_t l = 0; l < added.size(); ++l) {
    LayerLayout ll = added[l];
    ll.w_off += base_off;
    ll.b_off += base_off;
    Rng stream = streams.substream(stream_base + l);
    const double bound = std::sqrt(6.0 / (ll.in + ll.out));
    const std::size_t nw = static_cast<std::size_t>(ll.out) * ll.in;
    for (std::size_t i = 0; i < nw; ++i)
      ps.flat[ll.w_off + i] = bound * (2.0 * stream.next_uniform() - 1.0);
    // biases stay zero
    ps.layout.push_back(std::move(ll));
  }
}

ParamStore init_params(const MlpSpec& spec, uint64_t seed) {
  ParamStore ps;
  Rng root(seed);
  append_mlp(ps, spec, "layer", root, 0);
  ps.validate();
  return ps;
}

Mat eval_net(const ParamStore& params, const MlpSpec& spec, const Mat& input,
             int layer_base) {
  if (input.rows() != spec.input_dim())
    throw std::invalid_argument("eval_net: input rows " + std::to_string(input.rows()) +
                                " != net input dim " + std::to_string(spec.input_dim()));
  Mat h = input;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const LayerLayout& ll = params.layout[static_cast<std::size_t>(layer_base + l)];
    Eigen::Map<const Mat> W(params.flat.data() + ll.w_off, ll.out, ll.in);
    Eigen::Map<const Eigen::VectorXd> b(params.flat.data() + ll.b_off, ll.out);
    Mat z(ll.out, h.cols());
    z.noalias() = W * h;
    z.colwise() += b;
    if (l + 1 < spec.n_layers()) {
      const auto& table = PhiTable::instance();
      double* p = z.data();
      for (Eigen::Index i = 0; i < z.size(); ++i) p[i] *= table.cdf(p[i]);
    }
    h = std::move(z);
  }
  return h;
}

void eval_net_jvp(const ParamStore& params, const MlpSpec& spec, const Mat& input,
                  const Mat& direction, Mat& value, Mat& tangent, int layer_base) {
  if (direction.rows() != input.rows() || direction.cols() != input.cols())
    throw std::invalid_argument("eval_net_jvp: direction shape mismatch");
  if (input.rows() != spec.input_dim())
    throw std::invalid_argument("eval_net_jvp: input rows != net input dim");
  Mat h = input, ht = direction;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const LayerLayout& ll = params.layout[static_cast<std::size_t>(layer_base + l)];
    Eigen::Map<const Mat> W(params.flat.data() + ll.w_off, ll.out, ll.in);
    Eigen::Map<const Eigen::VectorXd> b(params.flat.data() + ll.b_off, ll.out);
    Mat z(ll.out, h.cols()), zt(ll.out, h.cols());
    z.noalias() = W * h;
    z.colwise() += b;
    zt.noalias() = W * ht;
    if (l + 1 < spec.n_layers()) {
      const auto& table = PhiTable::instance();
      double* p = z.data();
      double* pt = zt.data();
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        double c, pdf, dpdf;
        table.eval(p[i], c, pdf, dpdf);
        pt[i] *= c + p[i] * pdf;
        p[i] *= c;
      }
    }
    h = std::move(z);
    ht = std::move(zt);
  }
  value = std::move(h);
  tangent = std::move(ht);
}

int tape_mlp(Tape& tape, int store, const ParamStore& params, const MlpSpec& spec, int x,
             int layer_base) {
  int h = x;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const LayerLayout& ll = params.layout[static_cast<std::size_t>(layer_base + l)];
    int w = tape.param(store, ll.w_off, ll.out, ll.in);
    int b = tape.param(store, ll.b_off, ll.out, 1);
    h = tape.affine(w, b, h);
    if (l + 1 < spec.n_layers()) h = tape.gelu(h);
  }
  return h;
}

}  // namespace fae
