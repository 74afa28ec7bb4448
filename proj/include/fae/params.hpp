#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fae {

// One named affine layer inside a flat parameter vector. The weight block is
// `out*in` doubles starting at w_off (column-major out×in), immediately followed
// by the bias block of `out` doubles at b_off.
struct LayerLayout {
  std::string name;
  int out = 0;
  int in = 0;
  std::size_t w_off = 0;
  std::size_t b_off = 0;
};

// Flat parameter vector plus the layer layout that tiles it exactly.
struct ParamStore {
  std::vector<double> flat;
  std::vector<LayerLayout> layout;

  std::size_t size() const { return flat.size(); }

  // Throws if offsets are not ascending, disjoint, and exactly tiling `flat`.
  void validate() const {
    std::size_t expect = 0;
    for (const auto& l : layout) {
      if (l.out <= 0 || l.in <= 0) throw std::invalid_argument("ParamStore: non-positive layer dims");
      if (l.w_off != expect) throw std::invalid_argument("ParamStore: weight offset gap at " + l.name);
      expect += static_cast<std::size_t>(l.out) * l.in;
      if (l.b_off != expect) throw std::invalid_argument("ParamStore: bias offset gap at " + l.name);
      expect += static_cast<std::size_t>(l.out);
    }
    if (expect != flat.size()) throw std::invalid_argument("ParamStore: layout does not tile flat vector");
  }
};

}  // namespace fae
