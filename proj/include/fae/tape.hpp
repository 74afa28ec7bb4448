#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fae/params.hpp"

namespace fae {

using Mat = Eigen::MatrixXd;

// Single-use reverse-mode tape over dense double matrices.
//
// Nodes may carry a forward-mode tangent alongside their value (seeded through
// constant_dual); the reverse sweep then propagates adjoints for both channels,
// so a scalar loss that consumes a tangent (via tangent_of) is differentiated
// exactly with respect to every parameter — forward-over-reverse in one pass.
//
// All reductions run in fixed order; identical inputs give bit-identical
// outputs. A tape records one loss evaluation and is discarded after backward().
class Tape {
 public:
  explicit Tape(std::vector<const ParamStore*> stores);

  // ---- leaves ----
  int constant(Mat v);
  // Constant with a declared input-direction tangent (same shape).
  int constant_dual(Mat v, Mat t);
  // View of stores[store].flat[offset .. offset+rows*cols) as a column-major
  // rows×cols matrix. Gradients accumulate into grad(store) at the same slice.
  int param(int store, std::size_t offset, int rows, int cols);

  // ---- matrix ops ----
  int affine(int w, int b, int x);  // W·X + b·1ᵀ
  int gelu(int x);
  int exp(int x);
  int log(int x);
  int square(int x);
  int sigmoid(int x);
  int softplus(int x);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);                          // elementwise
  int axpby(double ca, int a, double cb, int b);  // ca·A + cb·B
  int scale(double c, int x);
  int shift(double c, int x);
  int add_n(const std::vector<int>& xs);
  int repeat_cols(int x, int n);  // each column repeated n times consecutively
  int mean_cols(int x, double w); // w × rowwise mean, result has one column
  int concat_rows(const std::vector<int>& xs);
  int slice_rows(int x, int r0, int rows);
  int transpose(int x);
  int sum(int x);                 // 1×1
  int dot(int a, int b);          // 1×1, Σ A⊙B
  int dot_const(int x, Mat c);    // 1×1, Σ X⊙C with constant C
  // Value := tangent of x. The bridge from forward-mode derivatives into the
  // loss; x must carry a tangent.
  int tangent_of(int x);
  // Gaussian pdf table: mu, sigma are 1×q rows, coords is 1×n; the result is
  // q×n with row l = N(mu_l, sigma_l²; coords). Inputs must be tangent-free.
  int gauss_pdf(int mu, int sigma, Mat coords);

  // ---- access ----
  const Mat& value(int id) const { return nodes_[id].val; }
  double scalar(int id) const;
  bool has_tangent(int id) const { return nodes_[id].has_tan; }
  const Mat& tangent(int id) const;

  // Reverse sweep from a 1×1 root; fills per-store gradients.
  void backward(int root);
  const std::vector<double>& grad(int store) const { return grads_[store]; }

 private:
  enum class Op : uint8_t {
    kConst, kParam, kAffine, kGelu, kExp, kLog, kSquare, kSigmoid, kSoftplus,
    kMul, kAxpby, kScale, kShift, kAddN, kRepeatCols, kMeanCols,
    kConcatRows, kSliceRows, kTranspose, kSum, kDot, kDotConst, kTangentOf,
    kGaussPdf,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    std::vector<int> many;
    double c0 = 0.0, c1 = 0.0;
    int i0 = 0, i1 = 0;  // ints: repeat count / slice rows / etc.
    int store = -1;
    std::size_t offset = 0;
    Mat val, tan;
    Mat aux1, aux2;  // op caches (e.g. gelu derivative tables)
    Mat cdata;       // dot_const / gauss_pdf constants
    bool has_tan = false;
  };

  int push(Node n);
  const Node& at(int id) const;
  void check_same_shape(const Mat& a, const Mat& b, const char* who) const;

  std::vector<const ParamStore*> stores_;
  std::vector<Node> nodes_;
  std::vector<Mat> adj_, tadj_;
  std::vector<std::vector<double>> grads_;
};

}  // namespace fae
