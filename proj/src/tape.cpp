#include "fae/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "fae/gelu.hpp"

namespace fae {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;

// Accumulate into a possibly-unallocated adjoint.
template <typename Expr>
void acc(Mat& dst, const Expr& e) {
  if (dst.size() == 0)
    dst = e;
  else
    dst += e;
}

// GEMM accumulation without expression temporaries (hot path).
template <typename L, typename R>
void acc_prod(Mat& dst, const L& lhs, const R& rhs) {
  if (dst.size() == 0) {
    dst.resize(lhs.rows(), rhs.cols());
    dst.setZero();
  }
  dst.noalias() += lhs * rhs;
}
}  // namespace

Tape::Tape(std::vector<const ParamStore*> stores) : stores_(std::move(stores)) {
  nodes_.reserve(64);
}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::at(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("tape: node id out of range");
  return nodes_[id];
}

void Tape::check_same_shape(const Mat& a, const Mat& b, const char* who) const {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(who) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

double Tape::scalar(int id) const {
  const Node& n = at(id);
  if (n.val.size() != 1) throw std::invalid_argument("tape: scalar() on non-1x1 node");
  return n.val(0, 0);
}

const Mat& Tape::tangent(int id) const {
  const Node& n = at(id);
  if (!n.has_tan) throw std::invalid_argument("tape: node has no tangent");
  return n.tan;
}

int Tape::constant(Mat v) {
  Node n;
  n.op = Op::kConst;
  n.val = std::move(v);
  return push(std::move(n));
}

int Tape::constant_dual(Mat v, Mat t) {
  check_same_shape(v, t, "constant_dual");
  Node n;
  n.op = Op::kConst;
  n.val = std::move(v);
  n.tan = std::move(t);
  n.has_tan = true;
  return push(std::move(n));
}

int Tape::param(int store, std::size_t offset, int rows, int cols) {
  if (store < 0 || store >= static_cast<int>(stores_.size()))
    throw std::invalid_argument("tape: param store index out of range");
  const ParamStore& ps = *stores_[store];
  const std::size_t need = offset + static_cast<std::size_t>(rows) * cols;
  if (need > ps.flat.size()) throw std::invalid_argument("tape: param slice out of range");
  Node n;
  n.op = Op::kParam;
  n.store = store;
  n.offset = offset;
  n.val = Eigen::Map<const Mat>(ps.flat.data() + offset, rows, cols);
  return push(std::move(n));
}

int Tape::affine(int w, int b, int x) {
  const Node &W = at(w), &B = at(b), &X = at(x);
  if (W.val.cols() != X.val.rows())
    throw std::invalid_argument("affine: weight cols " + std::to_string(W.val.cols()) +
                                " != input rows " + std::to_string(X.val.rows()));
  if (B.val.rows() != W.val.rows() || B.val.cols() != 1)
    throw std::invalid_argument("affine: bias shape mismatch");
  if (W.has_tan || B.has_tan)
    throw std::invalid_argument("affine: parameter tangents unsupported");
  Node n;
  n.op = Op::kAffine;
  n.a = w;
  n.b = b;
  n.c = x;
  n.val.noalias() = W.val * X.val;
  n.val.colwise() += B.val.col(0);
  if (X.has_tan) {
    n.tan.noalias() = W.val * X.tan;
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::gelu(int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kGelu;
  n.a = x;
  const auto& table = PhiTable::instance();
  n.val.resize(X.val.rows(), X.val.cols());
  n.aux1.resize(X.val.rows(), X.val.cols());  // gelu'
  const bool dual = X.has_tan;
  if (dual) n.aux2.resize(X.val.rows(), X.val.cols());  // gelu''
  const double* xv = X.val.data();
  double* yv = n.val.data();
  double* d1 = n.aux1.data();
  double* d2 = dual ? n.aux2.data() : nullptr;
  const Eigen::Index sz = X.val.size();
  for (Eigen::Index i = 0; i < sz; ++i) {
    double c, p, dp;
    table.eval(xv[i], c, p, dp);
    yv[i] = xv[i] * c;
    d1[i] = c + xv[i] * p;
    if (dual) d2[i] = 2.0 * p + xv[i] * dp;
  }
  if (dual) {
    n.tan = n.aux1.cwiseProduct(X.tan);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::exp(int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kExp;
  n.a = x;
  n.val = X.val.array().exp();
  if (X.has_tan) {
    n.tan = n.val.cwiseProduct(X.tan);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::log(int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kLog;
  n.a = x;
  n.val = X.val.array().log();
  if (X.has_tan) {
    n.tan = X.tan.cwiseQuotient(X.val);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::square(int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kSquare;
  n.a = x;
  n.val = X.val.cwiseProduct(X.val);
  if (X.has_tan) {
    n.tan = 2.0 * X.val.cwiseProduct(X.tan);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::sigmoid(int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kSigmoid;
  n.a = x;
  n.val = (1.0 + (-X.val.array()).exp()).inverse();
  if (X.has_tan) {
    n.tan = n.val.cwiseProduct((1.0 - n.val.array()).matrix()).cwiseProduct(X.tan);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::softplus(int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kSoftplus;
  n.a = x;
  // max(x,0) + log1p(exp(-|x|)) — overflow-safe.
  n.val = X.val.array().max(0.0) + (-X.val.array().abs()).exp().log1p();
  n.aux1 = (1.0 + (-X.val.array()).exp()).inverse();  // sigmoid, the derivative
  if (X.has_tan) {
    n.tan = n.aux1.cwiseProduct(X.tan);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::add(int a, int b) { return axpby(1.0, a, 1.0, b); }
int Tape::sub(int a, int b) { return axpby(1.0, a, -1.0, b); }

int Tape::axpby(double ca, int a, double cb, int b) {
  const Node &A = at(a), &B = at(b);
  check_same_shape(A.val, B.val, "axpby");
  Node n;
  n.op = Op::kAxpby;
  n.a = a;
  n.b = b;
  n.c0 = ca;
  n.c1 = cb;
  n.val = ca * A.val + cb * B.val;
  if (A.has_tan || B.has_tan) {
    n.tan = Mat::Zero(A.val.rows(), A.val.cols());
    if (A.has_tan) n.tan += ca * A.tan;
    if (B.has_tan) n.tan += cb * B.tan;
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  const Node &A = at(a), &B = at(b);
  check_same_shape(A.val, B.val, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a;
  n.b = b;
  n.val = A.val.cwiseProduct(B.val);
  if (A.has_tan || B.has_tan) {
    n.tan = Mat::Zero(A.val.rows(), A.val.cols());
    if (A.has_tan) n.tan += A.tan.cwiseProduct(B.val);
    if (B.has_tan) n.tan += A.val.cwiseProduct(B.tan);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::scale(double c, int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kScale;
  n.a = x;
  n.c0 = c;
  n.val = c * X.val;
  if (X.has_tan) {
    n.tan = c * X.tan;
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::shift(double c, int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kShift;
  n.a = x;
  n.c0 = c;
  n.val = X.val.array() + c;
  if (X.has_tan) {
    n.tan = X.tan;
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::add_n(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: empty input list");
  Node n;
  n.op = Op::kAddN;
  n.many = xs;
  n.val = at(xs[0]).val;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    check_same_shape(n.val, at(xs[i]).val, "add_n");
    n.val += at(xs[i]).val;
  }
  for (int x : xs) {
    if (at(x).has_tan) {
      n.tan = Mat::Zero(n.val.rows(), n.val.cols());
      for (int y : xs)
        if (at(y).has_tan) n.tan += at(y).tan;
      n.has_tan = true;
      break;
    }
  }
  return push(std::move(n));
}

int Tape::repeat_cols(int x, int nrep) {
  if (nrep < 1) throw std::invalid_argument("repeat_cols: count < 1");
  const Node& X = at(x);
  Node n;
  n.op = Op::kRepeatCols;
  n.a = x;
  n.i0 = nrep;
  const Eigen::Index r = X.val.rows(), c = X.val.cols();
  n.val.resize(r, c * nrep);
  for (Eigen::Index j = 0; j < c; ++j)
    n.val.middleCols(j * nrep, nrep).colwise() = X.val.col(j);
  if (X.has_tan) {
    n.tan.resize(r, c * nrep);
    for (Eigen::Index j = 0; j < c; ++j)
      n.tan.middleCols(j * nrep, nrep).colwise() = X.tan.col(j);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::mean_cols(int x, double w) {
  const Node& X = at(x);
  if (X.val.cols() < 1) throw std::invalid_argument("mean_cols: empty input");
  Node n;
  n.op = Op::kMeanCols;
  n.a = x;
  n.c0 = w;
  const double f = w / static_cast<double>(X.val.cols());
  n.val = f * X.val.rowwise().sum();
  if (X.has_tan) {
    n.tan = f * X.tan.rowwise().sum();
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::concat_rows(const std::vector<int>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input list");
  Eigen::Index rows = 0;
  const Eigen::Index cols = at(xs[0]).val.cols();
  bool any_tan = false;
  for (int x : xs) {
    if (at(x).val.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += at(x).val.rows();
    any_tan = any_tan || at(x).has_tan;
  }
  Node n;
  n.op = Op::kConcatRows;
  n.many = xs;
  n.val.resize(rows, cols);
  if (any_tan) n.tan = Mat::Zero(rows, cols);
  Eigen::Index r0 = 0;
  for (int x : xs) {
    const Node& X = at(x);
    n.val.middleRows(r0, X.val.rows()) = X.val;
    if (X.has_tan) n.tan.middleRows(r0, X.val.rows()) = X.tan;
    r0 += X.val.rows();
  }
  n.has_tan = any_tan;
  return push(std::move(n));
}

int Tape::slice_rows(int x, int r0, int rows) {
  const Node& X = at(x);
  if (r0 < 0 || rows < 1 || r0 + rows > X.val.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  Node n;
  n.op = Op::kSliceRows;
  n.a = x;
  n.i0 = r0;
  n.i1 = rows;
  n.val = X.val.middleRows(r0, rows);
  if (X.has_tan) {
    n.tan = X.tan.middleRows(r0, rows);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::transpose(int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kTranspose;
  n.a = x;
  n.val = X.val.transpose();
  if (X.has_tan) {
    n.tan = X.tan.transpose();
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::sum(int x) {
  const Node& X = at(x);
  Node n;
  n.op = Op::kSum;
  n.a = x;
  n.val = Mat::Constant(1, 1, X.val.sum());
  if (X.has_tan) {
    n.tan = Mat::Constant(1, 1, X.tan.sum());
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::dot(int a, int b) {
  const Node &A = at(a), &B = at(b);
  check_same_shape(A.val, B.val, "dot");
  Node n;
  n.op = Op::kDot;
  n.a = a;
  n.b = b;
  n.val = Mat::Constant(1, 1, A.val.cwiseProduct(B.val).sum());
  if (A.has_tan || B.has_tan) {
    double t = 0.0;
    if (A.has_tan) t += A.tan.cwiseProduct(B.val).sum();
    if (B.has_tan) t += A.val.cwiseProduct(B.tan).sum();
    n.tan = Mat::Constant(1, 1, t);
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::dot_const(int x, Mat c) {
  const Node& X = at(x);
  check_same_shape(X.val, c, "dot_const");
  Node n;
  n.op = Op::kDotConst;
  n.a = x;
  n.cdata = std::move(c);
  n.val = Mat::Constant(1, 1, X.val.cwiseProduct(n.cdata).sum());
  if (X.has_tan) {
    n.tan = Mat::Constant(1, 1, X.tan.cwiseProduct(n.cdata).sum());
    n.has_tan = true;
  }
  return push(std::move(n));
}

int Tape::tangent_of(int x) {
  const Node& X = at(x);
  if (!X.has_tan) throw std::invalid_argument("tangent_of: input carries no tangent");
  Node n;
  n.op = Op::kTangentOf;
  n.a = x;
  n.val = X.tan;
  return push(std::move(n));
}

int Tape::gauss_pdf(int mu, int sigma, Mat coords) {
  const Node &M = at(mu), &S = at(sigma);
  if (M.val.rows() != 1 || S.val.rows() != 1 || M.val.cols() != S.val.cols())
    throw std::invalid_argument("gauss_pdf: mu and sigma must be matching row vectors");
  if (M.has_tan || S.has_tan)
    throw std::invalid_argument("gauss_pdf: tangents unsupported");
  if (coords.rows() != 1) throw std::invalid_argument("gauss_pdf: coords must be a row vector");
  if ((S.val.array() <= 0.0).any()) throw std::invalid_argument("gauss_pdf: sigma must be positive");
  Node n;
  n.op = Op::kGaussPdf;
  n.a = mu;
  n.b = sigma;
  n.cdata = std::move(coords);
  // row l of the output is the pdf with (mu_l, sigma_l) over the coords
  const Eigen::Index q = M.val.cols(), c = n.cdata.cols();
  n.val.resize(q, c);
  for (Eigen::Index l = 0; l < q; ++l) {
    const double m = M.val(0, l), s = S.val(0, l);
    n.val.row(l) = (kInvSqrt2Pi / s) *
                   (-0.5 * ((n.cdata.array() - m) / s).square()).exp().matrix();
  }
  return push(std::move(n));
}

void Tape::backward(int root) {
  const Node& R = at(root);
  if (R.val.size() != 1) throw std::invalid_argument("backward: root is not scalar");
  const int n = static_cast<int>(nodes_.size());
  adj_.assign(n, Mat());
  tadj_.assign(n, Mat());
  grads_.assign(stores_.size(), {});
  for (std::size_t s = 0; s < stores_.size(); ++s)
    grads_[s].assign(stores_[s]->flat.size(), 0.0);
  adj_[root] = Mat::Ones(1, 1);

  for (int i = n - 1; i >= 0; --i) {
    const bool haveA = adj_[i].size() != 0;
    const bool haveT = tadj_[i].size() != 0;
    if (!haveA && !haveT) continue;
    Node& nd = nodes_[i];
    const Mat& A = adj_[i];
    const Mat& T = tadj_[i];

    switch (nd.op) {
      case Op::kConst:
        break;
      case Op::kParam: {
        if (haveA) {
          double* g = grads_[nd.store].data() + nd.offset;
          Eigen::Map<Mat>(g, A.rows(), A.cols()) += A;
        }
        // Params carry no tangent; tangent adjoints cannot reach them.
        break;
      }
      case Op::kAffine: {
        const Node& W = nodes_[nd.a];
        const Node& X = nodes_[nd.c];
        Mat& Wg = adj_[nd.a];
        Mat& Bg = adj_[nd.b];
        Mat& Xa = adj_[nd.c];
        if (haveA) {
          acc_prod(Wg, A, X.val.transpose());
          acc(Bg, A.rowwise().sum());
          acc_prod(Xa, W.val.transpose(), A);
        }
        if (haveT) {
          // Ẏ = W·Ẋ: tangent adjoints reach W (via Ẋ) and Ẋ itself.
          acc_prod(Wg, T, X.tan.transpose());
          acc_prod(tadj_[nd.c], W.val.transpose(), T);
        }
        break;
      }
      case Op::kGelu: {
        const Node& X = nodes_[nd.a];
        Mat& Xa = adj_[nd.a];
        if (haveA) acc(Xa, nd.aux1.cwiseProduct(A));
        if (haveT) {
          acc(Xa, nd.aux2.cwiseProduct(X.tan).cwiseProduct(T));
          acc(tadj_[nd.a], nd.aux1.cwiseProduct(T));
        }
        break;
      }
      case Op::kExp: {
        const Node& X = nodes_[nd.a];
        if (haveA) acc(adj_[nd.a], nd.val.cwiseProduct(A));
        if (haveT) {
          acc(adj_[nd.a], nd.val.cwiseProduct(X.tan).cwiseProduct(T));
          acc(tadj_[nd.a], nd.val.cwiseProduct(T));
        }
        break;
      }
      case Op::kLog: {
        const Node& X = nodes_[nd.a];
        if (haveA) acc(adj_[nd.a], A.cwiseQuotient(X.val));
        if (haveT) {
          acc(adj_[nd.a], -X.tan.cwiseProduct(T).cwiseQuotient(X.val.cwiseProduct(X.val)));
          acc(tadj_[nd.a], T.cwiseQuotient(X.val));
        }
        break;
      }
      case Op::kSquare: {
        const Node& X = nodes_[nd.a];
        if (haveA) acc(adj_[nd.a], 2.0 * X.val.cwiseProduct(A));
        if (haveT) {
          acc(adj_[nd.a], 2.0 * X.tan.cwiseProduct(T));
          acc(tadj_[nd.a], 2.0 * X.val.cwiseProduct(T));
        }
        break;
      }
      case Op::kSigmoid: {
        const Node& X = nodes_[nd.a];
        Mat d1 = nd.val.cwiseProduct((1.0 - nd.val.array()).matrix());
        if (haveA) acc(adj_[nd.a], d1.cwiseProduct(A));
        if (haveT) {
          Mat d2 = d1.cwiseProduct((1.0 - 2.0 * nd.val.array()).matrix());
          acc(adj_[nd.a], d2.cwiseProduct(X.tan).cwiseProduct(T));
          acc(tadj_[nd.a], d1.cwiseProduct(T));
        }
        break;
      }
      case Op::kSoftplus: {
        const Node& X = nodes_[nd.a];
        if (haveA) acc(adj_[nd.a], nd.aux1.cwiseProduct(A));
        if (haveT) {
          Mat d2 = nd.aux1.cwiseProduct((1.0 - nd.aux1.array()).matrix());
          acc(adj_[nd.a], d2.cwiseProduct(X.tan).cwiseProduct(T));
          acc(tadj_[nd.a], nd.aux1.cwiseProduct(T));
        }
        break;
      }
      case Op::kAxpby: {
        if (haveA) {
          acc(adj_[nd.a], nd.c0 * A);
          acc(adj_[nd.b], nd.c1 * A);
        }
        if (haveT) {
          if (nodes_[nd.a].has_tan) acc(tadj_[nd.a], nd.c0 * T);
          if (nodes_[nd.b].has_tan) acc(tadj_[nd.b], nd.c1 * T);
        }
        break;
      }
      case Op::kMul: {
        const Node& X = nodes_[nd.a];
        const Node& Y = nodes_[nd.b];
        if (haveA) {
          acc(adj_[nd.a], Y.val.cwiseProduct(A));
          acc(adj_[nd.b], X.val.cwiseProduct(A));
        }
        if (haveT) {
          if (Y.has_tan) acc(adj_[nd.a], Y.tan.cwiseProduct(T));
          if (X.has_tan) acc(adj_[nd.b], X.tan.cwiseProduct(T));
          if (X.has_tan) acc(tadj_[nd.a], Y.val.cwiseProduct(T));
          if (Y.has_tan) acc(tadj_[nd.b], X.val.cwiseProduct(T));
        }
        break;
      }
      case Op::kScale: {
        if (haveA) acc(adj_[nd.a], nd.c0 * A);
        if (haveT) acc(tadj_[nd.a], nd.c0 * T);
        break;
      }
      case Op::kShift: {
        if (haveA) acc(adj_[nd.a], A);
        if (haveT) acc(tadj_[nd.a], T);
        break;
      }
      case Op::kAddN: {
        for (int x : nd.many) {
          if (haveA) acc(adj_[x], A);
          if (haveT && nodes_[x].has_tan) acc(tadj_[x], T);
        }
        break;
      }
      case Op::kRepeatCols: {
        const int nrep = nd.i0;
        const Node& X = nodes_[nd.a];
        const Eigen::Index c = X.val.cols();
        if (haveA) {
          Mat g(X.val.rows(), c);
          for (Eigen::Index j = 0; j < c; ++j)
            g.col(j) = A.middleCols(j * nrep, nrep).rowwise().sum();
          acc(adj_[nd.a], g);
        }
        if (haveT) {
          Mat g(X.val.rows(), c);
          for (Eigen::Index j = 0; j < c; ++j)
            g.col(j) = T.middleCols(j * nrep, nrep).rowwise().sum();
          acc(tadj_[nd.a], g);
        }
        break;
      }
      case Op::kMeanCols: {
        const Node& X = nodes_[nd.a];
        const double f = nd.c0 / static_cast<double>(X.val.cols());
        if (haveA) acc(adj_[nd.a], (f * A).replicate(1, X.val.cols()));
        if (haveT) acc(tadj_[nd.a], (f * T).replicate(1, X.val.cols()));
        break;
      }
      case Op::kConcatRows: {
        Eigen::Index r0 = 0;
        for (int x : nd.many) {
          const Eigen::Index r = nodes_[x].val.rows();
          if (haveA) acc(adj_[x], A.middleRows(r0, r));
          if (haveT && nodes_[x].has_tan) acc(tadj_[x], T.middleRows(r0, r));
          r0 += r;
        }
        break;
      }
      case Op::kSliceRows: {
        const Node& X = nodes_[nd.a];
        if (haveA) {
          Mat g = Mat::Zero(X.val.rows(), X.val.cols());
          g.middleRows(nd.i0, nd.i1) = A;
          acc(adj_[nd.a], g);
        }
        if (haveT) {
          Mat g = Mat::Zero(X.val.rows(), X.val.cols());
          g.middleRows(nd.i0, nd.i1) = T;
          acc(tadj_[nd.a], g);
        }
        break;
      }
      case Op::kTranspose: {
        if (haveA) acc(adj_[nd.a], A.transpose());
        if (haveT) acc(tadj_[nd.a], T.transpose());
        break;
      }
      case Op::kSum: {
        const Node& X = nodes_[nd.a];
        if (haveA) acc(adj_[nd.a], Mat::Constant(X.val.rows(), X.val.cols(), A(0, 0)));
        if (haveT) acc(tadj_[nd.a], Mat::Constant(X.val.rows(), X.val.cols(), T(0, 0)));
        break;
      }
      case Op::kDot: {
        const Node& X = nodes_[nd.a];
        const Node& Y = nodes_[nd.b];
        if (haveA) {
          acc(adj_[nd.a], A(0, 0) * Y.val);
          acc(adj_[nd.b], A(0, 0) * X.val);
        }
        if (haveT) {
          if (Y.has_tan) acc(adj_[nd.a], T(0, 0) * Y.tan);
          if (X.has_tan) acc(adj_[nd.b], T(0, 0) * X.tan);
          if (X.has_tan) acc(tadj_[nd.a], T(0, 0) * Y.val);
          if (Y.has_tan) acc(tadj_[nd.b], T(0, 0) * X.val);
        }
        break;
      }
      case Op::kDotConst: {
        if (haveA) acc(adj_[nd.a], A(0, 0) * nd.cdata);
        if (haveT) acc(tadj_[nd.a], T(0, 0) * nd.cdata);
        break;
      }
      case Op::kTangentOf: {
        if (haveA) acc(tadj_[nd.a], A);
        break;
      }
      case Op::kGaussPdf: {
        if (haveA) {
          // y_lc = φ((x_c−μ_l)/σ_l)/σ_l:  ∂y/∂μ = y·(x−μ)/σ², ∂y/∂σ = y·((x−μ)²−σ²)/σ³.
          const Eigen::Index q = nodes_[nd.a].val.cols();
          Mat gm(1, q), gs(1, q);
          for (Eigen::Index l = 0; l < q; ++l) {
            const double m = nodes_[nd.a].val(0, l);
            const double s = nodes_[nd.b].val(0, l);
            Eigen::ArrayXXd diff = nd.cdata.array() - m;
            Eigen::ArrayXXd arow = A.row(l).array();
            Eigen::ArrayXXd yrow = nd.val.row(l).array();
            gm(0, l) = (arow * yrow * diff).sum() / (s * s);
            gs(0, l) = (arow * yrow * (diff.square() - s * s)).sum() / (s * s * s);
          }
          acc(adj_[nd.a], gm);
          acc(adj_[nd.b], gs);
        }
        break;
      }
    }
  }
}

}  // namespace fae
