#include "dctx/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace dctx {

namespace {
[[noreturn]] void shape_fail(const char* op, const Mat& a, const Mat& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.rows() << "x" << a.cols()
     << " and " << b.rows() << "x" << b.cols();
  throw ShapeError(os.str());
}
}  // namespace

Mat softmax_rows_value(const Mat& a) {
  Mat out(a.rows(), a.cols());
  for (long i = 0; i < a.rows(); ++i) {
    double m = a.row(i).maxCoeff();
    Eigen::RowVectorXd e = (a.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

double log_sum_exp(const Eigen::VectorXd& x) {
  double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

Var Tape::push(Mat val, std::function<void()> back) {
  Node n;
  n.grad = Mat::Zero(val.rows(), val.cols());
  n.val = std::move(val);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat v) { return push(std::move(v)); }

Var Tape::param(Param& p) {
  Var out = push(p.value);
  int id = out.id;
  nodes_[id].back = [this, id, &p]() { p.grad += g(id); };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  int ia = check(a), ib = check(b);
  if (v(ia).cols() != v(ib).rows()) shape_fail("matmul", v(ia), v(ib));
  Var out = push(v(ia) * v(ib));
  int io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    g(ia) += g(io) * v(ib).transpose();
    g(ib) += v(ia).transpose() * g(io);
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  int ia = check(a), ib = check(b);
  if (v(ia).rows() != v(ib).rows() || v(ia).cols() != v(ib).cols())
    shape_fail("add", v(ia), v(ib));
  Var out = push(v(ia) + v(ib));
  int io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    g(ia) += g(io);
    g(ib) += g(io);
  };
  return out;
}

Var Tape::add_rowvec(Var a, Var bias) {
  int ia = check(a), ib = check(bias);
  if (v(ib).rows() != 1 || v(ia).cols() != v(ib).cols())
    shape_fail("add_rowvec", v(ia), v(ib));
  Mat out = v(ia);
  out.rowwise() += Eigen::RowVectorXd(v(ib).row(0));
  Var o = push(std::move(out));
  int io = o.id;
  nodes_[io].back = [this, ia, ib, io]() {
    g(ia) += g(io);
    g(ib).row(0) += g(io).colwise().sum();
  };
  return o;
}

Var Tape::sub(Var a, Var b) {
  int ia = check(a), ib = check(b);
  if (v(ia).rows() != v(ib).rows() || v(ia).cols() != v(ib).cols())
    shape_fail("sub", v(ia), v(ib));
  Var out = push(v(ia) - v(ib));
  int io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    g(ia) += g(io);
    g(ib) -= g(io);
  };
  return out;
}

Var Tape::mul(Var a, Var b) {
  int ia = check(a), ib = check(b);
  if (v(ia).rows() != v(ib).rows() || v(ia).cols() != v(ib).cols())
    shape_fail("mul", v(ia), v(ib));
  Var out = push(v(ia).cwiseProduct(v(ib)));
  int io = out.id;
  nodes_[io].back = [this, ia, ib, io]() {
    g(ia) += g(io).cwiseProduct(v(ib));
    g(ib) += g(io).cwiseProduct(v(ia));
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  int ia = check(a);
  Var out = push(v(ia) * s);
  int io = out.id;
  nodes_[io].back = [this, ia, io, s]() { g(ia) += g(io) * s; };
  return out;
}

Var Tape::one_minus(Var a) {
  int ia = check(a);
  Var out = push((1.0 - v(ia).array()).matrix());
  int io = out.id;
  nodes_[io].back = [this, ia, io]() { g(ia) -= g(io); };
  return out;
}

Var Tape::tanh_(Var a) {
  int ia = check(a);
  Var out = push(v(ia).array().tanh().matrix());
  int io = out.id;
  nodes_[io].back = [this, ia, io]() {
    g(ia) += g(io).cwiseProduct((1.0 - v(io).array().square()).matrix());
  };
  return out;
}

Var Tape::sigmoid_(Var a) {
  int ia = check(a);
  Var out = push((1.0 / (1.0 + (-v(ia).array()).exp())).matrix());
  int io = out.id;
  nodes_[io].back = [this, ia, io]() {
    g(ia) += g(io).cwiseProduct(
        (v(io).array() * (1.0 - v(io).array())).matrix());
  };
  return out;
}

Var Tape::relu_(Var a) {
  int ia = check(a);
  Var out = push(v(ia).cwiseMax(0.0));
  int io = out.id;
  nodes_[io].back = [this, ia, io]() {
    g(ia) += g(io).cwiseProduct(
        (v(ia).array() > 0.0).cast<double>().matrix());
  };
  return out;
}

Var Tape::concat_cols(Var a, Var b) {
  int ia = check(a), ib = check(b);
  if (v(ia).rows() != v(ib).rows()) shape_fail("concat_cols", v(ia), v(ib));
  Mat out(v(ia).rows(), v(ia).cols() + v(ib).cols());
  out << v(ia), v(ib);
  Var o = push(std::move(out));
  int io = o.id;
  nodes_[io].back = [this, ia, ib, io]() {
    long ca = v(ia).cols();
    g(ia) += g(io).leftCols(ca);
    g(ib) += g(io).rightCols(v(ib).cols());
  };
  return o;
}

Var Tape::concat_rows(Var a, Var b) {
  int ia = check(a), ib = check(b);
  if (v(ia).cols() != v(ib).cols()) shape_fail("concat_rows", v(ia), v(ib));
  Mat out(v(ia).rows() + v(ib).rows(), v(ia).cols());
  out << v(ia), v(ib);
  Var o = push(std::move(out));
  int io = o.id;
  nodes_[io].back = [this, ia, ib, io]() {
    long ra = v(ia).rows();
    g(ia) += g(io).topRows(ra);
    g(ib) += g(io).bottomRows(v(ib).rows());
  };
  return o;
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: empty input");
  std::vector<int> ids;
  ids.reserve(rows.size());
  long c = -1;
  for (Var r : rows) {
    int i = check(r);
    if (v(i).rows() != 1) throw ShapeError("stack_rows: inputs must be 1 x C");
    if (c < 0) c = v(i).cols();
    else if (v(i).cols() != c) shape_fail("stack_rows", v(ids[0]), v(i));
    ids.push_back(i);
  }
  Mat out(static_cast<long>(ids.size()), c);
  for (size_t k = 0; k < ids.size(); ++k) out.row(k) = v(ids[k]).row(0);
  Var o = push(std::move(out));
  int io = o.id;
  nodes_[io].back = [this, ids, io]() {
    for (size_t k = 0; k < ids.size(); ++k)
      g(ids[k]).row(0) += g(io).row(static_cast<long>(k));
  };
  return o;
}

Var Tape::rows(Var a, int start, int count) {
  int ia = check(a);
  if (start < 0 || count < 1 || start + count > v(ia).rows())
    throw ShapeError("rows: slice out of range");
  Var out = push(v(ia).middleRows(start, count));
  int io = out.id;
  nodes_[io].back = [this, ia, io, start, count]() {
    g(ia).middleRows(start, count) += g(io);
  };
  return out;
}

Var Tape::cols(Var a, int start, int count) {
  int ia = check(a);
  if (start < 0 || count < 1 || start + count > v(ia).cols())
    throw ShapeError("cols: slice out of range");
  Var out = push(v(ia).middleCols(start, count));
  int io = out.id;
  nodes_[io].back = [this, ia, io, start, count]() {
    g(ia).middleCols(start, count) += g(io);
  };
  return out;
}

Var Tape::transpose(Var a) {
  int ia = check(a);
  Var out = push(v(ia).transpose());
  int io = out.id;
  nodes_[io].back = [this, ia, io]() { g(ia) += g(io).transpose(); };
  return out;
}

Var Tape::max_over_rows(Var a, int n_valid) {
  int ia = check(a);
  if (n_valid < 1 || n_valid > v(ia).rows())
    throw ShapeError("max_over_rows: n_valid out of range");
  long c = v(ia).cols();
  Mat out(1, c);
  std::vector<long> arg(static_cast<size_t>(c));
  for (long j = 0; j < c; ++j) {
    long best = 0;
    for (long i = 1; i < n_valid; ++i)
      if (v(ia)(i, j) > v(ia)(best, j)) best = i;
    arg[static_cast<size_t>(j)] = best;
    out(0, j) = v(ia)(best, j);
  }
  Var o = push(std::move(out));
  int io = o.id;
  nodes_[io].back = [this, ia, io, arg]() {
    for (long j = 0; j < v(io).cols(); ++j)
      g(ia)(arg[static_cast<size_t>(j)], j) += g(io)(0, j);
  };
  return o;
}

Var Tape::softmax_rows(Var a) {
  int ia = check(a);
  Var out = push(softmax_rows_value(v(ia)));
  int io = out.id;
  nodes_[io].back = [this, ia, io]() {
    for (long i = 0; i < v(io).rows(); ++i) {
      double dot = g(io).row(i).dot(v(io).row(i));
      g(ia).row(i) +=
          (g(io).row(i).array() - dot).matrix().cwiseProduct(v(io).row(i));
    }
  };
  return out;
}

Var Tape::dropout(Var a, double rate, std::mt19937_64& rng, bool training) {
  int ia = check(a);
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw ShapeError("dropout: rate must be < 1");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat mask(v(ia).rows(), v(ia).cols());
  double keep = 1.0 - rate;
  for (long i = 0; i < mask.rows(); ++i)
    for (long j = 0; j < mask.cols(); ++j)
      mask(i, j) = u(rng) < keep ? 1.0 / keep : 0.0;
  Var out = push(v(ia).cwiseProduct(mask));
  int io = out.id;
  nodes_[io].back = [this, ia, io, mask]() {
    g(ia) += g(io).cwiseProduct(mask);
  };
  return out;
}

Var Tape::softmax_cross_entropy(Var logits, const std::vector<int>& targets,
                                const std::vector<bool>& mask) {
  int il = check(logits);
  long n = v(il).rows(), k = v(il).cols();
  if (static_cast<long>(targets.size()) != n ||
      static_cast<long>(mask.size()) != n)
    throw ShapeError("softmax_cross_entropy: target/mask length mismatch");
  double loss = 0.0;
  Mat probs = softmax_rows_value(v(il));
  for (long i = 0; i < n; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= k)
      throw ShapeError("softmax_cross_entropy: target out of range");
    double m = v(il).row(i).maxCoeff();
    double lse = m + std::log((v(il).row(i).array() - m).exp().sum());
    loss += lse - v(il)(i, t);
  }
  Var out = push(Mat::Constant(1, 1, loss));
  int io = out.id;
  nodes_[io].back = [this, il, io, probs, targets, mask]() {
    double s = g(io)(0, 0);
    for (long i = 0; i < probs.rows(); ++i) {
      if (!mask[static_cast<size_t>(i)]) continue;
      g(il).row(i) += s * probs.row(i);
      g(il)(i, targets[static_cast<size_t>(i)]) -= s;
    }
  };
  return out;
}

Var Tape::sum(Var a) {
  int ia = check(a);
  Var out = push(Mat::Constant(1, 1, v(ia).sum()));
  int io = out.id;
  nodes_[io].back = [this, ia, io]() {
    g(ia).array() += g(io)(0, 0);
  };
  return out;
}

Var Tape::add_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) return constant(Mat::Zero(1, 1));
  std::vector<int> ids;
  double total = 0.0;
  for (Var x : xs) {
    int i = check(x);
    if (v(i).rows() != 1 || v(i).cols() != 1)
      throw ShapeError("add_scalars: inputs must be 1x1");
    total += v(i)(0, 0);
    ids.push_back(i);
  }
  Var out = push(Mat::Constant(1, 1, total));
  int io = out.id;
  nodes_[io].back = [this, ids, io]() {
    for (int i : ids) g(i)(0, 0) += g(io)(0, 0);
  };
  return out;
}

Var Tape::custom(const std::vector<Var>& inputs, Mat value, CustomBack back) {
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (Var in : inputs) ids.push_back(check(in));
  Var out = push(std::move(value));
  int io = out.id;
  nodes_[io].back = [this, ids, io, back = std::move(back)]() {
    std::vector<Mat*> grads;
    grads.reserve(ids.size());
    for (int i : ids) grads.push_back(&g(i));
    back(g(io), grads);
  };
  return out;
}

void Tape::backward(Var loss) {
  int il = check(loss);
  if (v(il).rows() != 1 || v(il).cols() != 1)
    throw ShapeError("backward: loss must be a 1x1 scalar");
  nodes_[il].grad(0, 0) += 1.0;
  for (int i = il; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back();
}

}  // namespace dctx
