#pragma once

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dctx {

using Mat = Eigen::MatrixXd;

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Named trainable tensor. Gradients accumulate into `grad` across backward
/// passes until explicitly zeroed.
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, Mat v)
      : name(std::move(n)), value(std::move(v)),
        grad(Mat::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

class Tape;

/// Handle to a node on a Tape. Invalid (default) handles have tape == nullptr.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr; }
  const Mat& val() const;
  long rows() const { return val().rows(); }
  long cols() const { return val().cols(); }
};

/// Reverse-mode tape over dense double matrices. One tape corresponds to one
/// forward pass; build a fresh tape per training step. Single-threaded.
class Tape {
 public:
  Var constant(Mat v);
  /// Leaf tied to a Param: backward adds into p.grad.
  Var param(Param& p);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);            // same shape
  Var add_rowvec(Var a, Var bias);  // bias is 1 x C, broadcast over rows of a
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  Var one_minus(Var a);  // 1 - a, elementwise

  Var tanh_(Var a);
  Var sigmoid_(Var a);
  Var relu_(Var a);

  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var stack_rows(const std::vector<Var>& rows);  // each 1 x C -> n x C
  Var rows(Var a, int start, int count);
  Var cols(Var a, int start, int count);
  Var transpose(Var a);

  /// Column-wise max over the first n_valid rows; result 1 x C.
  Var max_over_rows(Var a, int n_valid);
  /// Row-wise softmax (numerically stabilized).
  Var softmax_rows(Var a);

  /// Inverted dropout; identity when !training or rate == 0.
  Var dropout(Var a, double rate, std::mt19937_64& rng, bool training);

  /// Sum over unmasked rows of -log softmax(logits_row)[target]. Scalar 1x1.
  Var softmax_cross_entropy(Var logits, const std::vector<int>& targets,
                            const std::vector<bool>& mask);

  Var sum(Var a);  // sum of all entries -> 1x1
  Var add_scalars(const std::vector<Var>& xs);

  /// Escape hatch for ops with hand-derived gradients (CRF loss). The
  /// callback receives the output gradient and one accumulator per input,
  /// in the order the inputs were passed.
  using CustomBack =
      std::function<void(const Mat& out_grad, const std::vector<Mat*>& in_grads)>;
  Var custom(const std::vector<Var>& inputs, Mat value, CustomBack back);

  /// Populates gradients of every node (and attached Param) reachable from
  /// loss. loss must be 1x1.
  void backward(Var loss);

  const Mat& value(Var v) const { return nodes_[check(v)].val; }
  const Mat& grad_of(Var v) const { return nodes_[check(v)].grad; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void()> back;  // null for leaves
  };

  int check(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw std::logic_error("Var does not belong to this tape");
    return v.id;
  }
  Var push(Mat val, std::function<void()> back = nullptr);
  Mat& g(int id) { return nodes_[id].grad; }
  const Mat& v(int id) const { return nodes_[id].val; }

  std::vector<Node> nodes_;
  friend struct Var;
};

inline const Mat& Var::val() const { return tape->value(*this); }

/// Row-wise softmax of a plain matrix (shared by tape ops and decoders).
Mat softmax_rows_value(const Mat& a);

/// log(sum(exp(x))) over a vector, stabilized.
double log_sum_exp(const Eigen::VectorXd& x);

}  // namespace dctx
