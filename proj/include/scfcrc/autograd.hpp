#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

// Minimal reverse-mode differentiation over dense double matrices. A Tape
// records one forward pass; backward() walks it in reverse and accumulates
// gradients into the Parameters that were bound with Tape::param.
namespace scfcrc::ag {

using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat&)>;

  Var constant(Mat value);
  // A differentiable leaf whose gradient is readable through grad().
  Var input(Mat value);
  Var param(Parameter& p);

  void backward(const Var& loss);
  // Gradient of the last backward() with respect to v; zeros if none reached it.
  Mat grad(const Var& v) const;

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  Var push(Mat value, bool requires_grad, Backward back);

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    Backward back;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;  // deque: value() references survive later pushes
};

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
// x * W^T + b, W is (out x in), b is (1 x out).
Var linear(const Var& x, const Var& w, const Var& b);
Var linear(const Var& x, const Var& w);
Var relu(const Var& x);
Var tanh(const Var& x);
Var softmax_rows(const Var& x);
Var log_softmax_rows(const Var& x);
// log(max(x, eps)); gradient is zero where the clamp is active.
Var log_clamped(const Var& x, double eps);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Multi-head scaled dot-product self-attention on a batch laid out as
// consecutive blocks of `seq_len` rows. q, k, v are (batch*seq_len x d_model).
Var attention(const Var& q, const Var& k, const Var& v, int seq_len, int heads);
// Inverted dropout. Returns x unchanged when p == 0.
Var dropout(const Var& x, double p, std::mt19937_64& rng);
Var spmm(std::shared_ptr<const SpMat> a, const Var& x);
Var hcat(const Var& a, const Var& b);
Var gather_rows(const Var& x, std::vector<int> index);
Var normalize_rows(const Var& x, double eps = 1e-12);
Var sum(const Var& x);
Var mean(const Var& x);
// sum(w .* x) as a 1x1 value; w is constant.
Var sum_weighted(const Var& x, Mat w);
Var column(const Var& x, int j);
// diag(c) * x with c a column vector.
Var mul_col(const Var& x, const Var& c);
Var row_sum(const Var& x);
// Per-row score redistribution: masked[i] == 1 zeroes entry i and spreads its
// mass evenly over the unmasked entries of the same row.
Var mask_redistribute(const Var& a, Mat masked);

}  // namespace scfcrc::ag
