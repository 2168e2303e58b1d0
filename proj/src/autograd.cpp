#include "scfcrc/autograd.hpp"

#include <cmath>

#include "scfcrc/error.hpp"

namespace scfcrc::ag {

const Mat& Var::value() const { return tape_->value(id_); }

Var Tape::push(Mat value, bool requires_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::input(Mat value) { return push(std::move(value), true, nullptr); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, true, nullptr);
  nodes_[v.id()].param = &p;
  return v;
}

void Tape::backward(const Var& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward expects a scalar loss");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  accumulate(loss.id(), Mat::Ones(1, 1));
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.back) n.back(*this, n.grad);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

Mat Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

bool any_grad(const Var& a) { return a.tape()->requires_grad(a.id()); }
bool any_grad(const Var& a, const Var& b) { return any_grad(a) || any_grad(b); }

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape& t, const Mat& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape& t, const Mat& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), any_grad(a, b), [ia, ib](Tape& t, const Mat& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.push(a.value() * s, any_grad(a), [ia, s](Tape& t, const Mat& g) { t.accumulate(ia, g * s); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  Mat out;
  out.noalias() = a.value() * b.value();
  return t.push(std::move(out), any_grad(a, b), [ia, ib](Tape& t, const Mat& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  Mat out;
  out.noalias() = a.value() * b.value().transpose();
  return t.push(std::move(out), any_grad(a, b), [ia, ib](Tape& t, const Mat& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
    if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.cols() != w.cols()) {
    throw ShapeError("linear: input width " + std::to_string(x.cols()) + " != weight width " + std::to_string(w.cols()));
  }
  if (b.rows() != 1 || b.cols() != w.rows()) throw ShapeError("linear: bias shape mismatch");
  Tape& t = *x.tape();
  const int ix = x.id(), iw = w.id(), ib = b.id();
  Mat out;
  out.noalias() = x.value() * w.value().transpose();
  out.rowwise() += b.value().row(0);
  const bool rg = any_grad(x, w) || any_grad(b);
  return t.push(std::move(out), rg, [ix, iw, ib](Tape& t, const Mat& g) {
    if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw));
    if (t.requires_grad(iw)) t.accumulate(iw, g.transpose() * t.value(ix));
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

Var linear(const Var& x, const Var& w) {
  if (x.cols() != w.cols()) throw ShapeError("linear: input width mismatch");
  Tape& t = *x.tape();
  const int ix = x.id(), iw = w.id();
  Mat out;
  out.noalias() = x.value() * w.value().transpose();
  return t.push(std::move(out), any_grad(x, w), [ix, iw](Tape& t, const Mat& g) {
    if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw));
    if (t.requires_grad(iw)) t.accumulate(iw, g.transpose() * t.value(ix));
  });
}

Var relu(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  return t.push(x.value().cwiseMax(0.0), any_grad(x), [ix](Tape& t, const Mat& g) {
    t.accumulate(ix, (t.value(ix).array() > 0.0).select(g, 0.0));
  });
}

Var tanh(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  const int self = static_cast<int>(t.size());
  return t.push(x.value().array().tanh().matrix(), any_grad(x), [ix, self](Tape& t, const Mat& g) {
    t.accumulate(ix, g.cwiseProduct((1.0 - t.value(self).array().square()).matrix()));
  });
}

namespace {

Mat softmax_of(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace

Var softmax_rows(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  const int self = static_cast<int>(t.size());
  return t.push(softmax_of(x.value()), any_grad(x), [ix, self](Tape& t, const Mat& g) {
    const Mat& p = t.value(self);
    Eigen::VectorXd dot = g.cwiseProduct(p).rowwise().sum();
    t.accumulate(ix, p.cwiseProduct(g - dot.replicate(1, g.cols())));
  });
}

Var log_softmax_rows(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.value().row(i).maxCoeff();
    const double lse = m + std::log((x.value().row(i).array() - m).exp().sum());
    out.row(i) = x.value().row(i).array() - lse;
  }
  return t.push(std::move(out), any_grad(x), [ix](Tape& t, const Mat& g) {
    const Mat p = softmax_of(t.value(ix));
    Eigen::VectorXd gs = g.rowwise().sum();
    t.accumulate(ix, g - p.cwiseProduct(gs.replicate(1, g.cols())));
  });
}

Var log_clamped(const Var& x, double eps) {
  Tape& t = *x.tape();
  const int ix = x.id();
  return t.push(x.value().cwiseMax(eps).array().log().matrix(), any_grad(x), [ix, eps](Tape& t, const Mat& g) {
    const Mat& v = t.value(ix);
    t.accumulate(ix, (v.array() > eps).select(g.array() / v.array(), 0.0).matrix());
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ShapeError("layer_norm: gain/bias shape mismatch");
  }
  Tape& t = *x.tape();
  auto xhat = std::make_shared<Mat>(n, d);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  const Mat& xv = x.value();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    xhat->row(i) = (xv.row(i).array() - mu) * is;
  }
  Mat out = xhat->array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  const bool rg = any_grad(x, gamma) || any_grad(beta);
  return t.push(std::move(out), rg, [ix, ig, ib, xhat, inv_std](Tape& t, const Mat& g) {
    if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(*xhat).colwise().sum());
    if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
    if (t.requires_grad(ix)) {
      const Mat gx = g.array().rowwise() * t.value(ig).row(0).array();
      const double d = static_cast<double>(gx.cols());
      Mat dx(gx.rows(), gx.cols());
      for (Eigen::Index i = 0; i < gx.rows(); ++i) {
        const double m1 = gx.row(i).sum() / d;
        const double m2 = gx.row(i).dot(xhat->row(i)) / d;
        dx.row(i) = (*inv_std)[i] * (gx.row(i).array() - m1 - xhat->row(i).array() * m2);
      }
      t.accumulate(ix, dx);
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int seq_len, int heads) {
  check_same_shape(q, k, "attention");
  check_same_shape(q, v, "attention");
  const Eigen::Index rows = q.rows(), dm = q.cols();
  if (seq_len <= 0 || rows % seq_len != 0) throw ShapeError("attention: rows not a multiple of seq_len");
  if (heads <= 0 || dm % heads != 0) throw ShapeError("attention: d_model not divisible by heads");
  const int batch = static_cast<int>(rows / seq_len);
  const int dh = static_cast<int>(dm / heads);
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  Tape& t = *q.tape();
  auto probs = std::make_shared<std::vector<Mat>>(static_cast<size_t>(batch) * heads);
  Mat out(rows, dm);
  const Mat& qv = q.value();
  const Mat& kv = k.value();
  const Mat& vv = v.value();
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      auto qb = qv.block(b * seq_len, h * dh, seq_len, dh);
      auto kb = kv.block(b * seq_len, h * dh, seq_len, dh);
      auto vb = vv.block(b * seq_len, h * dh, seq_len, dh);
      Mat scores;
      scores.noalias() = qb * kb.transpose();
      scores *= s;
      Mat p = softmax_of(scores);
      out.block(b * seq_len, h * dh, seq_len, dh).noalias() = p * vb;
      (*probs)[static_cast<size_t>(b) * heads + h] = std::move(p);
    }
  }
  const int iq = q.id(), ik = k.id(), iv = v.id();
  const bool rg = any_grad(q, k) || any_grad(v);
  return t.push(std::move(out), rg, [=](Tape& t, const Mat& g) {
    const Mat& qv = t.value(iq);
    const Mat& kv = t.value(ik);
    const Mat& vv = t.value(iv);
    Mat gq = Mat::Zero(rows, dm), gk = Mat::Zero(rows, dm), gv = Mat::Zero(rows, dm);
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Mat& p = (*probs)[static_cast<size_t>(b) * heads + h];
        auto gb = g.block(b * seq_len, h * dh, seq_len, dh);
        gv.block(b * seq_len, h * dh, seq_len, dh).noalias() = p.transpose() * gb;
        Mat gp;
        gp.noalias() = gb * vv.block(b * seq_len, h * dh, seq_len, dh).transpose();
        Eigen::VectorXd dot = gp.cwiseProduct(p).rowwise().sum();
        Mat gs = p.cwiseProduct(gp - dot.replicate(1, seq_len)) * s;
        gq.block(b * seq_len, h * dh, seq_len, dh).noalias() = gs * kv.block(b * seq_len, h * dh, seq_len, dh);
        gk.block(b * seq_len, h * dh, seq_len, dh).noalias() = gs.transpose() * qv.block(b * seq_len, h * dh, seq_len, dh);
      }
    }
    t.accumulate(iq, gq);
    t.accumulate(ik, gk);
    t.accumulate(iv, gv);
  });
}

Var dropout(const Var& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ShapeError("dropout probability must be < 1");
  Tape& t = *x.tape();
  std::bernoulli_distribution keep(1.0 - p);
  auto mask = std::make_shared<Mat>(x.rows(), x.cols());
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index j = 0; j < mask->cols(); ++j) {
    for (Eigen::Index i = 0; i < mask->rows(); ++i) (*mask)(i, j) = keep(rng) ? s : 0.0;
  }
  const int ix = x.id();
  return t.push(x.value().cwiseProduct(*mask), any_grad(x),
                [ix, mask](Tape& t, const Mat& g) { t.accumulate(ix, g.cwiseProduct(*mask)); });
}

Var spmm(std::shared_ptr<const SpMat> a, const Var& x) {
  if (a->cols() != x.rows()) throw ShapeError("spmm: dimension mismatch");
  Tape& t = *x.tape();
  const int ix = x.id();
  Mat out = (*a) * x.value();
  return t.push(std::move(out), any_grad(x), [ix, a](Tape& t, const Mat& g) {
    t.accumulate(ix, a->transpose() * g);
  });
}

Var hcat(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw ShapeError("hcat: row mismatch");
  Tape& t = *a.tape();
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return t.push(std::move(out), any_grad(a, b), [ia, ib, ca, cb](Tape& t, const Mat& g) {
    t.accumulate(ia, g.leftCols(ca));
    t.accumulate(ib, g.rightCols(cb));
  });
}

Var gather_rows(const Var& x, std::vector<int> index) {
  Tape& t = *x.tape();
  Mat out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.rows()) throw ShapeError("gather_rows: index out of bounds");
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(index[i]);
  }
  const int ix = x.id();
  const Eigen::Index xr = x.rows();
  return t.push(std::move(out), any_grad(x), [ix, xr, index = std::move(index)](Tape& t, const Mat& g) {
    Mat gx = Mat::Zero(xr, g.cols());
    for (size_t i = 0; i < index.size(); ++i) gx.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(ix, gx);
  });
}

Var normalize_rows(const Var& x, double eps) {
  Tape& t = *x.tape();
  Eigen::VectorXd norms = x.value().rowwise().norm().cwiseMax(eps);
  Mat out = x.value().array().colwise() / norms.array();
  const int ix = x.id();
  const int self = static_cast<int>(t.size());
  return t.push(std::move(out), any_grad(x), [ix, self, norms, eps](Tape& t, const Mat& g) {
    const Mat& yv = t.value(self);
    Mat gx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      if (norms[i] > eps) {
        gx.row(i) = (g.row(i) - yv.row(i) * yv.row(i).dot(g.row(i))) / norms[i];
      } else {
        gx.row(i) = g.row(i) / eps;
      }
    }
    t.accumulate(ix, gx);
  });
}

Var sum(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  const Eigen::Index r = x.rows(), c = x.cols();
  return t.push(Mat::Constant(1, 1, x.value().sum()), any_grad(x),
                [ix, r, c](Tape& t, const Mat& g) { t.accumulate(ix, Mat::Constant(r, c, g(0, 0))); });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var sum_weighted(const Var& x, Mat w) {
  if (w.rows() != x.rows() || w.cols() != x.cols()) throw ShapeError("sum_weighted: weight shape mismatch");
  Tape& t = *x.tape();
  const int ix = x.id();
  const double v = x.value().cwiseProduct(w).sum();
  return t.push(Mat::Constant(1, 1, v), any_grad(x),
                [ix, w = std::move(w)](Tape& t, const Mat& g) { t.accumulate(ix, w * g(0, 0)); });
}

Var column(const Var& x, int j) {
  if (j < 0 || j >= x.cols()) throw ShapeError("column: index out of bounds");
  Tape& t = *x.tape();
  const int ix = x.id();
  const Eigen::Index r = x.rows(), c = x.cols();
  return t.push(x.value().col(j), any_grad(x), [ix, j, r, c](Tape& t, const Mat& g) {
    Mat gx = Mat::Zero(r, c);
    gx.col(j) = g.col(0);
    t.accumulate(ix, gx);
  });
}

Var mul_col(const Var& x, const Var& c) {
  if (c.cols() != 1 || c.rows() != x.rows()) throw ShapeError("mul_col: expects a matching column vector");
  Tape& t = *x.tape();
  const int ix = x.id(), ic = c.id();
  Mat out = x.value().array().colwise() * c.value().col(0).array();
  return t.push(std::move(out), any_grad(x, c), [ix, ic](Tape& t, const Mat& g) {
    if (t.requires_grad(ix)) t.accumulate(ix, (g.array().colwise() * t.value(ic).col(0).array()).matrix());
    if (t.requires_grad(ic)) t.accumulate(ic, g.cwiseProduct(t.value(ix)).rowwise().sum());
  });
}

Var row_sum(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  const Eigen::Index c = x.cols();
  return t.push(x.value().rowwise().sum(), any_grad(x),
                [ix, c](Tape& t, const Mat& g) { t.accumulate(ix, g.col(0).replicate(1, c)); });
}

Var mask_redistribute(const Var& a, Mat masked) {
  if (masked.rows() != a.rows() || masked.cols() != a.cols()) throw ShapeError("mask_redistribute: mask shape mismatch");
  Tape& t = *a.tape();
  const Eigen::Index n = a.rows(), m = a.cols();
  Eigen::VectorXd inv_unmasked(n);
  Mat out(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double unmasked = static_cast<double>(m) - masked.row(i).sum();
    if (unmasked <= 0) throw ShapeError("mask_redistribute: a row masks every entry");
    inv_unmasked[i] = 1.0 / unmasked;
    const double moved = a.value().row(i).dot(masked.row(i)) * inv_unmasked[i];
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = masked(i, j) != 0.0 ? 0.0 : a.value()(i, j) + moved;
  }
  const int ia = a.id();
  return t.push(std::move(out), any_grad(a), [ia, masked = std::move(masked), inv_unmasked](Tape& t, const Mat& g) {
    Mat ga(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      double unmasked_sum = 0.0;
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        if (masked(i, j) == 0.0) unmasked_sum += g(i, j);
      }
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        ga(i, j) = masked(i, j) != 0.0 ? unmasked_sum * inv_unmasked[i] : g(i, j);
      }
    }
    t.accumulate(ia, ga);
  });
}

}  // namespace scfcrc::ag
