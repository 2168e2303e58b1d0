#include "scfcrc/nn.hpp"

#include <cmath>
#include <cstring>

#include "scfcrc/error.hpp"

namespace scfcrc::nn {

Var activate(Activation act, const Var& x) {
  switch (act) {
    case Activation::kRelu:
      return ag::relu(x);
    case Activation::kTanh:
      return ag::tanh(x);
  }
  return x;
}

Linear::Linear(int in, int out, std::mt19937_64& rng, const std::string& name, bool with_bias) : has_bias(with_bias) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  Mat w(out, in);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  }
  weight = Parameter(name + ".weight", std::move(w));
  if (has_bias) bias = Parameter(name + ".bias", Mat::Zero(1, out));
}

Var Linear::forward(Tape& tape, const Var& x) {
  if (has_bias) return ag::linear(x, tape.param(weight), tape.param(bias));
  return ag::linear(x, tape.param(weight));
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight);
  if (has_bias) out.push_back(&bias);
}

LayerNorm::LayerNorm(int dim, const std::string& name)
    : gamma(name + ".gamma", Mat::Ones(1, dim)), beta(name + ".beta", Mat::Zero(1, dim)) {}

Var LayerNorm::forward(Tape& tape, const Var& x) {
  return ag::layer_norm(x, tape.param(gamma), tape.param(beta));
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

EncoderLayer::EncoderLayer(int d_model, int heads, int d_ff, double dropout, std::mt19937_64& rng,
                           const std::string& name)
    : heads_(heads),
      dropout_(dropout),
      q_(d_model, d_model, rng, name + ".q"),
      k_(d_model, d_model, rng, name + ".k"),
      v_(d_model, d_model, rng, name + ".v"),
      o_(d_model, d_model, rng, name + ".o"),
      ff1_(d_model, d_ff, rng, name + ".ff1"),
      ff2_(d_ff, d_model, rng, name + ".ff2"),
      ln1_(d_model, name + ".ln1"),
      ln2_(d_model, name + ".ln2") {
  if (heads <= 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(heads) + " heads");
  }
}

Var EncoderLayer::forward(Tape& tape, const Var& x, int seq_len, bool training, std::mt19937_64& rng) {
  const double p = training ? dropout_ : 0.0;
  Var att = ag::attention(q_.forward(tape, x), k_.forward(tape, x), v_.forward(tape, x), seq_len, heads_);
  Var h = ln1_.forward(tape, ag::add(x, ag::dropout(o_.forward(tape, att), p, rng)));
  Var ff = ff2_.forward(tape, ag::dropout(ag::relu(ff1_.forward(tape, h)), p, rng));
  return ln2_.forward(tape, ag::add(h, ag::dropout(ff, p, rng)));
}

void EncoderLayer::collect(ParamList& out) {
  q_.collect(out);
  k_.collect(out);
  v_.collect(out);
  o_.collect(out);
  ff1_.collect(out);
  ff2_.collect(out);
  ln1_.collect(out);
  ln2_.collect(out);
}

EncoderStack::EncoderStack(int depth, int d_model, int heads, int d_ff, double dropout, std::mt19937_64& rng,
                           const std::string& name) {
  for (int i = 0; i < depth; ++i) {
    layers_.emplace_back(d_model, heads, d_ff, dropout, rng, name + ".layer" + std::to_string(i));
  }
}

Var EncoderStack::forward(Tape& tape, const Var& x, int seq_len, bool training, std::mt19937_64& rng) {
  Var h = x;
  for (auto& layer : layers_) h = layer.forward(tape, h, seq_len, training, rng);
  return h;
}

void EncoderStack::collect(ParamList& out) {
  for (auto& layer : layers_) layer.collect(out);
}

Mlp::Mlp(const std::vector<int>& sizes, Activation act, double dropout, std::mt19937_64& rng,
         const std::string& name, bool bias)
    : act_(act), dropout_(dropout) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  for (size_t i = 0; i + 1 < sizes.size(); ++i) {
    layers_.emplace_back(sizes[i], sizes[i + 1], rng, name + "." + std::to_string(i), bias);
  }
}

Var Mlp::forward(Tape& tape, const Var& x, bool training, std::mt19937_64& rng) {
  Var h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(tape, h);
    if (i + 1 < layers_.size()) h = ag::dropout(activate(act_, h), training ? dropout_ : 0.0, rng);
  }
  return h;
}

void Mlp::collect(ParamList& out) {
  for (auto& l : layers_) l.collect(out);
}

Adam::Adam(ParamList params, double lr, double weight_decay, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    const Mat g = p.grad + wd_ * p.value;
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseProduct(g);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

std::vector<Mat> snapshot(const ParamList& params) {
  std::vector<Mat> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->value);
  return out;
}

void restore(const ParamList& params, const std::vector<Mat>& values) {
  if (values.size() != params.size()) throw ShapeError("restore: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

uint64_t parameter_hash(const ParamList& params) {
  uint64_t h = 1469598103934665603ULL;
  for (auto* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const size_t n = static_cast<size_t>(p->value.size()) * sizeof(double);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace scfcrc::nn
