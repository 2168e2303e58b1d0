#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scfcrc/autograd.hpp"

namespace scfcrc::nn {

using ag::Mat;
using ag::Parameter;
using ag::Tape;
using ag::Var;

using ParamList = std::vector<Parameter*>;

enum class Activation { kRelu, kTanh };

Var activate(Activation act, const Var& x);

// Glorot-uniform weight, zero bias.
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng, const std::string& name, bool bias = true);

  Var forward(Tape& tape, const Var& x);
  void collect(ParamList& out);

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  Parameter weight;
  Parameter bias;
  bool has_bias = true;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(int dim, const std::string& name);
  Var forward(Tape& tape, const Var& x);
  void collect(ParamList& out);

  Parameter gamma;
  Parameter beta;
};

// Post-norm transformer encoder layer:
//   x = LN1(x + Drop(MHA(x)));  x = LN2(x + Drop(W2 Drop(ReLU(W1 x))))
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(int d_model, int heads, int d_ff, double dropout, std::mt19937_64& rng, const std::string& name);

  Var forward(Tape& tape, const Var& x, int seq_len, bool training, std::mt19937_64& rng);
  void collect(ParamList& out);

 private:
  int heads_ = 1;
  double dropout_ = 0.0;
  Linear q_, k_, v_, o_, ff1_, ff2_;
  LayerNorm ln1_, ln2_;
};

// A depth-0 stack is the identity.
class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(int depth, int d_model, int heads, int d_ff, double dropout, std::mt19937_64& rng,
               const std::string& name);

  Var forward(Tape& tape, const Var& x, int seq_len, bool training, std::mt19937_64& rng);
  void collect(ParamList& out);
  int depth() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<EncoderLayer> layers_;
};

// Feed-forward stack; activation and dropout between layers, none after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int>& sizes, Activation act, double dropout, std::mt19937_64& rng, const std::string& name,
      bool bias = true);

  Var forward(Tape& tape, const Var& x, bool training, std::mt19937_64& rng);
  void collect(ParamList& out);
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kRelu;
  double dropout_ = 0.0;
};

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(ParamList params, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void zero_grad();
  void step();

 private:
  ParamList params_;
  std::vector<Mat> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

std::vector<Mat> snapshot(const ParamList& params);
void restore(const ParamList& params, const std::vector<Mat>& values);
// FNV-1a over the raw parameter bytes.
uint64_t parameter_hash(const ParamList& params);

}  // namespace scfcrc::nn
