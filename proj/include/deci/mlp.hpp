#pragma once

#include "deci/rng.hpp"
#include "deci/tape.hpp"

namespace deci::num {

// Two-hidden-layer MLP with layer-norm (learned affine) at every hidden
// layer and a residual connection wherever the shapes line up.
struct MlpBlock {
  std::size_t in_dim = 0, hidden_dim = 128, out_dim = 0;
  Tensor w1, b1, g1, a1;  // first hidden layer + layer-norm affine
  Tensor w2, b2, g2, a2;  // second hidden layer + layer-norm affine
  Tensor w3, b3;          // output layer

  static constexpr double kLeakySlope = 0.01;

  MlpBlock() = default;
  MlpBlock(std::size_t in, std::size_t hidden, std::size_t out)
      : in_dim(in), hidden_dim(hidden), out_dim(out) {}

  void init(RngStream& rng, bool zero_output = false);

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;

  struct Vars {
    Var w1, b1, g1, a1, w2, b2, g2, a2, w3, b3;
  };
  Vars register_params(Tape& t) const;
  void read_grads(const Tape& t, const Vars& v, std::vector<Tensor>& out) const;

  // x: (n, in_dim) -> (n, out_dim)
  Var apply(Tape& t, const Vars& v, Var x) const;
};

// K-way Gumbel-softmax sample from unnormalized logits (length K). With
// hard=true the value is one-hot and the gradient is the soft sample's.
Var gumbel_softmax(Tape& t, Var logits, double temperature, bool hard,
                   RngStream& rng);

// Binary concrete relaxation of Bernoulli(sigmoid(logit)); scalar per entry.
Var binary_gumbel_softmax(Tape& t, Var logits, double temperature, bool hard,
                          RngStream& rng);

}  // namespace deci::num
