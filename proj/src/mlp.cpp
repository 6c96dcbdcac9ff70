#include "deci/mlp.hpp"

#include <cmath>

namespace deci::num {

namespace {

Tensor he_init(std::size_t rows, std::size_t cols, RngStream& rng) {
  Tensor w = Tensor::zeros({rows, cols});
  double sd = std::sqrt(2.0 / (double)rows);
  for (double& v : w.data) v = sd * rng.normal();
  return w;
}

}  // namespace

void MlpBlock::init(RngStream& rng, bool zero_output) {
  w1 = he_init(in_dim, hidden_dim, rng);
  b1 = Tensor::zeros({hidden_dim});
  g1 = Tensor::full({hidden_dim}, 1.0);
  a1 = Tensor::zeros({hidden_dim});
  w2 = he_init(hidden_dim, hidden_dim, rng);
  b2 = Tensor::zeros({hidden_dim});
  g2 = Tensor::full({hidden_dim}, 1.0);
  a2 = Tensor::zeros({hidden_dim});
  w3 = zero_output ? Tensor::zeros({hidden_dim, out_dim})
                   : he_init(hidden_dim, out_dim, rng);
  b3 = Tensor::zeros({out_dim});
}

std::vector<Tensor*> MlpBlock::params() {
  return {&w1, &b1, &g1, &a1, &w2, &b2, &g2, &a2, &w3, &b3};
}

std::vector<const Tensor*> MlpBlock::params() const {
  return {&w1, &b1, &g1, &a1, &w2, &b2, &g2, &a2, &w3, &b3};
}

MlpBlock::Vars MlpBlock::register_params(Tape& t) const {
  Vars v;
  v.w1 = t.input(w1);
  v.b1 = t.input(b1);
  v.g1 = t.input(g1);
  v.a1 = t.input(a1);
  v.w2 = t.input(w2);
  v.b2 = t.input(b2);
  v.g2 = t.input(g2);
  v.a2 = t.input(a2);
  v.w3 = t.input(w3);
  v.b3 = t.input(b3);
  return v;
}

void MlpBlock::read_grads(const Tape& t, const Vars& v,
                          std::vector<Tensor>& out) const {
  out.clear();
  for (Var p : {v.w1, v.b1, v.g1, v.a1, v.w2, v.b2, v.g2, v.a2, v.w3, v.b3}) {
    const Tensor& g = t.grad(p);
    out.push_back(g.data.empty() ? Tensor::zeros(t.value(p).shape) : g);
  }
}

Var MlpBlock::apply(Tape& t, const Vars& v, Var x) const {
  Var pre1 = leaky_relu(t, add(t, matmul(t, x, v.w1), v.b1), kLeakySlope);
  if (in_dim == hidden_dim) pre1 = add(t, pre1, x);
  Var h1 = add(t, mul(t, layer_norm_rows(t, pre1), v.g1), v.a1);

  Var pre2 = leaky_relu(t, add(t, matmul(t, h1, v.w2), v.b2), kLeakySlope);
  Var h2 = add(t, mul(t, layer_norm_rows(t, add(t, h1, pre2)), v.g2), v.a2);

  return add(t, matmul(t, h2, v.w3), v.b3);
}

Var gumbel_softmax(Tape& t, Var logits, double temperature, bool hard,
                   RngStream& rng) {
  const Tensor& lv = t.value(logits);
  std::size_t k = lv.size();
  Tensor noise = Tensor::zeros({k});
  for (double& g : noise.data) g = rng.gumbel();
  Var perturbed = add(t, logits, t.constant(std::move(noise)));
  Var row = reshape(t, perturbed, {1, k});
  Var soft =
      exp_(t, log_softmax_rows(t, scale(t, row, 1.0 / temperature)));
  soft = reshape(t, soft, {k});
  if (!hard) return soft;
  const Tensor& sv = t.value(soft);
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < k; ++i)
    if (sv.data[i] > sv.data[argmax]) argmax = i;
  Tensor onehot = Tensor::zeros({k});
  onehot.data[argmax] = 1.0;
  return straight_through(t, soft, std::move(onehot));
}

Var binary_gumbel_softmax(Tape& t, Var logits, double temperature, bool hard,
                          RngStream& rng) {
  const Tensor& lv = t.value(logits);
  Tensor noise = Tensor::zeros(lv.shape);
  for (double& g : noise.data) g = rng.logistic();
  Var soft = sigmoid(
      t, scale(t, add(t, logits, t.constant(std::move(noise))),
               1.0 / temperature));
  if (!hard) return soft;
  Tensor hard_vals = t.value(soft);
  for (double& v : hard_vals.data) v = v > 0.5 ? 1.0 : 0.0;
  return straight_through(t, soft, std::move(hard_vals));
}

}  // namespace deci::num
