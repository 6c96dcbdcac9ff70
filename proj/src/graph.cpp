#include "deci/graph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "deci/mlp.hpp"

namespace deci::graphs {

AdjacencyMatrix AdjacencyMatrix::from_tensor(const Tensor& t) {
  if (t.shape.size() != 2 || t.shape[0] != t.shape[1])
    throw std::invalid_argument("adjacency: non-square tensor");
  AdjacencyMatrix g(t.shape[0]);
  for (std::size_t j = 0; j < g.d; ++j)
    for (std::size_t i = 0; i < g.d; ++i) {
      double v = t.at(j, i);
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument("adjacency: entries must be 0/1");
      if (v != 0.0) {
        if (i == j) throw std::invalid_argument("adjacency: self-loop");
        g.e[j * g.d + i] = 1;
      }
    }
  return g;
}

namespace {

// exp(A) by scaling-and-squaring with a Taylor series run to machine
// precision at the scaled norm.
Tensor matrix_exp(const Tensor& a) {
  std::size_t d = a.shape[0];
  double norm = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += std::fabs(a.at(i, j));
    norm = std::max(norm, row);
  }
  int s = 0;
  while (norm > 0.5) {
    norm *= 0.5;
    ++s;
  }
  double sc = std::ldexp(1.0, -s);
  Tensor as = a;
  for (double& v : as.data) v *= sc;

  Tensor result = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) result.at(i, i) = 1.0;
  Tensor term = result;
  Tensor tmp = Tensor::zeros({d, d});
  for (int k = 1; k <= 40; ++k) {
    num::matmul_values(term, as, tmp);
    double tn = 0.0;
    for (std::size_t i = 0; i < tmp.size(); ++i) {
      tmp.data[i] /= (double)k;
      tn = std::max(tn, std::fabs(tmp.data[i]));
    }
    term = tmp;
    for (std::size_t i = 0; i < tmp.size(); ++i)
      result.data[i] += term.data[i];
    if (tn < 1e-18) break;
  }
  for (int r = 0; r < s; ++r) {
    num::matmul_values(result, result, tmp);
    result = tmp;
  }
  return result;
}

Tensor dag_penalty_exp(const Tensor& w, double& h) {
  if (w.shape.size() != 2 || w.shape[0] != w.shape[1])
    throw std::invalid_argument("dag_penalty: non-square matrix");
  std::size_t d = w.shape[0];
  Tensor sq = w;
  for (double& v : sq.data) v *= v;
  Tensor e = matrix_exp(sq);
  h = -(double)d;
  for (std::size_t i = 0; i < d; ++i) h += e.at(i, i);
  if (h < 0 && h > -1e-12) h = 0.0;  // clamp rounding noise
  return e;
}

}  // namespace

double dag_penalty(const Tensor& w) {
  double h;
  dag_penalty_exp(w, h);
  return h;
}

Var dag_penalty(Tape& t, Var w) {
  const Tensor& wv = t.value(w);
  double h;
  Tensor e = dag_penalty_exp(wv, h);
  std::size_t d = wv.shape[0];
  return t.make_node(
      Tensor::scalar(h), t.requires_grad(w),
      [w, e, d](Tape& tt, Var self) {
        double g = tt.grad(self).data[0];
        const Tensor& wv2 = tt.value(w);
        Tensor& gw = tt.grad_acc(w);
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            gw.at(i, j) += g * 2.0 * wv2.at(i, j) * e.at(j, i);
      });
}

std::vector<std::size_t> topological_order(const AdjacencyMatrix& g) {
  std::vector<std::size_t> indeg(g.d, 0);
  for (std::size_t j = 0; j < g.d; ++j)
    for (std::size_t i = 0; i < g.d; ++i)
      if (g.edge(j, i)) ++indeg[i];
  std::priority_queue<std::size_t, std::vector<std::size_t>,
                      std::greater<>> ready;
  for (std::size_t i = 0; i < g.d; ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<std::size_t> order;
  order.reserve(g.d);
  while (!ready.empty()) {
    std::size_t j = ready.top();
    ready.pop();
    order.push_back(j);
    for (std::size_t i = 0; i < g.d; ++i)
      if (g.edge(j, i) && --indeg[i] == 0) ready.push(i);
  }
  if (order.size() != g.d)
    throw CyclicGraphError("graph contains a directed cycle");
  return order;
}

bool is_dag(const AdjacencyMatrix& g) {
  try {
    topological_order(g);
    return true;
  } catch (const CyclicGraphError&) {
    return false;
  }
}

AdjacencyMatrix mutilate(const AdjacencyMatrix& g,
                         const std::vector<std::size_t>& treated) {
  AdjacencyMatrix out = g;
  for (std::size_t tnode : treated) {
    if (tnode >= g.d)
      throw std::out_of_range("mutilate: treated index out of range");
    for (std::size_t j = 0; j < g.d; ++j) out.e[j * g.d + tnode] = 0;
  }
  return out;
}

bool has_directed_path(const AdjacencyMatrix& g, std::size_t from,
                       std::size_t to) {
  std::vector<std::uint8_t> seen(g.d, 0);
  std::vector<std::size_t> stack{from};
  seen[from] = 1;
  while (!stack.empty()) {
    std::size_t j = stack.back();
    stack.pop_back();
    for (std::size_t i = 0; i < g.d; ++i)
      if (g.edge(j, i) && !seen[i]) {
        if (i == to) return true;
        seen[i] = 1;
        stack.push_back(i);
      }
  }
  return false;
}

double GraphPrior::log_density_unnormalized(const Tensor& g) const {
  double fro = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double w0i = w0.data.empty() ? 0.0 : w0.data[i];
    double c = g.data[i] - w0i;
    fro += c * c;
  }
  double h = dag_penalty(g);
  return -lambda_s * fro - rho * h * h - alpha * h;
}

Var GraphPrior::log_density_unnormalized(Tape& t, Var g) const {
  const Tensor& gv = t.value(g);
  if (!w0.data.empty() && !w0.same_shape(gv))
    throw std::invalid_argument("graph prior: W0 shape mismatch");
  Var diff = w0.data.empty() ? g : sub(t, g, t.constant(w0));
  Var fro = sum(t, square(t, diff));
  Var h = dag_penalty(t, g);
  Var pen = add(t, scale(t, square(t, h), rho), scale(t, h, alpha));
  return neg(t, add(t, scale(t, fro, lambda_s), pen));
}

std::size_t VariationalGraphPosterior::pair_index(std::size_t i,
                                                  std::size_t j) const {
  // pairs enumerated as (0,1), (0,2), ..., (0,d-1), (1,2), ...
  return i * d - i * (i + 1) / 2 + (j - i - 1);
}

VariationalGraphPosterior VariationalGraphPosterior::saturated(
    const AdjacencyMatrix& g, double logit_scale) {
  VariationalGraphPosterior q(g.d);
  for (std::size_t i = 0; i < g.d; ++i)
    for (std::size_t j = i + 1; j < g.d; ++j) {
      std::size_t p = q.pair_index(i, j);
      bool fwd = g.edge(i, j), rev = g.edge(j, i);
      q.gamma.data[p] = (fwd || rev) ? logit_scale : -logit_scale;
      q.theta.data[p] = fwd ? logit_scale : (rev ? -logit_scale : 0.0);
    }
  return q;
}

namespace {
double sigmoidd(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace

Tensor VariationalGraphPosterior::edge_probabilities() const {
  Tensor p = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      std::size_t pi = pair_index(i, j);
      double pe = sigmoidd(gamma.data[pi]);
      double po = sigmoidd(theta.data[pi]);
      p.at(i, j) = pe * po;
      p.at(j, i) = pe * (1.0 - po);
    }
  return p;
}

double VariationalGraphPosterior::entropy() const {
  auto hb = [](double logit) {
    double p = sigmoidd(logit);
    double q = 1.0 - p;
    double h = 0.0;
    if (p > 0) h -= p * std::log(p);
    if (q > 0) h -= q * std::log(q);
    return h;
  };
  double h = 0.0;
  for (std::size_t p = 0; p < gamma.size(); ++p)
    h += hb(gamma.data[p]) + hb(theta.data[p]);
  return h;
}

Var VariationalGraphPosterior::entropy(Tape& t, Var gamma_v,
                                       Var theta_v) const {
  // H(sigmoid(x)) = sigmoid(x) softplus(-x) + sigmoid(-x) softplus(x)
  auto bern_entropy = [&](Var x) {
    Var nx = num::neg(t, x);
    return add(t, mul(t, num::sigmoid(t, x), num::softplus(t, nx)),
               mul(t, num::sigmoid(t, nx), num::softplus(t, x)));
  };
  return add(t, sum(t, bern_entropy(gamma_v)), sum(t, bern_entropy(theta_v)));
}

AdjacencyMatrix VariationalGraphPosterior::sample_hard(RngStream& rng) const {
  AdjacencyMatrix g(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      std::size_t p = pair_index(i, j);
      if (rng.uniform() < sigmoidd(gamma.data[p])) {
        if (rng.uniform() < sigmoidd(theta.data[p]))
          g.set_edge(i, j);
        else
          g.set_edge(j, i);
      }
    }
  return g;
}

Var VariationalGraphPosterior::sample(Tape& t, Var gamma_v, Var theta_v,
                                      double temperature, bool hard,
                                      RngStream& rng) const {
  Var e = num::binary_gumbel_softmax(t, gamma_v, temperature, hard, rng);
  Var o = num::binary_gumbel_softmax(t, theta_v, temperature, hard, rng);
  Var fwd = mul(t, e, o);  // i -> j weights per pair
  Var rev = mul(t, e, sub(t, t.constant(Tensor::full({gamma.size()}, 1.0)), o));
  std::size_t dd = d;
  std::size_t np = gamma.size();
  // scatter pair weights into the adjacency matrix
  std::vector<std::size_t> fwd_pos(np), rev_pos(np);
  for (std::size_t i = 0; i < dd; ++i)
    for (std::size_t j = i + 1; j < dd; ++j) {
      std::size_t p = pair_index(i, j);
      fwd_pos[p] = i * dd + j;
      rev_pos[p] = j * dd + i;
    }
  Tensor w = Tensor::zeros({dd, dd});
  const Tensor& fv = t.value(fwd);
  const Tensor& rv = t.value(rev);
  for (std::size_t p = 0; p < np; ++p) {
    w.data[fwd_pos[p]] = fv.data[p];
    w.data[rev_pos[p]] = rv.data[p];
  }
  bool req = t.requires_grad(fwd) || t.requires_grad(rev);
  return t.make_node(std::move(w), req,
                     [fwd, rev, fwd_pos, rev_pos, np](Tape& tt, Var self) {
                       const Tensor& g = tt.grad(self);
                       if (tt.requires_grad(fwd)) {
                         Tensor& gf = tt.grad_acc(fwd);
                         for (std::size_t p = 0; p < np; ++p)
                           gf.data[p] += g.data[fwd_pos[p]];
                       }
                       if (tt.requires_grad(rev)) {
                         Tensor& gr = tt.grad_acc(rev);
                         for (std::size_t p = 0; p < np; ++p)
                           gr.data[p] += g.data[rev_pos[p]];
                       }
                     });
}

VariationalGraphPosterior::ArmSample VariationalGraphPosterior::sample_arm(
    Tape& t, Var gamma_v, double temperature, RngStream& rng) const {
  std::size_t np = gamma.size();
  Var e = num::binary_gumbel_softmax(t, gamma_v, temperature, /*hard=*/true,
                                     rng);
  ArmSample s;
  s.u = Tensor::zeros({np});
  for (double& v : s.u.data) v = rng.uniform();
  Tensor o_main = Tensor::zeros({np});
  Tensor o_anti = Tensor::zeros({np});
  const Tensor& ev = t.value(e);
  s.main = AdjacencyMatrix(d);
  s.anti = AdjacencyMatrix(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      std::size_t p = pair_index(i, j);
      double pi = sigmoidd(theta.data[p]);
      bool zm = s.u.data[p] < pi;
      bool za = 1.0 - s.u.data[p] < pi;
      o_main.data[p] = zm ? 1.0 : 0.0;
      o_anti.data[p] = za ? 1.0 : 0.0;
      if (ev.data[p] != 0.0) {
        if (zm)
          s.main.set_edge(i, j);
        else
          s.main.set_edge(j, i);
        if (za)
          s.anti.set_edge(i, j);
        else
          s.anti.set_edge(j, i);
        s.anti_differs |= zm != za;
      }
    }
  Tensor o_rev = o_main;
  for (double& v : o_rev.data) v = 1.0 - v;
  Var fwd = mul(t, e, t.constant(std::move(o_main)));
  Var rev = mul(t, e, t.constant(std::move(o_rev)));
  std::size_t dd = d;
  std::vector<std::size_t> fwd_pos(np), rev_pos(np);
  for (std::size_t i = 0; i < dd; ++i)
    for (std::size_t j = i + 1; j < dd; ++j) {
      std::size_t p = pair_index(i, j);
      fwd_pos[p] = i * dd + j;
      rev_pos[p] = j * dd + i;
    }
  Tensor w = Tensor::zeros({dd, dd});
  const Tensor& fv = t.value(fwd);
  const Tensor& rv = t.value(rev);
  for (std::size_t p = 0; p < np; ++p) {
    w.data[fwd_pos[p]] = fv.data[p];
    w.data[rev_pos[p]] = rv.data[p];
  }
  bool req = t.requires_grad(fwd) || t.requires_grad(rev);
  s.g = t.make_node(std::move(w), req,
                    [fwd, rev, fwd_pos, rev_pos, np](Tape& tt, Var self) {
                      const Tensor& g = tt.grad(self);
                      if (tt.requires_grad(fwd)) {
                        Tensor& gf = tt.grad_acc(fwd);
                        for (std::size_t p = 0; p < np; ++p)
                          gf.data[p] += g.data[fwd_pos[p]];
                      }
                      if (tt.requires_grad(rev)) {
                        Tensor& gr = tt.grad_acc(rev);
                        for (std::size_t p = 0; p < np; ++p)
                          gr.data[p] += g.data[rev_pos[p]];
                      }
                    });
  return s;
}

std::pair<AdjacencyMatrix, bool> VariationalGraphPosterior::mode() const {
  AdjacencyMatrix g(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      std::size_t p = pair_index(i, j);
      if (sigmoidd(gamma.data[p]) > 0.5) {
        if (sigmoidd(theta.data[p]) >= 0.5)
          g.set_edge(i, j);
        else
          g.set_edge(j, i);
      }
    }
  return {g, !is_dag(g)};
}

}  // namespace deci::graphs
