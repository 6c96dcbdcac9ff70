#include "deci/tape.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <stdexcept>

extern "C" void openblas_set_num_threads(int);

namespace deci::num {

void set_blas_threads(int n) { openblas_set_num_threads(n); }

Tensor& Tape::grad_acc(Var x) {
  Node& n = nodes_[x.id];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

void Tape::backward(Var root) {
  if (nodes_[root.id].value.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  grad_acc(root).data[0] = 1.0;
  for (std::int32_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.data.empty()) continue;
    n.backward(*this, Var{i});
  }
}

namespace {

enum class Bcast { Same, ScalarB, ScalarA, RowB };

Bcast bcast_kind(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Bcast::Same;
  if (b.size() == 1) return Bcast::ScalarB;
  if (a.size() == 1) return Bcast::ScalarA;
  if (a.shape.size() == 2 && b.shape.size() == 1 && b.shape[0] == a.shape[1])
    return Bcast::RowB;
  throw std::invalid_argument("binary op: incompatible shapes");
}

std::size_t b_index(Bcast k, std::size_t i, const Tensor& a) {
  switch (k) {
    case Bcast::Same: return i;
    case Bcast::ScalarB: return 0;
    case Bcast::ScalarA: return i;  // unused for b
    case Bcast::RowB: return i % a.shape[1];
  }
  return 0;
}

// Adds g into the gradient of x, reducing over broadcast dimensions.
void accumulate_bcast(Tape& t, Var x, const Tensor& g, Bcast k, bool is_b,
                      const Tensor& a_val) {
  if (!t.requires_grad(x)) return;
  Tensor& gx = t.grad_acc(x);
  if (gx.same_shape(g)) {
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i];
    return;
  }
  if (gx.size() == 1) {
    for (double v : g.data) gx.data[0] += v;
    return;
  }
  if (is_b && k == Bcast::RowB) {
    std::size_t m = a_val.shape[1];
    for (std::size_t i = 0; i < g.size(); ++i) gx.data[i % m] += g.data[i];
    return;
  }
  throw std::logic_error("accumulate_bcast: unexpected shape");
}

template <typename FwdF, typename BwdF>
Var binary_op(Tape& t, Var a, Var b, FwdF fwd, BwdF bwd) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  Bcast k = bcast_kind(av, bv);
  const Tensor& big = (k == Bcast::ScalarA) ? bv : av;
  Tensor out = Tensor::zeros(big.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = (k == Bcast::ScalarA) ? av.data[0] : av.data[i];
    double y = (k == Bcast::ScalarA) ? bv.data[i] : bv.data[b_index(k, i, av)];
    out.data[i] = fwd(x, y);
  }
  bool req = t.requires_grad(a) || t.requires_grad(b);
  return t.make_node(std::move(out), req, [a, b, k, bwd](Tape& tt, Var self) {
    const Tensor& g = tt.grad(self);
    const Tensor& av2 = tt.value(a);
    const Tensor& bv2 = tt.value(b);
    Tensor ga = Tensor::zeros(g.shape);
    Tensor gb = Tensor::zeros(g.shape);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double x = (k == Bcast::ScalarA) ? av2.data[0] : av2.data[i];
      double y =
          (k == Bcast::ScalarA) ? bv2.data[i] : bv2.data[b_index(k, i, av2)];
      auto [dx, dy] = bwd(x, y);
      ga.data[i] = g.data[i] * dx;
      gb.data[i] = g.data[i] * dy;
    }
    accumulate_bcast(tt, a, ga, k, false, av2);
    accumulate_bcast(tt, b, gb, k, true, av2);
  });
}

template <typename FwdF, typename DerF>
Var unary_op(Tape& t, Var a, FwdF fwd, DerF der) {
  const Tensor& av = t.value(a);
  Tensor out = Tensor::zeros(av.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = fwd(av.data[i]);
  return t.make_node(std::move(out), t.requires_grad(a),
                     [a, der](Tape& tt, Var self) {
                       const Tensor& g = tt.grad(self);
                       const Tensor& av2 = tt.value(a);
                       const Tensor& ov = tt.value(self);
                       Tensor& ga = tt.grad_acc(a);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga.data[i] += g.data[i] * der(av2.data[i], ov.data[i]);
                     });
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  return binary_op(
      t, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Var sub(Tape& t, Var a, Var b) {
  return binary_op(
      t, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Var mul(Tape& t, Var a, Var b) {
  return binary_op(
      t, a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

Var div(Tape& t, Var a, Var b) {
  return binary_op(
      t, a, b, [](double x, double y) { return x / y; },
      [](double x, double y) { return std::pair{1.0 / y, -x / (y * y)}; });
}

Var neg(Tape& t, Var a) {
  return unary_op(
      t, a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(Tape& t, Var a, double c) {
  return unary_op(
      t, a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Var add_const(Tape& t, Var a, double c) {
  return unary_op(
      t, a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

void matmul_values(const Tensor& a, const Tensor& b, Tensor& out) {
  std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)n, (int)m,
              (int)k, 1.0, a.data.data(), (int)k, b.data.data(), (int)m, 0.0,
              out.data.data(), (int)m);
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.shape.size() != 2 || bv.shape.size() != 2 ||
      av.shape[1] != bv.shape[0])
    throw std::invalid_argument("matmul: shape mismatch");
  Tensor out = Tensor::zeros({av.shape[0], bv.shape[1]});
  matmul_values(av, bv, out);
  bool req = t.requires_grad(a) || t.requires_grad(b);
  return t.make_node(std::move(out), req, [a, b](Tape& tt, Var self) {
    const Tensor& g = tt.grad(self);
    const Tensor& av2 = tt.value(a);
    const Tensor& bv2 = tt.value(b);
    int n = (int)av2.shape[0], k = (int)av2.shape[1], m = (int)bv2.shape[1];
    if (tt.requires_grad(a)) {
      // dA += G * B^T
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, n, k, m, 1.0,
                  g.data.data(), m, bv2.data.data(), m, 1.0,
                  tt.grad_acc(a).data.data(), k);
    }
    if (tt.requires_grad(b)) {
      // dB += A^T * G
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, m, n, 1.0,
                  av2.data.data(), k, g.data.data(), m, 1.0,
                  tt.grad_acc(b).data.data(), m);
    }
  });
}

Var sum(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  double s = 0.0;
  for (double v : av.data) s += v;
  return t.make_node(Tensor::scalar(s), t.requires_grad(a),
                     [a](Tape& tt, Var self) {
                       double g = tt.grad(self).data[0];
                       Tensor& ga = tt.grad_acc(a);
                       for (double& v : ga.data) v += g;
                     });
}

Var sum_rows(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  std::size_t n = av.shape[0], m = av.shape[1];
  Tensor out = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[i] += av.at(i, j);
  return t.make_node(std::move(out), t.requires_grad(a),
                     [a, n, m](Tape& tt, Var self) {
                       const Tensor& g = tt.grad(self);
                       Tensor& ga = tt.grad_acc(a);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < m; ++j)
                           ga.data[i * m + j] += g.data[i];
                     });
}

Var mean(Tape& t, Var a) {
  return scale(t, sum(t, a), 1.0 / (double)t.value(a).size());
}

Var leaky_relu(Tape& t, Var a, double slope) {
  return unary_op(
      t, a, [slope](double x) { return x >= 0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0 ? 1.0 : slope; });
}

Var sigmoid(Tape& t, Var a) {
  return unary_op(
      t, a,
      [](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Tape& t, Var a) {
  return unary_op(
      t, a,
      [](double x) { return x > 30 ? x : std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); },
      [](double x, double) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
      });
}

Var log_(Tape& t, Var a) {
  return unary_op(
      t, a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var exp_(Tape& t, Var a) {
  return unary_op(
      t, a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var sqrt_(Tape& t, Var a) {
  return unary_op(
      t, a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var square(Tape& t, Var a) {
  return unary_op(
      t, a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var std_normal_cdf(Tape& t, Var a) {
  return unary_op(
      t, a, [](double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); },
      [](double x, double) {
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
      });
}

Var layer_norm_rows(Tape& t, Var a, double eps) {
  const Tensor& av = t.value(a);
  std::size_t n = av.shape[0], m = av.shape[1];
  Tensor out = Tensor::zeros(av.shape);
  Tensor inv_sd({n}, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += av.at(i, j);
    mu /= (double)m;
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double c = av.at(i, j) - mu;
      var += c * c;
    }
    var /= (double)m;
    double is = 1.0 / std::sqrt(var + eps);
    inv_sd.data[i] = is;
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = (av.at(i, j) - mu) * is;
  }
  return t.make_node(
      std::move(out), t.requires_grad(a),
      [a, n, m, inv_sd](Tape& tt, Var self) {
        const Tensor& g = tt.grad(self);
        const Tensor& y = tt.value(self);
        Tensor& ga = tt.grad_acc(a);
        for (std::size_t i = 0; i < n; ++i) {
          double gm = 0.0, gy = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            gm += g.at(i, j);
            gy += g.at(i, j) * y.at(i, j);
          }
          gm /= (double)m;
          gy /= (double)m;
          for (std::size_t j = 0; j < m; ++j)
            ga.at(i, j) +=
                inv_sd.data[i] * (g.at(i, j) - gm - y.at(i, j) * gy);
        }
      });
}

Var log_softmax_rows(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  std::size_t n = av.shape[0], m = av.shape[1];
  Tensor out = Tensor::zeros(av.shape);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = av.at(i, 0);
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, av.at(i, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < m; ++j) lse += std::exp(av.at(i, j) - mx);
    lse = mx + std::log(lse);
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = av.at(i, j) - lse;
  }
  return t.make_node(std::move(out), t.requires_grad(a),
                     [a, n, m](Tape& tt, Var self) {
                       const Tensor& g = tt.grad(self);
                       const Tensor& y = tt.value(self);
                       Tensor& ga = tt.grad_acc(a);
                       for (std::size_t i = 0; i < n; ++i) {
                         double gs = 0.0;
                         for (std::size_t j = 0; j < m; ++j) gs += g.at(i, j);
                         for (std::size_t j = 0; j < m; ++j)
                           ga.at(i, j) +=
                               g.at(i, j) - std::exp(y.at(i, j)) * gs;
                       }
                     });
}

Var gather(Tape& t, Var a, const std::vector<std::size_t>& idx) {
  const Tensor& av = t.value(a);
  Tensor out = Tensor::zeros({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out.data[i] = av.data[idx[i]];
  return t.make_node(std::move(out), t.requires_grad(a),
                     [a, idx](Tape& tt, Var self) {
                       const Tensor& g = tt.grad(self);
                       Tensor& ga = tt.grad_acc(a);
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         ga.data[idx[i]] += g.data[i];
                     });
}

Var gather_rows(Tape& t, Var a, const std::vector<std::size_t>& rows) {
  const Tensor& av = t.value(a);
  std::size_t m = av.cols();
  Tensor out = Tensor::zeros({rows.size(), m});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::memcpy(&out.data[i * m], &av.data[rows[i] * m], m * sizeof(double));
  return t.make_node(std::move(out), t.requires_grad(a),
                     [a, rows, m](Tape& tt, Var self) {
                       const Tensor& g = tt.grad(self);
                       Tensor& ga = tt.grad_acc(a);
                       for (std::size_t i = 0; i < rows.size(); ++i)
                         for (std::size_t j = 0; j < m; ++j)
                           ga.data[rows[i] * m + j] += g.data[i * m + j];
                     });
}

Var slice_cols(Tape& t, Var a, std::size_t c0, std::size_t c1) {
  const Tensor& av = t.value(a);
  std::size_t n = av.shape[0], m = av.shape[1], w = c1 - c0;
  Tensor out = Tensor::zeros({n, w});
  for (std::size_t i = 0; i < n; ++i)
    std::memcpy(&out.data[i * w], &av.data[i * m + c0], w * sizeof(double));
  return t.make_node(std::move(out), t.requires_grad(a),
                     [a, c0, w, n, m](Tape& tt, Var self) {
                       const Tensor& g = tt.grad(self);
                       Tensor& ga = tt.grad_acc(a);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < w; ++j)
                           ga.data[i * m + c0 + j] += g.data[i * w + j];
                     });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  std::size_t n = t.value(parts[0]).shape[0];
  std::size_t m = 0;
  bool req = false;
  for (Var p : parts) {
    m += t.value(p).cols();
    req = req || t.requires_grad(p);
  }
  Tensor out = Tensor::zeros({n, m});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = t.value(p);
    std::size_t w = pv.cols();
    for (std::size_t i = 0; i < n; ++i)
      std::memcpy(&out.data[i * m + off], &pv.data[i * w], w * sizeof(double));
    off += w;
  }
  return t.make_node(std::move(out), req, [parts, n, m](Tape& tt, Var self) {
    const Tensor& g = tt.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      std::size_t w = tt.value(p).cols();
      if (tt.requires_grad(p)) {
        Tensor& gp = tt.grad_acc(p);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j)
            gp.data[i * w + j] += g.data[i * m + off + j];
      }
      off += w;
    }
  });
}

Var reshape(Tape& t, Var a, std::vector<std::size_t> shape) {
  const Tensor& av = t.value(a);
  if (Tensor::count(shape) != av.size())
    throw std::invalid_argument("reshape: size mismatch");
  Tensor out(std::move(shape), av.data);
  return t.make_node(std::move(out), t.requires_grad(a),
                     [a](Tape& tt, Var self) {
                       const Tensor& g = tt.grad(self);
                       Tensor& ga = tt.grad_acc(a);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         ga.data[i] += g.data[i];
                     });
}

Var graph_aggregate(Tape& t, Var w, Var l, std::size_t n, std::size_t d,
                    std::size_t k) {
  const Tensor& wv = t.value(w);
  const Tensor& lv = t.value(l);
  if (wv.shape != std::vector<std::size_t>{d, d} ||
      lv.shape != std::vector<std::size_t>{n * d, k})
    throw std::invalid_argument("graph_aggregate: shape mismatch");
  Tensor out = Tensor::zeros({n * d, k});
  // Per sample: out_s = W^T * L_s, each (d,k).
  for (std::size_t s = 0; s < n; ++s)
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)d, (int)k,
                (int)d, 1.0, wv.data.data(), (int)d, &lv.data[s * d * k],
                (int)k, 0.0, &out.data[s * d * k], (int)k);
  bool req = t.requires_grad(w) || t.requires_grad(l);
  return t.make_node(std::move(out), req, [w, l, n, d, k](Tape& tt, Var self) {
    const Tensor& g = tt.grad(self);
    const Tensor& wv2 = tt.value(w);
    const Tensor& lv2 = tt.value(l);
    if (tt.requires_grad(l)) {
      Tensor& gl = tt.grad_acc(l);
      for (std::size_t s = 0; s < n; ++s)
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)d, (int)k,
                    (int)d, 1.0, wv2.data.data(), (int)d, &g.data[s * d * k],
                    (int)k, 1.0, &gl.data[s * d * k], (int)k);
    }
    if (tt.requires_grad(w)) {
      Tensor& gw = tt.grad_acc(w);
      for (std::size_t s = 0; s < n; ++s)
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)d, (int)d,
                    (int)k, 1.0, &lv2.data[s * d * k], (int)k,
                    &g.data[s * d * k], (int)k, 1.0, gw.data.data(), (int)d);
    }
  });
}

Var select(Tape& t, const Tensor& mask, Var a, Var b) {
  Var m = t.constant(mask);
  Tensor inv = mask;
  for (double& v : inv.data) v = 1.0 - v;
  Var mi = t.constant(std::move(inv));
  return add(t, mul(t, m, a), mul(t, mi, b));
}

Var straight_through(Tape& t, Var soft, Tensor hard) {
  Tensor delta = hard;
  const Tensor& sv = t.value(soft);
  for (std::size_t i = 0; i < delta.size(); ++i) delta.data[i] -= sv.data[i];
  return add(t, soft, t.constant(std::move(delta)));
}

}  // namespace deci::num
