#include <doctest.h>

#include <cmath>

#include "deci/adam.hpp"
#include "deci/mlp.hpp"
#include "deci/rng.hpp"
#include "deci/spline.hpp"
#include "deci/tape.hpp"
#include "gradcheck.hpp"

using namespace deci::num;
using deci::testing::gradcheck;

TEST_CASE("backward: polynomial derivative") {
  Tape t;
  Var x = t.input(Tensor::scalar(3.0));
  Var y = mul(t, x, x);
  t.backward(y);
  CHECK(t.grad(x).data[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: constant has zero gradient") {
  Tape t;
  Var x = t.input(Tensor::scalar(2.0));
  Var c = t.constant(Tensor::scalar(5.0));
  Var y = add(t, c, mul(t, x, t.constant(0.0)));
  t.backward(y);
  CHECK(t.grad(x).data[0] == doctest::Approx(0.0));
}

TEST_CASE("backward: rejects non-scalar root") {
  Tape t;
  Var x = t.input(Tensor::zeros({3}));
  CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
}

TEST_CASE("backward: gradient accumulates over multiple uses") {
  Tape t;
  Var x = t.input(Tensor::scalar(2.0));
  Var y = add(t, mul(t, x, x), x);  // x^2 + x -> 2x + 1 = 5
  t.backward(y);
  CHECK(t.grad(x).data[0] == doctest::Approx(5.0));
}

namespace {

// Flattens MLP params + input, rebuilds the forward pass for gradcheck.
double mlp_scalar(MlpBlock& mlp, const Tensor& x,
                  const std::vector<double>& flat) {
  std::size_t off = 0;
  for (Tensor* p : mlp.params())
    for (double& v : p->data) v = flat[off++];
  Tensor xx = x;
  for (double& v : xx.data) v = flat[off++];
  Tape t;
  auto vars = mlp.register_params(t);
  Var out = mlp.apply(t, vars, t.input(xx));
  double s = 0.0;
  for (double v : t.value(out).data) s += v;
  return s;
}

}  // namespace

TEST_CASE("backward: MLP gradient matches finite differences") {
  RngStream rng(41);
  MlpBlock mlp(3, 8, 2);
  mlp.init(rng);
  Tensor x = Tensor::zeros({4, 3});
  for (double& v : x.data) v = rng.normal();

  std::vector<double> flat;
  for (Tensor* p : mlp.params())
    flat.insert(flat.end(), p->data.begin(), p->data.end());
  flat.insert(flat.end(), x.data.begin(), x.data.end());

  Tape t;
  auto vars = mlp.register_params(t);
  Var xin = t.input(x);
  Var out = sum(t, mlp.apply(t, vars, xin));
  t.backward(out);

  std::vector<double> analytic;
  std::vector<Tensor> grads;
  mlp.read_grads(t, vars, grads);
  for (const Tensor& g : grads)
    analytic.insert(analytic.end(), g.data.begin(), g.data.end());
  const Tensor& gx = t.grad(xin);
  analytic.insert(analytic.end(), gx.data.begin(), gx.data.end());

  MlpBlock probe(3, 8, 2);
  probe.init(rng);
  double err = gradcheck(
      [&](const std::vector<double>& f) { return mlp_scalar(probe, x, f); },
      flat, analytic);
  CHECK(err < 1e-4);
}

TEST_CASE("adam: first step moves by step size in sign direction") {
  AdamState adam;
  Tensor p = Tensor::zeros({3});
  std::vector<Tensor*> params{&p};
  adam.init(params);
  Tensor g({3}, {0.5, -2.0, 1e-3});
  adam.update(params, {g});
  for (std::size_t i = 0; i < 3; ++i) {
    double expect = -adam.step_size * g.data[i] /
                    (std::fabs(g.data[i]) + adam.eps);
    CHECK(p.data[i] == doctest::Approx(expect).epsilon(1e-4));
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  AdamState adam;
  Tensor p({2}, {1.0, -3.0});
  std::vector<Tensor*> params{&p};
  adam.init(params);
  adam.update(params, {Tensor::zeros({2})});
  CHECK(p.data[0] == doctest::Approx(1.0));
  CHECK(p.data[1] == doctest::Approx(-3.0));
}

TEST_CASE("adam: two constant-gradient steps match hand-computed recurrence") {
  AdamState adam;
  Tensor p = Tensor::zeros({1});
  std::vector<Tensor*> params{&p};
  adam.init(params);
  double g = 0.7;
  Tensor gt({1}, {g});

  // hand evaluation of the bias-corrected recurrences
  double m = 0, v = 0, theta = 0;
  for (int s = 1; s <= 2; ++s) {
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mh = m / (1 - std::pow(0.9, s));
    double vh = v / (1 - std::pow(0.999, s));
    theta -= adam.step_size * mh / (std::sqrt(vh) + adam.eps);
    adam.update(params, {gt});
  }
  CHECK(p.data[0] == doctest::Approx(theta).epsilon(1e-12));
}

TEST_CASE("adam: shape mismatch rejected") {
  AdamState adam;
  Tensor p = Tensor::zeros({2});
  std::vector<Tensor*> params{&p};
  adam.init(params);
  CHECK_THROWS_AS(adam.update(params, {Tensor::zeros({3})}),
                  std::invalid_argument);
}

TEST_CASE("spline: identity initialization is the identity map") {
  RqSpline s = RqSpline::identity();
  for (double z : {-7.0, -3.2, 0.0, 1.7, 4.9, 12.0}) {
    auto [x, ld] = s.forward(z);
    CHECK(x == doctest::Approx(z).epsilon(1e-12));
    CHECK(ld == doctest::Approx(0.0).epsilon(1e-10));
  }
  std::vector<double> wr, hr, dr;
  rq_spline_identity_params(8, wr, hr, dr);
  RqSpline s2 = RqSpline::from_unconstrained(wr, hr, dr);
  auto [x, ld] = s2.forward(1.234);
  CHECK(x == doctest::Approx(1.234).epsilon(1e-6));
  CHECK(ld == doctest::Approx(0.0).epsilon(1e-4));
}

TEST_CASE("spline: round trip and monotonicity on random splines") {
  RngStream rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> wr(8), hr(8), dr(7);
    for (double& v : wr) v = rng.normal();
    for (double& v : hr) v = rng.normal();
    for (double& v : dr) v = rng.normal();
    RqSpline s = RqSpline::from_unconstrained(wr, hr, dr);
    double prev = -1e18;
    for (int i = 0; i < 1000; ++i) {
      double x = rng.uniform(-8.0, 8.0);
      auto [y, ldf] = s.forward(x);
      auto [back, ldi] = s.inverse(y);
      CHECK(std::fabs(back - x) < 1e-8);
      CHECK(ldf == doctest::Approx(-ldi).epsilon(1e-8));
      CHECK(std::isfinite(ldf));
    }
    // monotone increasing on a dense grid
    for (int i = 0; i <= 2000; ++i) {
      double x = -6.0 + 12.0 * i / 2000.0;
      double y = s.forward(x).first;
      CHECK(y > prev);
      prev = y;
    }
  }
}

TEST_CASE("spline: log-derivative matches finite differences") {
  RngStream rng(19);
  std::vector<double> wr(8), hr(8), dr(7);
  for (double& v : wr) v = rng.normal();
  for (double& v : hr) v = rng.normal();
  for (double& v : dr) v = rng.normal();
  RqSpline s = RqSpline::from_unconstrained(wr, hr, dr);
  for (int i = 0; i < 200; ++i) {
    double x = rng.uniform(-4.8, 4.8);
    auto [y, ld] = s.forward(x);
    double h = 1e-6;
    double fd = (s.forward(x + h).first - s.forward(x - h).first) / (2 * h);
    CHECK(std::fabs(std::exp(ld) - fd) / std::fabs(fd) < 1e-5);
  }
}

TEST_CASE("spline: tape inverse agrees with scalar inverse and gradchecks") {
  RngStream rng(23);
  std::vector<double> wr(8), hr(8), dr(7);
  for (double& v : wr) v = 0.3 * rng.normal();
  for (double& v : hr) v = 0.3 * rng.normal();
  for (double& v : dr) v = 0.3 * rng.normal();
  RqSpline s = RqSpline::from_unconstrained(wr, hr, dr);

  Tensor z = Tensor::zeros({32});
  for (double& v : z.data) v = rng.uniform(-7.0, 7.0);

  auto eval = [&](const std::vector<double>& flat, std::vector<double>* grad) {
    Tape t;
    SplineParamVars p;
    p.widths_raw = t.input(Tensor({8}, {flat.begin(), flat.begin() + 8}));
    p.heights_raw = t.input(Tensor({8}, {flat.begin() + 8, flat.begin() + 16}));
    p.derivs_raw = t.input(Tensor({7}, {flat.begin() + 16, flat.begin() + 23}));
    Var zv = t.input(z);
    auto [x, ld] = rq_spline_inverse(t, zv, p, 8);
    // scalar check on first call
    if (grad == nullptr) {
      // nothing
    }
    Var loss = add(t, sum(t, mul(t, x, x)), sum(t, ld));
    double out = t.value(loss).data[0];
    if (grad) {
      t.backward(loss);
      grad->clear();
      for (Var v : {p.widths_raw, p.heights_raw, p.derivs_raw}) {
        const Tensor& g = t.grad(v);
        grad->insert(grad->end(), g.data.begin(), g.data.end());
      }
    }
    return out;
  };

  // value agreement with the scalar spline
  {
    Tape t;
    SplineParamVars p;
    p.widths_raw = t.input(Tensor({8}, wr));
    p.heights_raw = t.input(Tensor({8}, hr));
    p.derivs_raw = t.input(Tensor({7}, dr));
    auto [x, ld] = rq_spline_inverse(t, t.input(z), p, 8);
    for (std::size_t i = 0; i < z.size(); ++i) {
      auto [xs, lds] = s.inverse(z.data[i]);
      CHECK(t.value(x).data[i] == doctest::Approx(xs).epsilon(1e-9));
      CHECK(t.value(ld).data[i] == doctest::Approx(lds).epsilon(1e-7));
    }
  }

  std::vector<double> flat;
  flat.insert(flat.end(), wr.begin(), wr.end());
  flat.insert(flat.end(), hr.begin(), hr.end());
  flat.insert(flat.end(), dr.begin(), dr.end());
  std::vector<double> analytic;
  eval(flat, &analytic);
  double err = gradcheck(
      [&](const std::vector<double>& f) {
        return eval(f, nullptr);
      },
      flat, analytic);
  CHECK(err < 1e-4);
}

TEST_CASE("gumbel softmax: hard sample is one-hot") {
  Tape t;
  RngStream rng(3);
  Var logits = t.input(Tensor({4}, {0.2, -1.0, 0.5, 0.0}));
  for (int i = 0; i < 50; ++i) {
    Var s = gumbel_softmax(t, logits, 0.25, true, rng);
    const Tensor& sv = t.value(s);
    double total = 0;
    int ones = 0;
    for (double v : sv.data) {
      total += v;
      if (v == 1.0) ++ones;
    }
    CHECK(total == doctest::Approx(1.0));
    CHECK(ones == 1);
  }
}

TEST_CASE("gumbel softmax: low temperature concentrates at perturbed argmax") {
  Tape t;
  RngStream rng(5);
  Tensor logits({3}, {1.0, 0.0, -1.0});
  // With the same noise, tau -> 0 soft sample approaches the one-hot of
  // argmax(logits + gumbel). Compare a tiny-tau soft draw with a hard draw
  // from a stream replay.
  for (int i = 0; i < 20; ++i) {
    RngStream r1 = rng.child(i), r2 = rng.child(i);
    Var l = t.input(logits);
    Var soft = gumbel_softmax(t, l, 1e-4, false, r1);
    Var hard = gumbel_softmax(t, l, 0.25, true, r2);
    for (int k = 0; k < 3; ++k)
      CHECK(t.value(soft).data[k] ==
            doctest::Approx(t.value(hard).data[k]).epsilon(1e-6));
  }
}

TEST_CASE("gumbel softmax: empirical frequencies match softmax(logits)") {
  Tape t;
  RngStream rng(11);
  Tensor logits({3}, {0.7, 0.0, -0.4});
  double z = std::exp(0.7) + 1.0 + std::exp(-0.4);
  double probs[3] = {std::exp(0.7) / z, 1.0 / z, std::exp(-0.4) / z};
  int counts[3] = {0, 0, 0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    if (t.size() > 500000) t.reset();
    Var s = gumbel_softmax(t, t.constant(logits), 0.25, true, rng);
    const Tensor& sv = t.value(s);
    for (int k = 0; k < 3; ++k)
      if (sv.data[k] == 1.0) ++counts[k];
  }
  for (int k = 0; k < 3; ++k) {
    double se = std::sqrt(probs[k] * (1 - probs[k]) / n);
    CHECK(std::fabs((double)counts[k] / n - probs[k]) < 3 * se);
  }
}

TEST_CASE("rng: identical seed gives bit-identical sequences") {
  RngStream a(99), b(99);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() == b.uniform());
  }
  CHECK(a.counter() == b.counter());
}

TEST_CASE("ops: assorted gradchecks") {
  RngStream rng(71);
  // composite expression touching most primitives
  auto eval = [&](const std::vector<double>& f, std::vector<double>* grad) {
    Tape t;
    Var a = t.input(Tensor({2, 3}, {f.begin(), f.begin() + 6}));
    Var b = t.input(Tensor({3, 2}, {f.begin() + 6, f.begin() + 12}));
    Var m = matmul(t, a, b);
    Var e1 = sigmoid(t, m);
    Var e2 = softplus(t, m);
    Var e3 = exp_(t, neg(t, square(t, m)));
    Var e4 = log_(t, add_const(t, square(t, m), 1.0));
    Var e5 = std_normal_cdf(t, m);
    Var ln = layer_norm_rows(t, add(t, e1, e4));
    Var ls = log_softmax_rows(t, m);
    Var total = sum(t, add(t, add(t, ln, ls), add(t, e2, add(t, e3, e5))));
    double out = t.value(total).data[0];
    if (grad) {
      t.backward(total);
      grad->clear();
      for (Var v : {a, b}) {
        const Tensor& g = t.grad(v);
        grad->insert(grad->end(), g.data.begin(), g.data.end());
      }
    }
    return out;
  };
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> flat(12);
    for (double& v : flat) v = rng.normal();
    std::vector<double> analytic;
    eval(flat, &analytic);
    double err = gradcheck(
        [&](const std::vector<double>& f) { return eval(f, nullptr); },
        flat, analytic);
    CHECK(err < 1e-4);
  }
}
