#include "deci/spline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deci::num {

namespace {

double stable_softplus(double x) {
  return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0);
}

// softplus(x) = y  =>  x = log(exp(y) - 1)
double inv_softplus(double y) { return std::log(std::expm1(y)); }

std::vector<double> partition(const std::vector<double>& raw, double bound) {
  std::size_t k = raw.size();
  double mx = *std::max_element(raw.begin(), raw.end());
  double z = 0.0;
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) z += std::exp(raw[i] - mx);
  double span = 2.0 * bound - (double)k * RqSpline::kMinBin;
  std::vector<double> knots(k + 1);
  knots[0] = -bound;
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = RqSpline::kMinBin + span * std::exp(raw[i] - mx) / z;
    knots[i + 1] = knots[i] + w[i];
  }
  knots[k] = bound;  // kill accumulated rounding
  return knots;
}

std::size_t find_bin(const std::vector<double>& knots, double v) {
  // v assumed inside (knots.front(), knots.back())
  std::size_t lo = 0, hi = knots.size() - 2;
  while (lo < hi) {
    std::size_t mid = (lo + hi + 1) / 2;
    if (v >= knots[mid]) lo = mid; else hi = mid - 1;
  }
  return lo;
}

}  // namespace

RqSpline RqSpline::identity(int bins, double bound) {
  RqSpline s;
  s.bound = bound;
  s.xs.resize(bins + 1);
  for (int i = 0; i <= bins; ++i)
    s.xs[i] = -bound + 2.0 * bound * (double)i / bins;
  s.ys = s.xs;
  s.ds.assign(bins + 1, 1.0);
  return s;
}

RqSpline RqSpline::from_unconstrained(const std::vector<double>& widths_raw,
                                      const std::vector<double>& heights_raw,
                                      const std::vector<double>& derivs_raw,
                                      double bound) {
  if (heights_raw.size() != widths_raw.size() ||
      derivs_raw.size() + 1 != widths_raw.size())
    throw std::invalid_argument("RqSpline: parameter length mismatch");
  RqSpline s;
  s.bound = bound;
  s.xs = partition(widths_raw, bound);
  s.ys = partition(heights_raw, bound);
  s.ds.resize(widths_raw.size() + 1);
  s.ds.front() = s.ds.back() = 1.0;
  for (std::size_t i = 0; i < derivs_raw.size(); ++i)
    s.ds[i + 1] = kMinDeriv + stable_softplus(derivs_raw[i]);
  return s;
}

RqSpline RqSpline::random(int bins, double bound, RngStream& rng) {
  RqSpline s = identity(bins, bound);
  for (int i = 0; i <= bins; ++i) s.ds[i] = std::exp(0.8 * rng.normal());
  // jitter heights while keeping monotonicity
  std::vector<double> hraw(bins);
  for (int i = 0; i < bins; ++i) hraw[i] = 0.7 * rng.normal();
  s.ys = partition(hraw, bound);
  return s;
}

std::pair<double, double> RqSpline::forward(double x) const {
  if (x <= xs.front() || x >= xs.back()) return {x, 0.0};
  std::size_t k = find_bin(xs, x);
  double w = xs[k + 1] - xs[k], h = ys[k + 1] - ys[k];
  double sl = h / w;
  double xi = (x - xs[k]) / w;
  double omx = 1.0 - xi;
  double den = sl + (ds[k + 1] + ds[k] - 2.0 * sl) * xi * omx;
  double y = ys[k] + h * (sl * xi * xi + ds[k] * xi * omx) / den;
  double deriv = sl * sl *
                 (ds[k + 1] * xi * xi + 2.0 * sl * xi * omx +
                  ds[k] * omx * omx) /
                 (den * den);
  return {y, std::log(deriv)};
}

std::pair<double, double> RqSpline::inverse(double y) const {
  if (y <= ys.front() || y >= ys.back()) return {y, 0.0};
  std::size_t k = find_bin(ys, y);
  double w = xs[k + 1] - xs[k], h = ys[k + 1] - ys[k];
  double sl = h / w;
  double dsum = ds[k + 1] + ds[k] - 2.0 * sl;
  double tt = y - ys[k];
  double a = h * (sl - ds[k]) + tt * dsum;
  double b = h * ds[k] - tt * dsum;
  double c = -sl * tt;
  double xi = 2.0 * c / (-b - std::sqrt(b * b - 4.0 * a * c));
  double omx = 1.0 - xi;
  double x = xs[k] + xi * w;
  double den = sl + dsum * xi * omx;
  double deriv = sl * sl *
                 (ds[k + 1] * xi * xi + 2.0 * sl * xi * omx +
                  ds[k] * omx * omx) /
                 (den * den);
  return {x, -std::log(deriv)};
}

void rq_spline_identity_params(int bins, std::vector<double>& widths_raw,
                               std::vector<double>& heights_raw,
                               std::vector<double>& derivs_raw) {
  widths_raw.assign(bins, 0.0);
  heights_raw.assign(bins, 0.0);
  derivs_raw.assign(bins - 1, inv_softplus(1.0 - RqSpline::kMinDeriv));
}

std::pair<Var, Var> rq_spline_inverse(Tape& t, Var z,
                                      const SplineParamVars& p, int bins,
                                      double bound) {
  const std::size_t k = (std::size_t)bins;
  const std::size_t n = t.value(z).size();

  // knot vectors from unconstrained parameters
  auto knots_from = [&](Var raw) {
    Var row = reshape(t, raw, {1, k});
    Var probs = exp_(t, log_softmax_rows(t, row));
    double span = 2.0 * bound - (double)k * RqSpline::kMinBin;
    Var widths = add_const(t, scale(t, probs, span), RqSpline::kMinBin);
    Tensor cum = Tensor::zeros({k, k + 1});  // knots[i] = -B + sum_{j<i} w_j
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t i = j + 1; i <= k; ++i) cum.at(j, i) = 1.0;
    Var knots = add_const(t, matmul(t, widths, t.constant(std::move(cum))),
                          -bound);
    return std::pair<Var, Var>{reshape(t, knots, {k + 1}),
                               reshape(t, widths, {k})};
  };
  auto [xk_all, wid_all] = knots_from(p.widths_raw);
  auto [yk_all, hei_all] = knots_from(p.heights_raw);

  // derivatives: 1 at both boundaries, softplus interior
  Var dint = add_const(t, softplus(t, p.derivs_raw), RqSpline::kMinDeriv);
  Var ones1 = t.constant(Tensor::full({1, 1}, 1.0));
  Var dk_all = reshape(
      t, concat_cols(t, {ones1, reshape(t, dint, {1, k - 1}), ones1}),
      {k + 1});

  // bin selection (constant w.r.t. gradients)
  const Tensor& zv = t.value(z);
  const std::vector<double>& ykv = t.value(yk_all).data;
  Tensor in_range = Tensor::zeros(zv.shape);
  std::vector<std::size_t> bin(n), binp1(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = zv.data[i];
    bool inside = v > -bound && v < bound;
    in_range.data[i] = inside ? 1.0 : 0.0;
    // Tail elements are replaced by the safe interior value 0 below, so
    // their bin must match that value.
    std::size_t b = find_bin(ykv, inside ? v : 0.0);
    bin[i] = b;
    binp1[i] = b + 1;
  }

  // zc: in-range values pass through, tails replaced by a safe interior 0
  Var zc = mul(t, t.constant(in_range), z);

  Var yk = gather(t, yk_all, bin);
  Var yk1 = gather(t, yk_all, binp1);
  Var xk = gather(t, xk_all, bin);
  Var d0 = gather(t, dk_all, bin);
  Var d1 = gather(t, dk_all, binp1);
  Var w = gather(t, reshape(t, wid_all, {k}), bin);
  Var h = sub(t, yk1, yk);
  Var sl = div(t, h, w);

  Var dsum = sub(t, add(t, d0, d1), scale(t, sl, 2.0));
  Var tt = sub(t, zc, yk);
  Var a = add(t, mul(t, h, sub(t, sl, d0)), mul(t, tt, dsum));
  Var b = sub(t, mul(t, h, d0), mul(t, tt, dsum));
  Var c = neg(t, mul(t, sl, tt));
  Var disc = sqrt_(t, sub(t, square(t, b),
                          scale(t, mul(t, a, c), 4.0)));
  Var xi = div(t, scale(t, c, 2.0), neg(t, add(t, b, disc)));
  Var omx = sub(t, t.constant(Tensor::full({n}, 1.0)), xi);
  Var x_in = add(t, xk, mul(t, xi, w));

  Var den = add(t, sl, mul(t, dsum, mul(t, xi, omx)));
  Var num = add(t, mul(t, d1, square(t, xi)),
                add(t, scale(t, mul(t, sl, mul(t, xi, omx)), 2.0),
                    mul(t, d0, square(t, omx))));
  Var logderiv = sub(t, add(t, scale(t, log_(t, sl), 2.0), log_(t, num)),
                     scale(t, log_(t, den), 2.0));

  Var x = select(t, in_range, x_in, z);
  Var zero = t.constant(Tensor::zeros({n}));
  Var logdet = select(t, in_range, neg(t, logderiv), zero);
  return {x, logdet};
}

}  // namespace deci::num
