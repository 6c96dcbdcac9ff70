#pragma once

#include <utility>
#include <vector>

#include "deci/rng.hpp"
#include "deci/tape.hpp"

namespace deci::num {

// Monotone rational quadratic spline bijection on the reals: K bins on
// [-bound, bound], identity tails outside. Both knot ranges span the same
// interval so the tails join continuously; boundary derivatives are 1.
struct RqSpline {
  double bound = 5.0;
  std::vector<double> xs, ys, ds;  // K+1 knot positions / values / derivatives

  static constexpr double kMinBin = 1e-3;
  static constexpr double kMinDeriv = 1e-3;

  static RqSpline identity(int bins = 8, double bound = 5.0);

  // widths_raw, heights_raw: length K; derivs_raw: length K-1 (interior).
  static RqSpline from_unconstrained(const std::vector<double>& widths_raw,
                                     const std::vector<double>& heights_raw,
                                     const std::vector<double>& derivs_raw,
                                     double bound = 5.0);

  // Random monotone spline for synthetic-data generation: K uniform knots,
  // log-normal derivative perturbations.
  static RqSpline random(int bins, double bound, RngStream& rng);

  int bins() const { return (int)xs.size() - 1; }

  // forward: (x, log|dy/dx|); inverse: (y, log|dx/dy|) of the forward map.
  std::pair<double, double> forward(double x) const;
  std::pair<double, double> inverse(double y) const;
};

// Tape-recorded inverse pass of a spline whose parameters are themselves
// tape variables (used for the flow noise likelihood). z holds noise values
// (1-D); returns the base-space values and log|d base/d z| per element.
struct SplineParamVars {
  Var widths_raw;   // (K)
  Var heights_raw;  // (K)
  Var derivs_raw;   // (K-1)
};
std::pair<Var, Var> rq_spline_inverse(Tape& t, Var z,
                                      const SplineParamVars& p, int bins,
                                      double bound = 5.0);

// Unconstrained parameter values that make the spline the identity map.
void rq_spline_identity_params(int bins, std::vector<double>& widths_raw,
                               std::vector<double>& heights_raw,
                               std::vector<double>& derivs_raw);

}  // namespace deci::num
