#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "deci/graph.hpp"
#include "deci/sem.hpp"

namespace deci::inference {

using graphs::AdjacencyMatrix;
using graphs::VariationalGraphPosterior;
using num::RngStream;
using num::Tensor;
using sem::DeciModel;
using sem::Intervention;

struct PosteriorNotDag : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CausalQuery {
  std::vector<Intervention> treatment;  // do(x_T = a)
  std::vector<Intervention> reference;  // do(x_T = b), same nodes
  std::vector<std::size_t> targets;
  std::vector<Intervention> condition;  // x_C = c (empty for ATE)
};

// Anything that can simulate paired interventional arms with common noise;
// implemented by DeciModel (below) and by the synthetic-data generators.
class InterventionalSampler {
 public:
  virtual ~InterventionalSampler() = default;
  virtual const std::vector<sem::VariableSpec>& specs() const = 0;
  virtual std::pair<Tensor, Tensor> simulate_arms(
      const AdjacencyMatrix& g, const std::vector<Intervention>& a,
      const std::vector<Intervention>& b, std::size_t n,
      RngStream& rng) const = 0;
};

class DeciSampler : public InterventionalSampler {
 public:
  explicit DeciSampler(const DeciModel& m) : model_(&m) {}
  const std::vector<sem::VariableSpec>& specs() const override {
    return model_->specs;
  }
  std::pair<Tensor, Tensor> simulate_arms(const AdjacencyMatrix& g,
                                          const std::vector<Intervention>& a,
                                          const std::vector<Intervention>& b,
                                          std::size_t n,
                                          RngStream& rng) const override {
    sem::NoiseDraws noise = model_->draw_noise(n, rng);
    return {model_->simulate_from_noise(g, noise, a),
            model_->simulate_from_noise(g, noise, b)};
  }

 private:
  const DeciModel* model_;
};

void validate_query(const CausalQuery& q,
                    const std::vector<sem::VariableSpec>& specs);

// Per-target effect: a single value for continuous/binary targets, one value
// per class (interventional probability difference) for categorical targets.
struct EffectEstimate {
  std::size_t node = 0;
  std::vector<double> value;
  std::vector<double> stderr_;  // empty when not estimated
};

struct EffectResult {
  std::vector<EffectEstimate> targets;
  std::size_t n_graphs_used = 0;
  std::size_t n_cyclic_rejected = 0;
  std::vector<std::string> warnings;
};

// ATE via mutilated-graph Monte Carlo with common random numbers between the
// treatment and reference arms, marginalized over posterior graph samples.
EffectResult estimate_ate(const InterventionalSampler& sampler,
                          const VariationalGraphPosterior& posterior,
                          const CausalQuery& query, std::size_t n_graphs,
                          std::size_t n_per_graph, RngStream& rng);

inline EffectResult estimate_ate(const DeciModel& model,
                                 const VariationalGraphPosterior& posterior,
                                 const CausalQuery& query,
                                 std::size_t n_graphs, std::size_t n_per_graph,
                                 RngStream& rng) {
  DeciSampler s(model);
  return estimate_ate(s, posterior, query, n_graphs, n_per_graph, rng);
}

// Random Fourier feature ridge regression approximating an RBF kernel; the
// intercept is the unpenalized target mean.
struct RffConfig {
  std::size_t n_features = 3000;
  double lengthscale = 1.0;
  double ridge_scale = 1e-4;  // ridge coefficient = ridge_scale * n_features
};

struct RffSurrogate {
  Tensor freqs;    // (F, C_dim)
  Tensor phases;   // (F)
  Tensor weights;  // (F, Y_dim)
  Tensor y_mean;   // (Y_dim)

  // xc: (n, C_dim) -> (n, Y_dim)
  Tensor predict(const Tensor& xc) const;
};

// Draws frequencies/phases from rng, then solves the ridge system.
RffSurrogate fit_rff_surrogate(const Tensor& xc, const Tensor& y,
                               const RffConfig& cfg, RngStream& rng);

// Refits the linear weights with the basis of an existing surrogate (shared
// frequencies across treatment arms).
RffSurrogate refit_rff_surrogate(const RffSurrogate& basis, const Tensor& xc,
                                 const Tensor& y, const RffConfig& cfg);

// CATE via per-graph interventional simulation and surrogate regression on
// (x_C, x_Y); discrete conditioning stratifies exactly instead.
EffectResult estimate_cate(const InterventionalSampler& sampler,
                           const VariationalGraphPosterior& posterior,
                           const CausalQuery& query, std::size_t n_graphs,
                           std::size_t n_per_graph, RngStream& rng,
                           const RffConfig& rff = {});

inline EffectResult estimate_cate(const DeciModel& model,
                                  const VariationalGraphPosterior& posterior,
                                  const CausalQuery& query,
                                  std::size_t n_graphs,
                                  std::size_t n_per_graph, RngStream& rng,
                                  const RffConfig& rff = {}) {
  DeciSampler s(model);
  return estimate_cate(s, posterior, query, n_graphs, n_per_graph, rng, rff);
}

}  // namespace deci::inference
