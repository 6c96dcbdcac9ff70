#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "deci/adam.hpp"
#include "deci/graph.hpp"
#include "deci/sem.hpp"

namespace deci::training {

using graphs::GraphPrior;
using graphs::VariationalGraphPosterior;
using num::RngStream;
using num::Tape;
using num::Tensor;
using num::Var;

struct TrainConfig {
  sem::NoiseKind noise = sem::NoiseKind::Gaussian;
  double lambda_s = 5.0;
  double temperature = 0.25;
  int inner_max_steps = 6000;
  int inner_patience = 1500;
  // Step-size multiplier for the posterior logits relative to lr. Keeping
  // the graph slower than the structural equations prevents edge
  // orientations from locking in while spline noise is still near-Gaussian
  // (identity-initialized splines make the anti-causal direction of skewed
  // benchmarks look better at first).
  double graph_lr_scale = 0.1;
  double lr = 0.01;
  double lr_decay_factor = 10.0;
  int lr_patience = 500;
  int max_lr_decays = 2;
  int outer_max_steps = 100;
  double progress_ratio = 0.65;
  double rho_multiplier = 10.0;
  double penalty_cap = 1e13;
  std::size_t batch_size = 0;  // 0: full data up to 1024, else 512
  std::size_t penalty_samples = 100;
  double dag_tolerance = 1e-4;
  std::size_t embed_dim = 0;  // 0: node count
  std::size_t hidden_dim = 128;
  std::size_t latent_dim = 128;
  std::uint64_t seed = 1;
  std::string diagnostics_path;  // optional JSONL log
  // Non-empty: the posterior is pinned to this graph (true-graph inference)
  // and only the SEM parameters are trained.
  graphs::AdjacencyMatrix clamp_graph;

  std::size_t effective_batch(std::size_t n) const {
    if (batch_size) return std::min(batch_size, n);
    return n <= 1024 ? n : 512;
  }
};

struct AugLagState {
  double rho = 1.0;
  double alpha = 0.0;
  int outer_step = 0;
  double last_penalty = std::numeric_limits<double>::infinity();
};

// The schedule rule: alpha += rho * P2 when P2 < ratio * P1, else rho *= mult.
AugLagState auglag_update(const AugLagState& s, double p2,
                          double progress_ratio = 0.65,
                          double rho_multiplier = 10.0);

// Amortized Gaussian imputation: (zero-filled x, observed mask) -> per-node
// mean and log-variance.
struct ImputationNetwork {
  std::size_t d = 0;
  num::MlpBlock enc;

  void init(std::size_t dim, std::size_t hidden, RngStream& rng);
  std::vector<Tensor*> params() { return enc.params(); }
};

struct ElboParts {
  Var elbo, loglik, prior, entropy;
  // ARM ascent gradient for the orientation logits. The orientation draws
  // are constants on the tape, so theta only receives the entropy gradient
  // through backward(); this term carries the likelihood-and-prior part and
  // must be added to the tape gradient. Empty when the posterior is clamped.
  Tensor arm_theta_grad;
};

// Single-sample ELBO: one hard graph draw. Existence variables use
// straight-through Gumbel-softmax; orientation variables use the antithetic
// ARM estimator (see ElboParts::arm_theta_grad). Likelihood is rescaled to
// the full dataset; the posterior entropy is exact.
ElboParts elbo_estimate(Tape& t, const sem::DeciModel& model,
                        const sem::DeciModel::Vars& mv,
                        const VariationalGraphPosterior& q, Var gamma_v,
                        Var theta_v, const GraphPrior& prior,
                        const Tensor& batch, std::size_t n_total,
                        double temperature, RngStream& rng);

// Missing-data variant: missing continuous entries are imputed by a
// reparameterized draw from the imputation network; adds the imputation
// entropy. mask is row-major over the batch, nonzero = missing.
ElboParts elbo_missing(Tape& t, const sem::DeciModel& model,
                       const sem::DeciModel::Vars& mv,
                       const ImputationNetwork& imputer,
                       const num::MlpBlock::Vars& iv,
                       const VariationalGraphPosterior& q, Var gamma_v,
                       Var theta_v, const GraphPrior& prior,
                       const Tensor& batch,
                       const std::vector<std::uint8_t>& mask,
                       std::size_t n_total, double temperature,
                       RngStream& rng);

struct Diagnostics {
  bool dag_converged = false;
  bool finite = true;
  double final_elbo = 0.0;
  double final_penalty = 0.0;
  int outer_steps = 0;
  long long inner_steps = 0;
};

struct TrainResult {
  sem::DeciModel model;
  VariationalGraphPosterior posterior;
  Diagnostics diag;
};

// Full augmented-Lagrangian loop. missing may be empty (fully observed) or
// row-major n*D with nonzero marking missing cells.
TrainResult train(const std::vector<sem::VariableSpec>& specs, const Tensor& x,
                  const std::vector<std::uint8_t>& missing,
                  const TrainConfig& cfg);

}  // namespace deci::training
