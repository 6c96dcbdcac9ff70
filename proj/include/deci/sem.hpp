#pragma once

#include <string>
#include <utility>
#include <vector>

#include "deci/graph.hpp"
#include "deci/mlp.hpp"
#include "deci/spline.hpp"

namespace deci::sem {

using graphs::AdjacencyMatrix;
using num::MlpBlock;
using num::RngStream;
using num::SplineParamVars;
using num::Tape;
using num::Tensor;
using num::Var;

enum class VarKind { Continuous, Binary, Categorical };
enum class NoiseKind { Gaussian, Spline };

struct VariableSpec {
  std::string name;
  VarKind kind = VarKind::Continuous;
  std::size_t cardinality = 1;  // >= 2 for categorical, ignored otherwise

  static VariableSpec continuous(std::string n) {
    return {std::move(n), VarKind::Continuous, 1};
  }
  static VariableSpec binary(std::string n) {
    return {std::move(n), VarKind::Binary, 2};
  }
  static VariableSpec categorical(std::string n, std::size_t k) {
    return {std::move(n), VarKind::Categorical, k};
  }
  bool is_discrete() const { return kind != VarKind::Continuous; }
};

void validate_specs(const std::vector<VariableSpec>& specs);

struct Intervention {
  std::size_t node = 0;
  double value = 0.0;  // class index for discrete nodes
};

// Exogenous noise draws for one simulation batch: z holds the additive noise
// of continuous nodes, the logistic draw of binary nodes, and is unused for
// categorical nodes, which carry per-class Gumbel draws instead.
struct NoiseDraws {
  Tensor z;                    // (n, D)
  std::vector<Tensor> gumbel;  // per node: (n, k) for categorical, else empty
  std::size_t n() const { return z.rows(); }
};

// Additive-noise SEM with shared MLPs keyed by per-node embeddings:
// f_i(x) = zeta(u_i, sum_j W[j,i] * ell(u_j, enc(x_j))).
struct DeciModel {
  std::vector<VariableSpec> specs;
  NoiseKind noise_kind = NoiseKind::Gaussian;
  std::size_t embed_dim = 0;   // defaults to D in init()
  std::size_t latent_dim = 128;
  std::size_t hidden_dim = 128;
  static constexpr int kSplineBins = 8;

  Tensor embeddings;  // (D, embed_dim)
  MlpBlock ell, zeta;
  Tensor log_var;  // (D), log sigma_i^2 for Gaussian-noise continuous nodes
  struct NodeSpline {
    Tensor widths_raw, heights_raw, derivs_raw;
  };
  std::vector<NodeSpline> splines;  // per node, empty unless Spline noise

  std::size_t d() const { return specs.size(); }
  std::size_t in_width(std::size_t i) const;   // encoded parent width
  std::size_t out_width(std::size_t i) const;  // zeta head width
  std::size_t max_in_width() const;
  std::size_t max_out_width() const;

  void init(RngStream& rng);

  std::vector<Tensor*> params();

  struct Vars {
    MlpBlock::Vars ell, zeta;
    Var emb, log_var;
    std::vector<SplineParamVars> splines;
  };
  Vars register_params(Tape& t) const;
  void read_grads(const Tape& t, const Vars& v, std::vector<Tensor>& out) const;

  // x: (n, D) raw values (class indices for discrete nodes); w: (D, D) Var
  // with entries in [0, 1]. Returns (n*D, max_out_width) node outputs, row
  // s*D + i holding f_i of sample s.
  Var predict(Tape& t, const Vars& v, const Tensor& x, Var w) const;

  // Summed log p(x | G) over the batch, differentiable in all parameters.
  Var log_likelihood(Tape& t, const Vars& v, const Tensor& x, Var w) const;
  double log_likelihood(const Tensor& x, const AdjacencyMatrix& g) const;

  // As log_likelihood, but x is a tape variable so gradients flow into
  // continuous entries (used by the missing-data ELBO). Discrete entries of
  // x must be constants.
  Var log_likelihood_vx(Tape& t, const Vars& v, Var x, Var w) const;

  NoiseDraws draw_noise(std::size_t n, RngStream& rng) const;

  // Ancestral simulation with fixed noise; do-assignments clamp nodes and
  // sever their incoming edges. Returns (n, D) raw values.
  Tensor simulate_from_noise(const AdjacencyMatrix& g, const NoiseDraws& noise,
                             const std::vector<Intervention>& dos) const;

  Tensor sample_observational(const AdjacencyMatrix& g, std::size_t n,
                              RngStream& rng) const;
  Tensor sample_interventional(const AdjacencyMatrix& g,
                               const std::vector<Intervention>& dos,
                               std::size_t n, RngStream& rng) const;

  // z_i = x_i - f_i(x); continuous models only.
  Tensor invert_to_noise(const Tensor& x, const AdjacencyMatrix& g) const;

  // Sum over non-treated nodes of log p_{z_i}(x_i - f_i(x)) on the mutilated
  // graph, with treated values substituted. x: (D) full vector whose treated
  // entries are ignored.
  double intervened_log_density(const std::vector<double>& x,
                                const std::vector<Intervention>& dos,
                                const AdjacencyMatrix& g) const;

  // Per-node plain-value outputs for fixed x; rows as in predict().
  Tensor predict_values(const Tensor& x, const Tensor& w) const;
};

// Checkpoint I/O: model + posterior in one self-describing binary file.
void save_checkpoint(const std::string& path, const DeciModel& model,
                     const graphs::VariationalGraphPosterior& posterior);
void load_checkpoint(const std::string& path, DeciModel& model,
                     graphs::VariationalGraphPosterior& posterior);

}  // namespace deci::sem
