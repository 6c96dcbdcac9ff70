#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "deci/graph.hpp"
#include "deci/inference.hpp"
#include "deci/sem.hpp"

namespace deci::datagen {

using graphs::AdjacencyMatrix;
using num::RngStream;
using num::Tensor;
using sem::Intervention;
using sem::VariableSpec;

struct Dataset {
  std::vector<VariableSpec> specs;
  Tensor x;  // (n, D); discrete columns hold class indices
  std::vector<std::uint8_t> missing;  // empty, or row-major n*D, nonzero=missing

  std::size_t n() const { return x.rows(); }
  std::size_t d() const { return specs.size(); }
};

// One ground-truth intervention test case with its Monte Carlo ATE estimate.
struct InterventionCase {
  std::size_t treatment = 0;
  double value = 0.0;
  double reference = 0.0;
  std::vector<std::size_t> targets;
  bool has_condition = false;
  std::size_t condition_node = 0;
  double condition_value = 0.0;
  std::vector<double> ate;         // per target, aligned with targets
  std::vector<double> ate_stderr;  // per target
};

// Ground-truth SEM built from per-node closures; continuous nodes are
// additive-noise (x_i = mean_i(x) + z_i), discrete nodes sample a class from
// probs_i(x) by inverting a shared uniform draw. The closures encode the true
// parent structure, so simulation always follows the true graph; the graph
// argument of simulate_arms only carries the query's mutilation.
struct ClosureSem : inference::InterventionalSampler {
  struct Node {
    std::function<double(const std::vector<double>&)> mean;  // continuous
    std::function<double(RngStream&)> sample_noise;          // continuous
    std::function<double(double)> noise_log_density;  // optional, for HMC
    std::function<std::vector<double>(const std::vector<double>&)>
        probs;  // discrete
  };

  std::vector<VariableSpec> specs_;
  AdjacencyMatrix graph{0};
  std::vector<Node> nodes;

  const std::vector<VariableSpec>& specs() const override { return specs_; }

  // Exogenous draws: z for continuous nodes, a uniform in (0,1) for discrete.
  Tensor draw_exogenous(std::size_t n, RngStream& rng) const;
  Tensor simulate_from_exogenous(const Tensor& u,
                                 const std::vector<Intervention>& dos) const;
  Tensor sample(std::size_t n, RngStream& rng,
                const std::vector<Intervention>& dos = {}) const;

  std::pair<Tensor, Tensor> simulate_arms(
      const AdjacencyMatrix& g, const std::vector<Intervention>& a,
      const std::vector<Intervention>& b, std::size_t n,
      RngStream& rng) const override;
};

struct GroundTruthPackage {
  AdjacencyMatrix graph{0};
  std::shared_ptr<ClosureSem> sem;
  std::vector<InterventionCase> cases;
};

// Fills case.ate/ate_stderr from n paired interventional draws per case.
void fill_ground_truth_ate(GroundTruthPackage& gt, std::size_t n,
                           RngStream& rng);

enum class GraphFamily { ER, SF };
enum class SyntheticNoise { Gaussian, MlpGaussian };

struct SyntheticSpec {
  GraphFamily family = GraphFamily::ER;
  std::size_t d = 16;
  std::size_t e = 64;
  SyntheticNoise noise = SyntheticNoise::Gaussian;
  std::size_t n = 5000;
};

// e distinct pairs uniformly at random, oriented along a random permutation.
AdjacencyMatrix sample_er_graph(std::size_t d, std::size_t e, RngStream& rng);
// Preferential attachment, edges oriented from earlier to later nodes.
AdjacencyMatrix sample_sf_graph(std::size_t d, std::size_t e, RngStream& rng);

// Random-spline additive noise model over G with up to five intervention test
// cases (effect = late nodes in the causal order, treatment an ancestor at
// most three edges away); ATE filled with 2000 paired draws.
std::pair<Dataset, GroundTruthPackage> simulate_anm(const AdjacencyMatrix& g,
                                                    const SyntheticSpec& spec,
                                                    RngStream& rng);

// The 13 hand-crafted benchmark SEMs; 2000 training samples, ATE ground truth
// from 2000 paired draws. Conditional (CATE) cases carry the conditioning
// node/value; conditional ground truth is computed on demand via HMC.
std::pair<Dataset, GroundTruthPackage> generate_csuite(const std::string& name,
                                                       RngStream& rng);
const std::vector<std::string>& csuite_names();

struct HmcConfig {
  std::size_t burn_in = 10000;
  std::size_t thin = 5;
  std::size_t leapfrog_steps = 20;
  double init_step = 0.1;
  double target_accept_lo = 0.6;
  double target_accept_hi = 0.9;
  std::size_t max_retries = 3;
};

// Conditional interventional samples via leapfrog HMC over the exogenous
// noise of non-treated, non-conditioned continuous nodes. Returns (n, D)
// rows of full variable assignments.
Tensor hmc_conditional_samples(const ClosureSem& sem,
                               const std::vector<Intervention>& dos,
                               const std::vector<Intervention>& condition,
                               std::size_t n_samples, RngStream& rng,
                               const HmcConfig& cfg = {});

// Masks each cell independently with the given probability; a row mask that
// would hide an entire row is redrawn.
void apply_mcar_mask(Dataset& data, double rate, RngStream& rng);

// Directory layout: data.csv (header row, empty cell = missing),
// metadata.json (variable specs), graph.csv (adjacency, row=parent),
// interventions.json (test cases with ground-truth estimates).
void save_dataset(const std::string& dir, const Dataset& data,
                  const AdjacencyMatrix* graph = nullptr,
                  const std::vector<InterventionCase>* cases = nullptr);

struct DatasetPackage {
  Dataset data;
  bool has_graph = false;
  AdjacencyMatrix graph{0};
  std::vector<InterventionCase> cases;
};
DatasetPackage load_dataset(const std::string& dir);

}  // namespace deci::datagen
