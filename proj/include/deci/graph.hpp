#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "deci/rng.hpp"
#include "deci/tape.hpp"

namespace deci::graphs {

using num::RngStream;
using num::Tape;
using num::Tensor;
using num::Var;

struct CyclicGraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Binary directed graph; entry (j, i) set means edge j -> i. Zero diagonal.
struct AdjacencyMatrix {
  std::size_t d = 0;
  std::vector<std::uint8_t> e;  // row-major d*d

  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(std::size_t dim) : d(dim), e(dim * dim, 0) {}

  bool edge(std::size_t from, std::size_t to) const {
    return e[from * d + to] != 0;
  }
  void set_edge(std::size_t from, std::size_t to, bool on = true) {
    if (from == to) throw std::invalid_argument("adjacency: self-loop");
    e[from * d + to] = on ? 1 : 0;
  }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (auto v : e) n += v;
    return n;
  }
  Tensor to_tensor() const {
    Tensor t = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < e.size(); ++i) t.data[i] = e[i];
    return t;
  }
  static AdjacencyMatrix from_tensor(const Tensor& t);

  bool operator==(const AdjacencyMatrix& o) const = default;
};

// tr(exp(W o W)) - D, computed with a scaling-and-squaring matrix
// exponential. Zero exactly on DAGs, positive on any graph with a cycle.
double dag_penalty(const Tensor& w);

// Differentiable version; d h / dW = 2 W o exp(W o W)^T.
Var dag_penalty(Tape& t, Var w);

bool is_dag(const AdjacencyMatrix& g);

// Deterministic topological order, ties broken by ascending node index.
// Throws CyclicGraphError.
std::vector<std::size_t> topological_order(const AdjacencyMatrix& g);

// Removes all incoming edges of the treated nodes.
AdjacencyMatrix mutilate(const AdjacencyMatrix& g,
                         const std::vector<std::size_t>& treated);

// Node-pair reachability (from, to) via directed paths.
bool has_directed_path(const AdjacencyMatrix& g, std::size_t from,
                       std::size_t to);

// Soft graph prior: -lambda_s ||G - W0||_F^2 - rho h(G)^2 - alpha h(G).
// W0 defaults to the zero matrix when empty.
struct GraphPrior {
  double lambda_s = 5.0;
  double rho = 1.0;
  double alpha = 0.0;
  Tensor w0;  // empty, or (D, D) with entries in [0, 1]

  double log_density_unnormalized(const Tensor& g) const;
  Var log_density_unnormalized(Tape& t, Var g) const;
};

// ENCO-style posterior: per unordered pair {i, j} (i < j), an existence
// logit gamma and an orientation logit theta for direction i -> j (the
// reverse direction carries -theta).
struct VariationalGraphPosterior {
  std::size_t d = 0;
  Tensor gamma;  // (P) with P = d(d-1)/2
  Tensor theta;  // (P)

  VariationalGraphPosterior() = default;
  explicit VariationalGraphPosterior(std::size_t dim)
      : d(dim),
        gamma(Tensor::zeros({dim * (dim - 1) / 2})),
        theta(Tensor::zeros({dim * (dim - 1) / 2})) {}

  static VariationalGraphPosterior saturated(const AdjacencyMatrix& g,
                                             double logit_scale = 20.0);

  std::size_t pair_index(std::size_t i, std::size_t j) const;  // requires i<j

  // p(j -> i) for every ordered pair; zero diagonal.
  Tensor edge_probabilities() const;

  // Sum of Bernoulli entropies of all existence and orientation variables.
  double entropy() const;
  Var entropy(Tape& t, Var gamma_v, Var theta_v) const;

  // Exact hard sample (existence and orientation Bernoullis).
  AdjacencyMatrix sample_hard(RngStream& rng) const;

  // Gumbel-softmax sample on the tape. hard=true gives a binary forward
  // value with straight-through gradients. Returns the (d, d) adjacency Var.
  Var sample(Tape& t, Var gamma_v, Var theta_v, double temperature, bool hard,
             RngStream& rng) const;

  // Antithetic hard sample for the orientation logits. Existence variables
  // are hard Gumbel-softmax draws with straight-through gradients to gamma;
  // orientations are exact Bernoulli draws treated as constants on the tape,
  // plus a second draw from the mirrored uniforms so the caller can form the
  // low-variance ARM gradient (f(anti) - f(main)) * (u - 1/2) for theta.
  struct ArmSample {
    Var g;                 // main (d, d) adjacency on the tape
    AdjacencyMatrix main;  // binary main graph
    AdjacencyMatrix anti;  // same existence, orientations from 1 - u
    Tensor u;              // (P) orientation uniforms
    bool anti_differs = false;
  };
  ArmSample sample_arm(Tape& t, Var gamma_v, double temperature,
                       RngStream& rng) const;

  // Thresholded point estimate; second member flags a cyclic result.
  std::pair<AdjacencyMatrix, bool> mode() const;
};

}  // namespace deci::graphs
