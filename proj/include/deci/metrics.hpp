#pragma once

#include <vector>

#include "deci/graph.hpp"

namespace deci::metrics {

using graphs::AdjacencyMatrix;
using graphs::VariationalGraphPosterior;
using num::RngStream;

// F1 over undirected edge presence per node pair; 1 when both graphs are
// empty.
double adjacency_f1(const AdjacencyMatrix& truth, const AdjacencyMatrix& pred);

// F1 over directed edges; a reversed edge is both a false positive and a
// false negative. 1 when both graphs are empty.
double orientation_f1(const AdjacencyMatrix& truth,
                      const AdjacencyMatrix& pred);

// Fraction of the true graph's ancestor relations that are ancestor
// relations of the prediction; 1 when the truth has no edges. Cyclic
// predictions are scored on their reachability.
double causal_accuracy(const AdjacencyMatrix& truth,
                       const AdjacencyMatrix& pred);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;
};

struct DiscoveryReport {
  MetricSummary adjacency;
  MetricSummary orientation;
  MetricSummary causal;
};

// Monte Carlo mean/stddev of the three metrics over hard posterior samples.
DiscoveryReport expected_discovery_metrics(
    const AdjacencyMatrix& truth, const VariationalGraphPosterior& posterior,
    std::size_t n_samples, RngStream& rng);

double ate_rmse(const std::vector<double>& estimates,
                const std::vector<double>& truth);
double cate_rmse(const std::vector<double>& estimates,
                 const std::vector<double>& truth);

}  // namespace deci::metrics
