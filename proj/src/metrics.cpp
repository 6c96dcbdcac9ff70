#include "deci/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace deci::metrics {

namespace {

void check_dims(const AdjacencyMatrix& a, const AdjacencyMatrix& b) {
  if (a.d != b.d) throw std::invalid_argument("metrics: dimension mismatch");
}

double f1_from_counts(double tp, double fp, double fn) {
  if (tp + fp + fn == 0.0) return 1.0;  // both graphs empty
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

// transitive closure by repeated squaring of the boolean reachability matrix
std::vector<std::uint8_t> reachability(const AdjacencyMatrix& g) {
  std::size_t d = g.d;
  std::vector<std::uint8_t> r(g.e);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k)
        if (r[i * d + k])
          for (std::size_t j = 0; j < d; ++j)
            if (r[k * d + j] && !r[i * d + j]) {
              r[i * d + j] = 1;
              changed = true;
            }
  }
  return r;
}

}  // namespace

double adjacency_f1(const AdjacencyMatrix& truth, const AdjacencyMatrix& pred) {
  check_dims(truth, pred);
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < truth.d; ++i)
    for (std::size_t j = i + 1; j < truth.d; ++j) {
      bool t = truth.edge(i, j) || truth.edge(j, i);
      bool p = pred.edge(i, j) || pred.edge(j, i);
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
  return f1_from_counts(tp, fp, fn);
}

double orientation_f1(const AdjacencyMatrix& truth,
                      const AdjacencyMatrix& pred) {
  check_dims(truth, pred);
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (std::size_t i = 0; i < truth.d; ++i)
    for (std::size_t j = 0; j < truth.d; ++j) {
      if (i == j) continue;
      bool t = truth.edge(i, j), p = pred.edge(i, j);
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
  return f1_from_counts(tp, fp, fn);
}

double causal_accuracy(const AdjacencyMatrix& truth,
                       const AdjacencyMatrix& pred) {
  check_dims(truth, pred);
  auto rt = reachability(truth);
  auto rp = reachability(pred);
  double total = 0.0, hit = 0.0;
  for (std::size_t k = 0; k < rt.size(); ++k) {
    if (!rt[k]) continue;
    total += 1.0;
    hit += rp[k] ? 1.0 : 0.0;
  }
  return total == 0.0 ? 1.0 : hit / total;
}

DiscoveryReport expected_discovery_metrics(
    const AdjacencyMatrix& truth, const VariationalGraphPosterior& posterior,
    std::size_t n_samples, RngStream& rng) {
  std::vector<double> adj, ori, cau;
  for (std::size_t s = 0; s < n_samples; ++s) {
    AdjacencyMatrix g = posterior.sample_hard(rng);
    adj.push_back(adjacency_f1(truth, g));
    ori.push_back(orientation_f1(truth, g));
    cau.push_back(causal_accuracy(truth, g));
  }
  auto summarize = [](const std::vector<double>& v) {
    MetricSummary s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / (double)v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stddev = v.size() > 1 ? std::sqrt(ss / (double)(v.size() - 1)) : 0.0;
    return s;
  };
  return {summarize(adj), summarize(ori), summarize(cau)};
}

double ate_rmse(const std::vector<double>& estimates,
                const std::vector<double>& truth) {
  if (estimates.size() != truth.size() || estimates.empty())
    throw std::invalid_argument("rmse: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i)
    s += (estimates[i] - truth[i]) * (estimates[i] - truth[i]);
  return std::sqrt(s / (double)estimates.size());
}

double cate_rmse(const std::vector<double>& estimates,
                 const std::vector<double>& truth) {
  return ate_rmse(estimates, truth);
}

}  // namespace deci::metrics
