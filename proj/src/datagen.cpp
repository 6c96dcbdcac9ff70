#include "deci/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deci/spline.hpp"

namespace deci::datagen {

using json = nlohmann::json;

namespace {

double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0);
}

double gauss_logpdf(double z, double sigma) {
  double u = z / sigma;
  return -0.5 * u * u - std::log(sigma) - 0.9189385332046727;
}

double logistic_logpdf(double z, double s) {
  double u = z / s;
  return -std::fabs(u) - 2.0 * std::log1p(std::exp(-std::fabs(u))) -
         std::log(s);
}

std::size_t class_from_uniform(const std::vector<double>& p, double u) {
  double c = 0.0;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    c += p[k];
    if (u < c) return k;
  }
  return p.size() - 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// ClosureSem

Tensor ClosureSem::draw_exogenous(std::size_t n, RngStream& rng) const {
  std::size_t d = specs_.size();
  Tensor u = Tensor::zeros({n, d});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < d; ++i)
      u.at(s, i) = specs_[i].is_discrete() ? rng.uniform()
                                           : nodes[i].sample_noise(rng);
  return u;
}

Tensor ClosureSem::simulate_from_exogenous(
    const Tensor& u, const std::vector<Intervention>& dos) const {
  std::size_t n = u.rows(), d = specs_.size();
  auto order = graphs::topological_order(graph);
  Tensor x = Tensor::zeros({n, d});
  std::vector<double> row(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t i : order) {
      const Intervention* iv = nullptr;
      for (const auto& v : dos)
        if (v.node == i) iv = &v;
      if (iv) {
        row[i] = iv->value;
      } else if (specs_[i].is_discrete()) {
        row[i] = (double)class_from_uniform(nodes[i].probs(row), u.at(s, i));
      } else {
        row[i] = nodes[i].mean(row) + u.at(s, i);
      }
      x.at(s, i) = row[i];
    }
  }
  return x;
}

Tensor ClosureSem::sample(std::size_t n, RngStream& rng,
                          const std::vector<Intervention>& dos) const {
  return simulate_from_exogenous(draw_exogenous(n, rng), dos);
}

std::pair<Tensor, Tensor> ClosureSem::simulate_arms(
    const AdjacencyMatrix&, const std::vector<Intervention>& a,
    const std::vector<Intervention>& b, std::size_t n, RngStream& rng) const {
  Tensor u = draw_exogenous(n, rng);
  return {simulate_from_exogenous(u, a), simulate_from_exogenous(u, b)};
}

void fill_ground_truth_ate(GroundTruthPackage& gt, std::size_t n,
                           RngStream& rng) {
  for (auto& c : gt.cases) {
    std::vector<Intervention> a{{c.treatment, c.value}};
    std::vector<Intervention> b{{c.treatment, c.reference}};
    auto [xa, xb] = gt.sem->simulate_arms(gt.graph, a, b, n, rng);
    c.ate.clear();
    c.ate_stderr.clear();
    for (std::size_t t : c.targets) {
      double mean = 0.0, m2 = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        double diff = xa.at(s, t) - xb.at(s, t);
        double delta = diff - mean;
        mean += delta / (double)(s + 1);
        m2 += delta * (diff - mean);
      }
      c.ate.push_back(mean);
      c.ate_stderr.push_back(n > 1 ? std::sqrt(m2 / ((double)n * (n - 1)))
                                   : 0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Random graphs

AdjacencyMatrix sample_er_graph(std::size_t d, std::size_t e, RngStream& rng) {
  std::size_t max_pairs = d * (d - 1) / 2;
  if (e > max_pairs) throw std::invalid_argument("er: too many edges");
  std::vector<std::size_t> pairs(max_pairs);
  std::iota(pairs.begin(), pairs.end(), 0);
  for (std::size_t k = 0; k < e; ++k) {
    std::size_t j = k + rng.uniform_index(max_pairs - k);
    std::swap(pairs[k], pairs[j]);
  }
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t k = 0; k + 1 < d; ++k) {
    std::size_t j = k + rng.uniform_index(d - k);
    std::swap(perm[k], perm[j]);
  }
  std::vector<std::size_t> rank(d);
  for (std::size_t k = 0; k < d; ++k) rank[perm[k]] = k;

  AdjacencyMatrix g(d);
  for (std::size_t k = 0; k < e; ++k) {
    // decode pair index to (i, j), i < j
    std::size_t idx = pairs[k], i = 0;
    std::size_t row = d - 1;
    while (idx >= row) {
      idx -= row;
      --row;
      ++i;
    }
    std::size_t j = i + 1 + idx;
    if (rank[i] < rank[j])
      g.set_edge(i, j);
    else
      g.set_edge(j, i);
  }
  return g;
}

AdjacencyMatrix sample_sf_graph(std::size_t d, std::size_t e, RngStream& rng) {
  std::size_t max_pairs = d * (d - 1) / 2;
  if (e > max_pairs) throw std::invalid_argument("sf: too many edges");
  AdjacencyMatrix g(d);
  std::vector<std::size_t> degree(d, 0);
  std::size_t added = 0;
  // round-robin over arriving nodes: each pass attaches one more parent per
  // node (preferentially by degree) until the edge budget is spent
  while (added < e) {
    bool progress = false;
    for (std::size_t t = 1; t < d && added < e; ++t) {
      std::vector<std::size_t> eligible;
      double total = 0.0;
      for (std::size_t o = 0; o < t; ++o)
        if (!g.edge(o, t)) {
          eligible.push_back(o);
          total += (double)degree[o] + 1.0;
        }
      if (eligible.empty()) continue;
      double r = rng.uniform() * total;
      std::size_t pick = eligible.back();
      for (std::size_t o : eligible) {
        r -= (double)degree[o] + 1.0;
        if (r <= 0.0) {
          pick = o;
          break;
        }
      }
      g.set_edge(pick, t);
      ++degree[pick];
      ++degree[t];
      ++added;
      progress = true;
    }
    if (!progress) break;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Random-spline ANMs

namespace {

// Random two-layer MLP push-forward of a standard normal, standardized to
// zero mean / unit variance with constants estimated at construction.
struct MlpNoise {
  static constexpr int kHidden = 16;
  std::vector<double> w1, b1, w2;
  double b2 = 0.0, mean = 0.0, std = 1.0;

  explicit MlpNoise(RngStream& rng) {
    for (int h = 0; h < kHidden; ++h) {
      w1.push_back(rng.normal());
      b1.push_back(0.3 * rng.normal());
      w2.push_back(rng.normal() / std::sqrt((double)kHidden));
    }
    b2 = 0.3 * rng.normal();
    double m = 0.0, m2 = 0.0;
    const std::size_t kCalib = 10000;
    for (std::size_t s = 0; s < kCalib; ++s) {
      double v = raw(rng.normal());
      double delta = v - m;
      m += delta / (double)(s + 1);
      m2 += delta * (v - m);
    }
    mean = m;
    std = std::sqrt(m2 / (double)(kCalib - 1));
  }
  double raw(double g) const {
    double out = b2;
    for (int h = 0; h < kHidden; ++h)
      out += w2[h] * std::tanh(w1[h] * g + b1[h]);
    return out;
  }
  double transform(double g) const { return (raw(g) - mean) / std; }
};

}  // namespace

std::pair<Dataset, GroundTruthPackage> simulate_anm(const AdjacencyMatrix& g,
                                                    const SyntheticSpec& spec,
                                                    RngStream& rng) {
  std::size_t d = g.d;
  auto order = graphs::topological_order(g);

  auto sem = std::make_shared<ClosureSem>();
  sem->graph = g;
  for (std::size_t i = 0; i < d; ++i)
    sem->specs_.push_back(VariableSpec::continuous("x" + std::to_string(i)));
  sem->nodes.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<std::size_t> parents;
    for (std::size_t j = 0; j < d; ++j)
      if (g.edge(j, i)) parents.push_back(j);
    if (parents.empty()) {
      sem->nodes[i].mean = [](const std::vector<double>&) { return 0.0; };
    } else {
      num::RqSpline sp = num::RqSpline::random(8, 3.0, rng);
      sem->nodes[i].mean = [sp, parents](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t p : parents) s += x[p];
        return sp.forward(s).first;
      };
    }
    if (spec.noise == SyntheticNoise::Gaussian) {
      sem->nodes[i].sample_noise = [](RngStream& r) { return r.normal(); };
      sem->nodes[i].noise_log_density = [](double z) {
        return gauss_logpdf(z, 1.0);
      };
    } else {
      MlpNoise mn(rng);
      sem->nodes[i].sample_noise = [mn](RngStream& r) {
        return mn.transform(r.normal());
      };
    }
  }

  Dataset data;
  data.specs = sem->specs_;
  data.x = sem->sample(spec.n, rng);

  GroundTruthPackage gt;
  gt.graph = g;
  gt.sem = sem;

  // intervention cases: effects taken from the end of the causal order, the
  // treatment found by a random ancestor walk of at most three edges
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double m = 0.0, m2 = 0.0;
    for (std::size_t s = 0; s < spec.n; ++s) {
      double v = data.x.at(s, i);
      double delta = v - m;
      m += delta / (double)(s + 1);
      m2 += delta * (v - m);
    }
    mean[i] = m;
    sd[i] = std::sqrt(m2 / (double)(spec.n - 1));
  }
  std::size_t n_cases = std::min<std::size_t>(5, d);
  for (std::size_t k = 0; k < n_cases && k < order.size(); ++k) {
    std::size_t effect = order[order.size() - 1 - k];
    std::size_t node = effect;
    std::size_t steps = 1 + rng.uniform_index(3);
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<std::size_t> parents;
      for (std::size_t j = 0; j < d; ++j)
        if (g.edge(j, node)) parents.push_back(j);
      if (parents.empty()) break;
      node = parents[rng.uniform_index(parents.size())];
    }
    if (node == effect) continue;
    InterventionCase c;
    c.treatment = node;
    c.value = mean[node] + sd[node];
    c.reference = mean[node] - sd[node];
    c.targets = {effect};
    gt.cases.push_back(c);
  }
  fill_ground_truth_ate(gt, 2000, rng);
  return {std::move(data), std::move(gt)};
}

// ---------------------------------------------------------------------------
// CSuite

namespace {

ClosureSem::Node gaussian_root(double sigma = 1.0) {
  ClosureSem::Node n;
  n.mean = [](const std::vector<double>&) { return 0.0; };
  n.sample_noise = [sigma](RngStream& r) { return sigma * r.normal(); };
  n.noise_log_density = [sigma](double z) { return gauss_logpdf(z, sigma); };
  return n;
}

ClosureSem::Node continuous_node(
    std::function<double(const std::vector<double>&)> mean, double gauss_sigma,
    bool logistic = false, double scale = 0.2) {
  ClosureSem::Node n;
  n.mean = std::move(mean);
  if (logistic) {
    n.sample_noise = [scale](RngStream& r) { return scale * r.logistic(); };
    n.noise_log_density = [scale](double z) {
      return logistic_logpdf(z, scale);
    };
  } else {
    n.sample_noise = [gauss_sigma](RngStream& r) {
      return gauss_sigma * r.normal();
    };
    n.noise_log_density = [gauss_sigma](double z) {
      return gauss_logpdf(z, gauss_sigma);
    };
  }
  return n;
}

ClosureSem::Node categorical_root(std::vector<double> p) {
  ClosureSem::Node n;
  n.probs = [p](const std::vector<double>&) { return p; };
  return n;
}

// shared 9-node ladder: 1->2, 1->3, 2->4, 3->5, 4->6, 5->7, 6->8, 7->9, 8->9
AdjacencyMatrix backdoor_graph(bool weak_arrows) {
  AdjacencyMatrix g(9);
  g.set_edge(0, 1);
  g.set_edge(0, 2);
  g.set_edge(1, 3);
  g.set_edge(2, 4);
  g.set_edge(3, 5);
  g.set_edge(4, 6);
  g.set_edge(5, 7);
  g.set_edge(6, 8);
  g.set_edge(7, 8);
  if (weak_arrows)
    for (std::size_t j = 0; j < 6; ++j) g.set_edge(j, 8);
  return g;
}

void build_backdoor_ladder(ClosureSem& sem, bool weak_arrows, bool binary_t) {
  auto f = [](double u) { return softplus(u + 1.0) - 1.0; };
  sem.graph = backdoor_graph(weak_arrows);
  for (std::size_t i = 0; i < 9; ++i)
    sem.specs_.push_back(VariableSpec::continuous("x" + std::to_string(i + 1)));
  sem.nodes.resize(9);
  sem.nodes[0] = continuous_node([](const std::vector<double>&) { return 0.0; },
                                 1.0, true, 0.5);
  auto chain = [&](std::size_t child, std::size_t parent) {
    sem.nodes[child] = continuous_node(
        [f, parent](const std::vector<double>& x) { return f(x[parent]); },
        1.0, true, 0.3);
  };
  chain(1, 0);
  chain(2, 0);
  chain(3, 1);
  chain(4, 2);
  chain(5, 3);
  chain(6, 4);
  if (binary_t) {
    sem.specs_[7] = VariableSpec::binary("x8");
    sem.nodes[7].probs = [](const std::vector<double>& x) {
      double p = 1.0 / (1.0 + std::exp(-(1.5 * x[5] - 0.5)));
      return std::vector<double>{1.0 - p, p};
    };
  } else {
    chain(7, 5);
  }
  if (weak_arrows) {
    sem.nodes[8] = continuous_node(
        [](const std::vector<double>& x) {
          double s = std::tanh(x[7]);
          for (std::size_t j = 0; j < 7; ++j) s += 0.3 * std::tanh(x[j]);
          return s;
        },
        1.0, true, 0.2);
  } else {
    sem.nodes[8] = continuous_node(
        [](const std::vector<double>& x) {
          return std::tanh(x[7]) + 0.5 * std::tanh(x[6]);
        },
        1.0, true, 0.2);
  }
}

}  // namespace

const std::vector<std::string>& csuite_names() {
  static const std::vector<std::string> names{
      "lingauss",          "linexp",
      "nonlingauss",       "nonlin_simpson",
      "symprod_simpson",   "large_backdoor",
      "weak_arrows",       "cat_to_cts",
      "cts_to_cat",        "mixed_simpson",
      "large_backdoor_binary_t", "weak_arrows_binary_t",
      "mixed_confounding"};
  return names;
}

std::pair<Dataset, GroundTruthPackage> generate_csuite(const std::string& name,
                                                       RngStream& rng) {
  auto sem = std::make_shared<ClosureSem>();
  std::vector<InterventionCase> cases;
  auto two_node = [&](VariableSpec s1, VariableSpec s2) {
    sem->graph = AdjacencyMatrix(2);
    sem->graph.set_edge(0, 1);
    sem->specs_ = {std::move(s1), std::move(s2)};
    sem->nodes.resize(2);
  };
  auto simple_case = [&](std::size_t treat, double a, double b,
                         std::size_t target) {
    InterventionCase c;
    c.treatment = treat;
    c.value = a;
    c.reference = b;
    c.targets = {target};
    cases.push_back(c);
  };

  if (name == "lingauss") {
    two_node(VariableSpec::continuous("x1"), VariableSpec::continuous("x2"));
    sem->nodes[0] = gaussian_root();
    sem->nodes[1] = continuous_node(
        [](const std::vector<double>& x) { return 0.5 * x[0]; },
        std::sqrt(3.0) / 2.0);
    simple_case(0, 1.0, 0.0, 1);
  } else if (name == "linexp") {
    two_node(VariableSpec::continuous("x1"), VariableSpec::continuous("x2"));
    sem->nodes[0] = gaussian_root();
    sem->nodes[1].mean = [](const std::vector<double>& x) {
      return 0.5 * x[0];
    };
    sem->nodes[1].sample_noise = [](RngStream& r) {
      return std::sqrt(3.0) / 2.0 * (r.exponential() - 1.0);
    };
    simple_case(0, 1.0, 0.0, 1);
  } else if (name == "nonlingauss") {
    two_node(VariableSpec::continuous("x1"), VariableSpec::continuous("x2"));
    double alpha =
        std::sqrt(1.0 - 6.0 * (1.0 / std::sqrt(5.0) - 1.0 / 3.0));
    sem->nodes[0] = gaussian_root();
    sem->nodes[1] = continuous_node(
        [](const std::vector<double>& x) {
          return std::sqrt(6.0) * std::exp(-x[0] * x[0]);
        },
        alpha);
    simple_case(0, 1.0, 0.0, 1);
  } else if (name == "nonlin_simpson") {
    // x3 -> x1, x3 -> x2, x1 -> x2, x2 -> x4
    sem->graph = AdjacencyMatrix(4);
    sem->graph.set_edge(2, 0);
    sem->graph.set_edge(2, 1);
    sem->graph.set_edge(0, 1);
    sem->graph.set_edge(1, 3);
    for (int i = 1; i <= 4; ++i)
      sem->specs_.push_back(VariableSpec::continuous("x" + std::to_string(i)));
    sem->nodes.resize(4);
    sem->nodes[2] = gaussian_root();
    sem->nodes[0] = continuous_node(
        [](const std::vector<double>& x) { return softplus(1.0 - x[2]); },
        1.0, true, 0.2);
    sem->nodes[1] = continuous_node(
        [](const std::vector<double>& x) {
          return 0.5 * x[0] + 2.0 * std::tanh(2.0 * x[2]);
        },
        1.0, true, 0.2);
    sem->nodes[3] = continuous_node(
        [](const std::vector<double>& x) { return 2.0 * std::tanh(x[1] / 2.0); },
        1.0, true, 0.2);
    simple_case(0, 2.0, 0.0, 1);
    cases.back().has_condition = true;
    cases.back().condition_node = 2;
    cases.back().condition_value = 0.5;
  } else if (name == "symprod_simpson") {
    // x3 -> x1, x3 -> x2, x1 -> x2, x3 -> x4
    sem->graph = AdjacencyMatrix(4);
    sem->graph.set_edge(2, 0);
    sem->graph.set_edge(2, 1);
    sem->graph.set_edge(0, 1);
    sem->graph.set_edge(2, 3);
    for (int i = 1; i <= 4; ++i)
      sem->specs_.push_back(VariableSpec::continuous("x" + std::to_string(i)));
    sem->nodes.resize(4);
    sem->nodes[2] = gaussian_root();
    sem->nodes[0] = continuous_node(
        [](const std::vector<double>& x) { return softplus(x[2]) + 0.5; },
        1.0, true, 0.2);
    sem->nodes[1] = continuous_node(
        [](const std::vector<double>& x) {
          return 0.5 * x[0] * std::tanh(2.0 * x[2]);
        },
        1.0, true, 0.2);
    sem->nodes[3] = continuous_node(
        [](const std::vector<double>& x) { return std::tanh(1.5 * x[2]); },
        1.0, true, 0.2);
    simple_case(0, 2.0, 0.5, 1);
    cases.back().has_condition = true;
    cases.back().condition_node = 3;
    cases.back().condition_value = 0.5;
  } else if (name == "large_backdoor" || name == "large_backdoor_binary_t" ||
             name == "weak_arrows" || name == "weak_arrows_binary_t") {
    bool weak = name.rfind("weak", 0) == 0;
    bool bin = name.size() > 11 && name.substr(name.size() - 8) == "binary_t";
    build_backdoor_ladder(*sem, weak, bin);
    simple_case(7, bin ? 1.0 : 2.0, bin ? 0.0 : -2.0, 8);
    cases.back().has_condition = true;
    cases.back().condition_node = 6;
    cases.back().condition_value = 0.5;
  } else if (name == "cat_to_cts") {
    two_node(VariableSpec::categorical("x1", 3),
             VariableSpec::continuous("x2"));
    sem->nodes[0] = categorical_root({0.25, 0.25, 0.5});
    sem->nodes[1].mean = [](const std::vector<double>& x) { return x[0]; };
    sem->nodes[1].sample_noise = [](RngStream& r) {
      return 1.6 * (softplus(r.normal()) - 1.0);
    };
    simple_case(0, 1.0, 0.0, 1);
  } else if (name == "cts_to_cat") {
    two_node(VariableSpec::continuous("x1"),
             VariableSpec::categorical("x2", 3));
    double b = std::sqrt(3.0);
    sem->nodes[0].mean = [](const std::vector<double>&) { return 0.0; };
    sem->nodes[0].sample_noise = [b](RngStream& r) {
      return r.uniform(-b, b);
    };
    sem->nodes[1].probs = [b](const std::vector<double>& x) {
      if (x[0] < -b / 3.0)
        return std::vector<double>{6.0 / 13, 6.0 / 13, 1.0 / 13};
      if (x[0] < b / 3.0) return std::vector<double>{0.125, 0.75, 0.125};
      return std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3};
    };
    simple_case(1, 1.0, 0.0, 0);  // treating the effect: true ATE is zero
  } else if (name == "mixed_simpson") {
    sem->graph = AdjacencyMatrix(4);
    sem->graph.set_edge(2, 0);
    sem->graph.set_edge(2, 1);
    sem->graph.set_edge(0, 1);
    sem->graph.set_edge(1, 3);
    sem->specs_ = {VariableSpec::binary("x1"), VariableSpec::continuous("x2"),
                   VariableSpec::categorical("x3", 3),
                   VariableSpec::continuous("x4")};
    sem->nodes.resize(4);
    sem->nodes[2] = categorical_root({0.3, 0.4, 0.3});
    sem->nodes[0].probs = [](const std::vector<double>& x) {
      static const double p1[3] = {0.7, 0.5, 0.2};
      double p = p1[(int)x[2]];
      return std::vector<double>{1.0 - p, p};
    };
    sem->nodes[1] = continuous_node(
        [](const std::vector<double>& x) {
          static const double mu[3] = {-1.5, 0.0, 1.5};
          return 0.5 * x[0] + mu[(int)x[2]];
        },
        1.0, true, 0.2);
    sem->nodes[3] = continuous_node(
        [](const std::vector<double>& x) { return std::tanh(x[1]); }, 1.0,
        true, 0.2);
    simple_case(0, 1.0, 0.0, 1);
    cases.back().has_condition = true;
    cases.back().condition_node = 2;
    cases.back().condition_value = 1.0;
  } else if (name == "mixed_confounding") {
    sem->graph = AdjacencyMatrix(12);
    // x1 <- x3..x7; x2 <- x1, x3, x4, x5, x8, x9; x10 <- x1; x11 <- x2;
    // x12 <- x1, x2  (1-based names, 0-based indices)
    for (std::size_t p : {2, 3, 4, 5, 6}) sem->graph.set_edge(p, 0);
    for (std::size_t p : {0, 2, 3, 4, 7, 8}) sem->graph.set_edge(p, 1);
    sem->graph.set_edge(0, 9);
    sem->graph.set_edge(1, 10);
    sem->graph.set_edge(0, 11);
    sem->graph.set_edge(1, 11);
    sem->specs_ = {VariableSpec::binary("x1"),
                   VariableSpec::continuous("x2"),
                   VariableSpec::categorical("x3", 3),
                   VariableSpec::continuous("x4"),
                   VariableSpec::binary("x5"),
                   VariableSpec::categorical("x6", 3),
                   VariableSpec::continuous("x7"),
                   VariableSpec::categorical("x8", 3),
                   VariableSpec::continuous("x9"),
                   VariableSpec::continuous("x10"),
                   VariableSpec::continuous("x11"),
                   VariableSpec::continuous("x12")};
    sem->nodes.resize(12);
    sem->nodes[2] = categorical_root({1.0 / 3, 1.0 / 3, 1.0 / 3});
    sem->nodes[3] = continuous_node(
        [](const std::vector<double>&) { return 0.0; }, 1.0, true, 0.5);
    sem->nodes[4] = categorical_root({0.5, 0.5});
    sem->nodes[5] = categorical_root({0.2, 0.5, 0.3});
    sem->nodes[6] = gaussian_root();
    sem->nodes[7] = categorical_root({0.25, 0.25, 0.5});
    sem->nodes[8] = continuous_node(
        [](const std::vector<double>&) { return 0.0; }, 1.0, true, 0.5);
    sem->nodes[0].probs = [](const std::vector<double>& x) {
      static const double mu3[3] = {-1.0, 0.0, 1.0};
      static const double mu6[3] = {0.5, -0.5, 0.0};
      double logit = 0.8 * mu3[(int)x[2]] + 0.5 * x[3] - 0.4 * x[4] +
                     0.6 * mu6[(int)x[5]] + 0.3 * x[6];
      double p = 1.0 / (1.0 + std::exp(-logit));
      return std::vector<double>{1.0 - p, p};
    };
    sem->nodes[1] = continuous_node(
        [](const std::vector<double>& x) {
          static const double mu3[3] = {-0.5, 0.0, 0.5};
          static const double mu8[3] = {0.4, -0.4, 0.0};
          return std::tanh(x[0] + mu3[(int)x[2]] + 0.3 * x[3] + 0.2 * x[4] +
                           mu8[(int)x[7]] + 0.3 * x[8]);
        },
        1.0, true, 0.3);
    sem->nodes[9] = continuous_node(
        [](const std::vector<double>& x) { return std::tanh(x[0]); }, 1.0,
        true, 0.3);
    sem->nodes[10] = continuous_node(
        [](const std::vector<double>& x) { return 0.5 * x[1]; }, 1.0, true,
        0.3);
    sem->nodes[11] = continuous_node(
        [](const std::vector<double>& x) { return 0.4 * x[0] + 0.4 * x[1]; },
        1.0, true, 0.3);
    simple_case(0, 1.0, 0.0, 1);
  } else {
    throw std::invalid_argument("unknown dataset name: " + name);
  }

  Dataset data;
  data.specs = sem->specs_;
  data.x = sem->sample(2000, rng);

  GroundTruthPackage gt;
  gt.graph = sem->graph;
  gt.sem = sem;
  gt.cases = std::move(cases);
  fill_ground_truth_ate(gt, 2000, rng);
  return {std::move(data), std::move(gt)};
}

// ---------------------------------------------------------------------------
// HMC

namespace {

struct HmcTarget {
  const ClosureSem* sem;
  std::vector<Intervention> dos;
  std::vector<Intervention> condition;
  std::vector<std::size_t> free_nodes;  // latent = exogenous noise of these
  std::vector<std::size_t> order;

  explicit HmcTarget(const ClosureSem& s, std::vector<Intervention> d,
                     std::vector<Intervention> c)
      : sem(&s), dos(std::move(d)), condition(std::move(c)) {
    const std::size_t dim = s.specs_.size();
    std::vector<bool> fixed(dim, false);
    for (const auto& v : dos) fixed[v.node] = true;
    for (const auto& v : condition) {
      if (s.specs_[v.node].is_discrete())
        throw std::invalid_argument("hmc: conditioning must be continuous");
      fixed[v.node] = true;
    }
    for (std::size_t i = 0; i < dim; ++i)
      if (!fixed[i]) {
        if (s.specs_[i].is_discrete())
          throw std::invalid_argument("hmc: free nodes must be continuous");
        if (!s.nodes[i].noise_log_density)
          throw std::invalid_argument("hmc: noise density unavailable");
        free_nodes.push_back(i);
      }
    order = graphs::topological_order(s.graph);
  }

  // log p(z_free) + log p(z_C = c - f_C(pa)); fills row with the full x
  double log_density(const std::vector<double>& z, std::vector<double>& row) {
    std::size_t dim = sem->specs_.size();
    row.assign(dim, 0.0);
    double lp = 0.0;
    for (std::size_t i : order) {
      const Intervention* iv = nullptr;
      for (const auto& v : dos)
        if (v.node == i) iv = &v;
      if (iv) {
        row[i] = iv->value;
        continue;
      }
      const Intervention* cv = nullptr;
      for (const auto& v : condition)
        if (v.node == i) cv = &v;
      double mean = sem->nodes[i].mean(row);
      if (cv) {
        row[i] = cv->value;
        lp += sem->nodes[i].noise_log_density(cv->value - mean);
      } else {
        std::size_t k =
            std::find(free_nodes.begin(), free_nodes.end(), i) -
            free_nodes.begin();
        row[i] = mean + z[k];
        lp += sem->nodes[i].noise_log_density(z[k]);
      }
    }
    return lp;
  }

  void grad(const std::vector<double>& z, std::vector<double>& g,
            std::vector<double>& scratch) {
    const double h = 1e-5;
    std::vector<double> zp = z;
    g.resize(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
      zp[k] = z[k] + h;
      double fp = log_density(zp, scratch);
      zp[k] = z[k] - h;
      double fm = log_density(zp, scratch);
      zp[k] = z[k];
      g[k] = (fp - fm) / (2.0 * h);
    }
  }
};

}  // namespace

Tensor hmc_conditional_samples(const ClosureSem& sem,
                               const std::vector<Intervention>& dos,
                               const std::vector<Intervention>& condition,
                               std::size_t n_samples, RngStream& rng,
                               const HmcConfig& cfg) {
  HmcTarget target(sem, dos, condition);
  std::size_t dim = sem.specs_.size(), k = target.free_nodes.size();
  if (k == 0) throw std::invalid_argument("hmc: no free nodes");

  double step = cfg.init_step;
  for (std::size_t attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    RngStream run = rng.child(1000 + attempt);
    std::vector<double> z(k, 0.0), row(dim), g(k), scratch(dim);
    for (std::size_t i = 0; i < k; ++i) z[i] = 0.1 * run.normal();
    double lp = target.log_density(z, row);
    target.grad(z, g, scratch);

    Tensor out = Tensor::zeros({n_samples, dim});
    std::size_t total = cfg.burn_in + cfg.thin * n_samples;
    std::size_t divergent = 0, accepted = 0, window_acc = 0, window_n = 0;
    std::size_t collected = 0;
    std::vector<double> zp(k), gp(k), mom(k);
    for (std::size_t it = 0; it < total; ++it) {
      // jittered step breaks leapfrog periodicity of near-Gaussian targets
      double step_it = step * run.uniform(0.8, 1.2);
      for (std::size_t i = 0; i < k; ++i) mom[i] = run.normal();
      double h0 = -lp;
      for (std::size_t i = 0; i < k; ++i) h0 += 0.5 * mom[i] * mom[i];
      zp = z;
      gp = g;
      double lpp = lp;
      bool diverged = false;
      for (std::size_t l = 0; l < cfg.leapfrog_steps; ++l) {
        for (std::size_t i = 0; i < k; ++i) mom[i] += 0.5 * step_it * gp[i];
        for (std::size_t i = 0; i < k; ++i) zp[i] += step_it * mom[i];
        lpp = target.log_density(zp, scratch);
        if (!std::isfinite(lpp)) {
          diverged = true;
          break;
        }
        target.grad(zp, gp, scratch);
        for (std::size_t i = 0; i < k; ++i) mom[i] += 0.5 * step_it * gp[i];
      }
      double h1 = -lpp;
      for (std::size_t i = 0; i < k; ++i) h1 += 0.5 * mom[i] * mom[i];
      if (diverged || !std::isfinite(h1) || h1 - h0 > 50.0) {
        diverged = true;
        ++divergent;
      }
      bool accept = !diverged && run.uniform() < std::exp(h0 - h1);
      if (accept) {
        z = zp;
        g = gp;
        lp = lpp;
        ++accepted;
      }
      ++window_n;
      window_acc += accept ? 1 : 0;
      // step-size tuning during burn-in
      if (it < cfg.burn_in && window_n == 200) {
        double rate = (double)window_acc / (double)window_n;
        if (rate < cfg.target_accept_lo) step *= 0.7;
        if (rate > cfg.target_accept_hi) step *= 1.3;
        window_acc = window_n = 0;
      }
      if (it >= cfg.burn_in && (it - cfg.burn_in + 1) % cfg.thin == 0) {
        target.log_density(z, row);
        for (std::size_t i = 0; i < dim; ++i) out.at(collected, i) = row[i];
        ++collected;
      }
    }
    if ((double)divergent / (double)total <= 0.05 && collected == n_samples)
      return out;
    step *= 0.5;  // too many divergences: halve and rerun
  }
  throw std::runtime_error("hmc: failed after step-size retries");
}

// ---------------------------------------------------------------------------
// MCAR masking

void apply_mcar_mask(Dataset& data, double rate, RngStream& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("mcar rate must be in [0, 1)");
  std::size_t n = data.n(), d = data.d();
  data.missing.assign(n * d, 0);
  if (rate == 0.0) return;
  for (std::size_t s = 0; s < n; ++s) {
    for (;;) {
      std::size_t masked = 0;
      for (std::size_t i = 0; i < d; ++i) {
        std::uint8_t m = rng.uniform() < rate ? 1 : 0;
        data.missing[s * d + i] = m;
        masked += m;
      }
      if (masked < d) break;  // never hide a full row
    }
  }
}

// ---------------------------------------------------------------------------
// Dataset directory I/O

void save_dataset(const std::string& dir, const Dataset& data,
                  const AdjacencyMatrix* graph,
                  const std::vector<InterventionCase>* cases) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::size_t n = data.n(), d = data.d();

  std::ofstream csv(dir + "/data.csv");
  for (std::size_t i = 0; i < d; ++i)
    csv << (i ? "," : "") << data.specs[i].name;
  csv << "\n";
  char buf[32];
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < d; ++i) {
      if (i) csv << ",";
      if (!data.missing.empty() && data.missing[s * d + i]) continue;
      if (data.specs[i].is_discrete()) {
        csv << (long long)std::llround(data.x.at(s, i));
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", data.x.at(s, i));
        csv << buf;
      }
    }
    csv << "\n";
  }

  json meta = json::array();
  for (const auto& sp : data.specs) {
    json v;
    v["name"] = sp.name;
    v["type"] = sp.kind == sem::VarKind::Continuous ? "continuous"
                : sp.kind == sem::VarKind::Binary   ? "binary"
                                                    : "categorical";
    v["cardinality"] = sp.cardinality;
    meta.push_back(v);
  }
  std::ofstream(dir + "/metadata.json") << meta.dump(2) << "\n";

  if (graph) {
    std::ofstream gf(dir + "/graph.csv");
    for (std::size_t j = 0; j < graph->d; ++j) {
      for (std::size_t i = 0; i < graph->d; ++i)
        gf << (i ? "," : "") << (graph->edge(j, i) ? 1 : 0);
      gf << "\n";
    }
  }

  if (cases) {
    json arr = json::array();
    for (const auto& c : *cases) {
      json v;
      v["treatment"] = c.treatment;
      v["value"] = c.value;
      v["reference"] = c.reference;
      v["targets"] = c.targets;
      v["ate"] = c.ate;
      v["ate_stderr"] = c.ate_stderr;
      if (c.has_condition) {
        v["condition_node"] = c.condition_node;
        v["condition_value"] = c.condition_value;
      }
      arr.push_back(v);
    }
    std::ofstream(dir + "/interventions.json") << arr.dump(2) << "\n";
  }
}

DatasetPackage load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetPackage out;

  std::ifstream mf(dir + "/metadata.json");
  if (!mf) throw std::runtime_error("cannot open " + dir + "/metadata.json");
  json meta = json::parse(mf);
  for (const auto& v : meta) {
    std::string type = v.at("type");
    std::string name = v.at("name");
    if (type == "continuous")
      out.data.specs.push_back(VariableSpec::continuous(name));
    else if (type == "binary")
      out.data.specs.push_back(VariableSpec::binary(name));
    else if (type == "categorical")
      out.data.specs.push_back(
          VariableSpec::categorical(name, v.at("cardinality")));
    else
      throw std::runtime_error("unknown variable type: " + type);
  }
  std::size_t d = out.data.specs.size();

  std::ifstream csv(dir + "/data.csv");
  if (!csv) throw std::runtime_error("cannot open " + dir + "/data.csv");
  std::string line;
  std::getline(csv, line);  // header
  std::vector<double> values;
  std::vector<std::uint8_t> missing;
  bool any_missing = false;
  std::size_t n = 0;
  while (std::getline(csv, line)) {
    if (line.empty() && csv.eof()) break;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (col < d) {
      if (!std::getline(ss, cell, ',')) cell.clear();
      if (cell.empty()) {
        values.push_back(0.0);
        missing.push_back(1);
        any_missing = true;
      } else {
        values.push_back(std::stod(cell));
        missing.push_back(0);
      }
      ++col;
    }
    ++n;
  }
  out.data.x = Tensor::zeros({n, d});
  std::copy(values.begin(), values.end(), out.data.x.data.begin());
  if (any_missing) out.data.missing = std::move(missing);

  if (fs::exists(dir + "/graph.csv")) {
    std::ifstream gf(dir + "/graph.csv");
    out.graph = AdjacencyMatrix(d);
    for (std::size_t j = 0; j < d; ++j) {
      std::getline(gf, line);
      std::stringstream ss(line);
      std::string cell;
      for (std::size_t i = 0; i < d; ++i) {
        std::getline(ss, cell, ',');
        if (std::stoi(cell)) out.graph.set_edge(j, i);
      }
    }
    out.has_graph = true;
  }

  if (fs::exists(dir + "/interventions.json")) {
    std::ifstream jf(dir + "/interventions.json");
    json arr = json::parse(jf);
    for (const auto& v : arr) {
      InterventionCase c;
      c.treatment = v.at("treatment");
      c.value = v.at("value");
      c.reference = v.at("reference");
      c.targets = v.at("targets").get<std::vector<std::size_t>>();
      c.ate = v.at("ate").get<std::vector<double>>();
      c.ate_stderr = v.at("ate_stderr").get<std::vector<double>>();
      if (v.contains("condition_node")) {
        c.has_condition = true;
        c.condition_node = v.at("condition_node");
        c.condition_value = v.at("condition_value");
      }
      out.cases.push_back(c);
    }
  }
  return out;
}

}  // namespace deci::datagen
