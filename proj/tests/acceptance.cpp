// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any requested criterion fails.
//
// Usage: acceptance [criterion-number ...]     (default: all, 1-13)
//
// Trained checkpoints are cached under DECI_ACCEPTANCE_CACHE (default
// "acceptance_cache" in the working directory) so reruns skip the expensive
// model fits. Criterion 13 invokes the command-line binary, located via
// DECI_CLI (default "./deci").

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deci/datagen.hpp"
#include "deci/inference.hpp"
#include "deci/metrics.hpp"
#include "deci/training.hpp"
#include "gradcheck.hpp"

namespace fs = std::filesystem;
using namespace deci;
using deci::graphs::AdjacencyMatrix;
using deci::graphs::GraphPrior;
using deci::graphs::VariationalGraphPosterior;
using deci::inference::CausalQuery;
using deci::num::MlpBlock;
using deci::num::RngStream;
using deci::num::RqSpline;
using deci::num::SplineParamVars;
using deci::num::Tape;
using deci::num::Tensor;
using deci::num::Var;
using deci::sem::DeciModel;
using deci::sem::NoiseKind;
using deci::sem::VariableSpec;
using deci::testing::gradcheck;
using deci::training::AugLagState;
using deci::training::TrainConfig;

namespace {

// ---------- shared plumbing ----------

fs::path cache_dir() {
  const char* env = std::getenv("DECI_ACCEPTANCE_CACHE");
  fs::path p = env ? env : "acceptance_cache";
  fs::create_directories(p);
  return p;
}

std::string cli_path() {
  const char* env = std::getenv("DECI_CLI");
  return env ? env : "./deci";
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::pair<datagen::Dataset, datagen::GroundTruthPackage> make_csuite(
    const std::string& name) {
  const auto& names = datagen::csuite_names();
  std::size_t idx = 0;
  for (; idx < names.size(); ++idx)
    if (names[idx] == name) break;
  RngStream rng(9000 + idx);
  return datagen::generate_csuite(name, rng);
}

struct Trained {
  DeciModel model;
  VariationalGraphPosterior posterior;
};

Trained train_cached(const std::string& tag, const datagen::Dataset& data,
                     const TrainConfig& cfg) {
  fs::path p = cache_dir() / (tag + ".ckpt");
  Trained tr;
  if (fs::exists(p)) {
    sem::load_checkpoint(p.string(), tr.model, tr.posterior);
    return tr;
  }
  std::fprintf(stderr, "  [acceptance] training %s ...\n", tag.c_str());
  auto t0 = std::chrono::steady_clock::now();
  training::TrainResult res = training::train(data.specs, data.x, data.missing, cfg);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "  [acceptance] trained %s in %.0fs (dag_converged=%d)\n",
               tag.c_str(), secs, (int)res.diag.dag_converged);
  sem::save_checkpoint(p.string(), res.model, res.posterior);
  tr.model = std::move(res.model);
  tr.posterior = res.posterior;
  return tr;
}

TrainConfig spline_cfg(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.noise = NoiseKind::Spline;
  cfg.seed = seed;
  return cfg;
}

// RMSE of estimated vs ground-truth average effects over the dataset's
// unconditional test cases.
double ate_rmse_for(const Trained& tr, const datagen::GroundTruthPackage& gt,
                    std::uint64_t seed) {
  std::vector<double> est, tru;
  for (const auto& c : gt.cases) {
    if (c.has_condition) continue;
    CausalQuery q;
    q.treatment = {{c.treatment, c.value}};
    q.reference = {{c.treatment, c.reference}};
    q.targets = c.targets;
    RngStream rng(seed);
    auto res = inference::estimate_ate(tr.model, tr.posterior, q, 1000, 2, rng);
    for (std::size_t i = 0; i < c.targets.size(); ++i) {
      est.push_back(res.targets[i].value[0]);
      tru.push_back(c.ate[i]);
    }
  }
  return metrics::ate_rmse(est, tru);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::string sa = read_file(a), sb = read_file(b);
  return !sa.empty() && sa == sb;
}

int run_cmd(const std::string& cmd) {
  int rc = std::system((cmd + " > /dev/null").c_str());
  return rc < 0 ? rc : WEXITSTATUS(rc);
}

// ---------- criterion 1: acyclicity penalty ----------

bool crit_dag_penalty(std::string& note) {
  auto t0 = std::chrono::steady_clock::now();
  RngStream rng(101);
  bool ok = true;
  for (int i = 0; i < 1000 && ok; ++i) {
    std::size_t d = 2 + rng.uniform_index(15);
    std::size_t max_e = d * (d - 1) / 2;
    std::size_t e = rng.uniform_index(max_e + 1);
    AdjacencyMatrix g = datagen::sample_er_graph(d, e, rng);
    if (std::fabs(graphs::dag_penalty(g.to_tensor())) >= 1e-10) ok = false;
  }
  int cyclic_made = 0;
  for (int i = 0; i < 200 && cyclic_made < 100 && ok; ++i) {
    std::size_t d = 2 + rng.uniform_index(15);
    std::size_t max_e = d * (d - 1) / 2;
    AdjacencyMatrix g =
        datagen::sample_er_graph(d, 1 + rng.uniform_index(max_e), rng);
    // close a cycle through a random existing edge
    bool closed = false;
    for (std::size_t u = 0; u < d && !closed; ++u)
      for (std::size_t v = 0; v < d && !closed; ++v)
        if (g.edge(u, v)) {
          g.set_edge(v, u);
          closed = true;
        }
    if (!closed) continue;
    ++cyclic_made;
    if (graphs::dag_penalty(g.to_tensor()) <= 1e-8) ok = false;
  }
  if (cyclic_made < 100) ok = false;

  Tensor two = Tensor::zeros({2, 2});
  two.at(0, 1) = 1.0;
  two.at(1, 0) = 1.0;
  double want = 2.0 * std::cosh(1.0) - 2.0;
  if (std::fabs(graphs::dag_penalty(two) - want) >= 1e-9) ok = false;

  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (secs >= 30.0) ok = false;
  note = "1000 DAGs at zero, 100 cyclic graphs positive, 2-cycle closed form, " +
         std::to_string(secs).substr(0, 4) + "s";
  return ok;
}

// ---------- criterion 2: gradient checks ----------

bool crit_gradients(std::string& note) {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;

  // MLP blocks with layer norm and residual paths
  for (int inst = 0; inst < 20; ++inst) {
    RngStream rng(200 + inst);
    std::size_t in = 2 + rng.uniform_index(3), hid = 4 + rng.uniform_index(5),
                out = 1 + rng.uniform_index(3), n = 2 + rng.uniform_index(3);
    MlpBlock mlp(in, hid, out);
    mlp.init(rng);
    Tensor x = Tensor::zeros({n, in});
    for (double& v : x.data) v = rng.normal();

    std::vector<double> flat;
    for (Tensor* p : mlp.params())
      flat.insert(flat.end(), p->data.begin(), p->data.end());
    flat.insert(flat.end(), x.data.begin(), x.data.end());

    Tape t;
    auto vars = mlp.register_params(t);
    Var xin = t.input(x);
    Var loss = sum(t, mlp.apply(t, vars, xin));
    t.backward(loss);
    std::vector<double> analytic;
    std::vector<Tensor> grads;
    mlp.read_grads(t, vars, grads);
    for (const Tensor& g : grads)
      analytic.insert(analytic.end(), g.data.begin(), g.data.end());
    const Tensor& gx = t.grad(xin);
    analytic.insert(analytic.end(), gx.data.begin(), gx.data.end());

    MlpBlock probe(in, hid, out);
    auto eval = [&](const std::vector<double>& f) {
      std::size_t off = 0;
      for (Tensor* p : probe.params()) {
        p->data.assign(f.begin() + off, f.begin() + off + p->data.size());
        off += p->data.size();
      }
      Tensor xx = x;
      for (double& v : xx.data) v = f[off++];
      Tape tt;
      auto vv = probe.register_params(tt);
      Var o = sum(tt, probe.apply(tt, vv, tt.input(xx)));
      return tt.value(o).data[0];
    };
    // give probe the right buffer shapes before assigning
    {
      RngStream r2(1);
      probe.init(r2);
    }
    worst = std::max(worst, gradcheck(eval, flat, analytic));
  }

  // spline inverse with log-determinant, gradients in the raw parameters
  for (int inst = 0; inst < 20; ++inst) {
    RngStream rng(300 + inst);
    std::vector<double> wr(8), hr(8), dr(7);
    for (double& v : wr) v = 0.3 * rng.normal();
    for (double& v : hr) v = 0.3 * rng.normal();
    for (double& v : dr) v = 0.3 * rng.normal();
    Tensor z = Tensor::zeros({16});
    for (double& v : z.data) v = rng.uniform(-6.0, 6.0);

    auto eval = [&](const std::vector<double>& f,
                    std::vector<double>* grad) {
      Tape t;
      SplineParamVars p;
      p.widths_raw = t.input(Tensor({8}, {f.begin(), f.begin() + 8}));
      p.heights_raw = t.input(Tensor({8}, {f.begin() + 8, f.begin() + 16}));
      p.derivs_raw = t.input(Tensor({7}, {f.begin() + 16, f.begin() + 23}));
      auto [x, ld] = rq_spline_inverse(t, t.input(z), p, 8);
      Var loss = add(t, sum(t, mul(t, x, x)), sum(t, ld));
      double out = t.value(loss).data[0];
      if (grad) {
        t.backward(loss);
        grad->clear();
        for (Var v : {p.widths_raw, p.heights_raw, p.derivs_raw}) {
          const Tensor& g = t.grad(v);
          grad->insert(grad->end(), g.data.begin(), g.data.end());
        }
      }
      return out;
    };
    std::vector<double> flat;
    flat.insert(flat.end(), wr.begin(), wr.end());
    flat.insert(flat.end(), hr.begin(), hr.end());
    flat.insert(flat.end(), dr.begin(), dr.end());
    std::vector<double> analytic;
    eval(flat, &analytic);
    worst = std::max(
        worst,
        gradcheck([&](const std::vector<double>& f) { return eval(f, nullptr); },
                  flat, analytic));
  }

  // acyclicity penalty
  for (int inst = 0; inst < 20; ++inst) {
    RngStream rng(400 + inst);
    std::size_t d = 2 + rng.uniform_index(5);
    Tensor w = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (i != j) w.at(i, j) = rng.uniform();
    Tape t;
    Var wv = t.input(w);
    Var h = graphs::dag_penalty(t, wv);
    t.backward(h);
    const Tensor& g = t.grad(wv);
    std::vector<double> analytic(g.data.begin(), g.data.end());
    auto eval = [&](const std::vector<double>& f) {
      Tensor ww({d, d}, f);
      return graphs::dag_penalty(ww);
    };
    std::vector<double> flat(w.data.begin(), w.data.end());
    worst = std::max(worst, gradcheck(eval, flat, analytic));
  }

  // SEM log-likelihood in all model parameters, both noise families
  for (int inst = 0; inst < 20; ++inst) {
    RngStream rng(500 + inst);
    DeciModel m;
    m.specs = {VariableSpec::continuous("a"),
               inst % 3 == 0 ? VariableSpec::categorical("b", 3)
                             : VariableSpec::continuous("b")};
    m.noise_kind = inst % 2 ? NoiseKind::Spline : NoiseKind::Gaussian;
    m.hidden_dim = 8;
    m.latent_dim = 6;
    m.embed_dim = 3;
    m.init(rng);
    for (double& v : m.zeta.w3.data) v = 0.3 * rng.normal();
    Tensor x = Tensor::zeros({3, 2});
    for (std::size_t s = 0; s < 3; ++s) {
      x.at(s, 0) = rng.normal();
      x.at(s, 1) = inst % 3 == 0 ? (double)(s % 3) : rng.normal();
    }
    AdjacencyMatrix g(2);
    g.set_edge(0, 1);

    auto params = m.params();
    std::vector<double> flat;
    for (Tensor* p : params)
      flat.insert(flat.end(), p->data.begin(), p->data.end());
    Tape t;
    auto vars = m.register_params(t);
    Var ll = m.log_likelihood(t, vars, x, t.constant(g.to_tensor()));
    t.backward(ll);
    std::vector<Tensor> grads;
    m.read_grads(t, vars, grads);
    std::vector<double> analytic;
    for (const Tensor& gt : grads)
      analytic.insert(analytic.end(), gt.data.begin(), gt.data.end());
    auto eval = [&](const std::vector<double>& f) {
      std::size_t off = 0;
      for (Tensor* p : params)
        for (double& v : p->data) v = f[off++];
      return m.log_likelihood(x, g);
    };
    worst = std::max(worst, gradcheck(eval, flat, analytic));
  }

  // assembled evidence bound: model parameters through a fixed graph draw,
  // plus the exact entropy and prior terms in the posterior parameters
  for (int inst = 0; inst < 20; ++inst) {
    RngStream rng(600 + inst);
    DeciModel m;
    m.specs = {VariableSpec::continuous("a"), VariableSpec::continuous("b")};
    m.noise_kind = inst % 2 ? NoiseKind::Spline : NoiseKind::Gaussian;
    m.hidden_dim = 8;
    m.latent_dim = 6;
    m.embed_dim = 3;
    m.init(rng);
    for (double& v : m.zeta.w3.data) v = 0.3 * rng.normal();
    Tensor batch = Tensor::zeros({3, 2});
    for (double& v : batch.data) v = rng.normal();
    VariationalGraphPosterior q(2);
    q.gamma.data[0] = 0.4;
    q.theta.data[0] = -0.2;
    GraphPrior prior;
    std::uint64_t draw_seed = 700 + inst;

    auto params = m.params();
    std::vector<double> flat;
    for (Tensor* p : params)
      flat.insert(flat.end(), p->data.begin(), p->data.end());
    auto eval = [&](const std::vector<double>& f) {
      std::size_t off = 0;
      for (Tensor* p : params)
        for (double& v : p->data) v = f[off++];
      Tape t;
      RngStream draw(draw_seed);
      auto mv = m.register_params(t);
      Var gv = t.input(q.gamma);
      Var tv = t.input(q.theta);
      auto parts = training::elbo_estimate(t, m, mv, q, gv, tv, prior, batch,
                                           12, 0.25, draw);
      return t.value(parts.elbo).data[0];
    };
    std::vector<double> analytic;
    {
      Tape t;
      RngStream draw(draw_seed);
      auto mv = m.register_params(t);
      Var gv = t.input(q.gamma);
      Var tv = t.input(q.theta);
      auto parts = training::elbo_estimate(t, m, mv, q, gv, tv, prior, batch,
                                           12, 0.25, draw);
      t.backward(parts.elbo);
      std::vector<Tensor> grads;
      m.read_grads(t, mv, grads);
      for (const Tensor& g : grads)
        analytic.insert(analytic.end(), g.data.begin(), g.data.end());
    }
    worst = std::max(worst, gradcheck(eval, flat, analytic));

    // entropy term in the posterior logits
    {
      Tape t;
      Var gv = t.input(q.gamma);
      Var tv = t.input(q.theta);
      Var ent = q.entropy(t, gv, tv);
      t.backward(ent);
      std::vector<double> ag(t.grad(gv).data.begin(), t.grad(gv).data.end());
      ag.insert(ag.end(), t.grad(tv).data.begin(), t.grad(tv).data.end());
      std::vector<double> fl(q.gamma.data.begin(), q.gamma.data.end());
      fl.insert(fl.end(), q.theta.data.begin(), q.theta.data.end());
      auto eval_ent = [&](const std::vector<double>& f) {
        VariationalGraphPosterior qq(2);
        qq.gamma.data[0] = f[0];
        qq.theta.data[0] = f[1];
        return qq.entropy();
      };
      worst = std::max(worst, gradcheck(eval_ent, fl, ag));
    }
  }

  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::ostringstream os;
  os << "max relative error " << worst << " over 100 instances, " << (int)secs
     << "s";
  note = os.str();
  return worst < 1e-4 && secs < 300.0;
}

// ---------- criterion 3: flow correctness ----------

bool crit_flow(std::string& note) {
  RngStream rng(31);
  double worst_rt = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    RqSpline s = RqSpline::random(8, 3.0, rng);
    for (int i = 0; i < 100; ++i) {
      double x = rng.uniform(-6.0, 6.0);
      auto [z, ld] = s.forward(x);
      (void)ld;
      auto [xr, ldr] = s.inverse(z);
      (void)ldr;
      worst_rt = std::max(worst_rt, std::fabs(xr - x));
    }
  }

  double worst_mass = 0.0;
  for (NoiseKind noise : {NoiseKind::Gaussian, NoiseKind::Spline}) {
    DeciModel m;
    m.specs = {VariableSpec::continuous("a"), VariableSpec::continuous("b")};
    m.noise_kind = noise;
    m.hidden_dim = 8;
    m.latent_dim = 6;
    m.embed_dim = 3;
    RngStream r2(32);
    m.init(r2);
    for (double& v : m.zeta.w3.data) v = 0.3 * r2.normal();
    if (noise == NoiseKind::Spline)
      for (auto& s : m.splines) {
        for (double& v : s.widths_raw.data) v += 0.2 * r2.normal();
        for (double& v : s.heights_raw.data) v += 0.2 * r2.normal();
        for (double& v : s.derivs_raw.data) v += 0.2 * r2.normal();
      }
    AdjacencyMatrix g(2);
    g.set_edge(0, 1);
    std::vector<sem::Intervention> dos{{0, 0.7}};
    double mass = 0.0, lo = -30.0, hi = 30.0, step = 0.005;
    double prev = std::exp(m.intervened_log_density({0.7, lo}, dos, g));
    for (double x = lo + step; x <= hi; x += step) {
      double cur = std::exp(m.intervened_log_density({0.7, x}, dos, g));
      mass += 0.5 * (prev + cur) * step;
      prev = cur;
    }
    worst_mass = std::max(worst_mass, std::fabs(mass - 1.0));
  }
  std::ostringstream os;
  os << "round-trip max " << worst_rt << ", density mass error " << worst_mass;
  note = os.str();
  return worst_rt < 1e-8 && worst_mass < 1e-3;
}

// ---------- criteria 4-7, 9: trained benchmark models ----------

bool crit_discovery_identifiable(std::string& note) {
  auto [dle, gle] = make_csuite("linexp");
  int mode_hits = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Trained tr = train_cached("linexp_spline_s" + std::to_string(seed), dle,
                              spline_cfg(seed));
    auto [mode, cyclic] = tr.posterior.mode();
    if (!cyclic && mode == gle.graph) ++mode_hits;
  }

  auto [dnl, gnl] = make_csuite("nonlingauss");
  int edge_hits_spline = 0, edge_hits_gauss = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Trained sp = train_cached("nonlingauss_spline_s" + std::to_string(seed),
                              dnl, spline_cfg(seed));
    auto [ms, cs] = sp.posterior.mode();
    if (!cs && ms.edge(0, 1) && !ms.edge(1, 0)) ++edge_hits_spline;

    TrainConfig cfg;
    cfg.noise = NoiseKind::Gaussian;
    cfg.seed = seed;
    Trained ga = train_cached("nonlingauss_gauss_s" + std::to_string(seed),
                              dnl, cfg);
    auto [mg, cg] = ga.posterior.mode();
    if (!cg && mg.edge(0, 1) && !mg.edge(1, 0)) ++edge_hits_gauss;
  }
  std::ostringstream os;
  os << "linexp exact mode " << mode_hits << "/5, nonlingauss true edge "
     << edge_hits_spline << "/5 (spline) " << edge_hits_gauss << "/5 (gaussian)";
  note = os.str();
  return mode_hits >= 4 && edge_hits_spline >= 4 && edge_hits_gauss >= 4;
}

bool crit_discovery_nonidentifiable(std::string& note) {
  auto [data, gt] = make_csuite("lingauss");
  (void)gt;
  int hits = 0;
  std::ostringstream os;
  os << "orientation probabilities:";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Trained tr = train_cached("lingauss_spline_s" + std::to_string(seed), data,
                              spline_cfg(seed));
    double p = sigmoid(tr.posterior.theta.data[0]);
    os << " " << std::round(p * 1000.0) / 1000.0;
    if (p >= 0.3 && p <= 0.7) ++hits;
  }
  os << " -> " << hits << "/5 in [0.3, 0.7]";
  note = os.str();
  return hits >= 4;
}

bool crit_ate_benchmarks(std::string& note) {
  struct Row {
    const char* name;
    double tol;
  };
  const Row rows[] = {{"linexp", 0.10},
                      {"nonlingauss", 0.20},
                      {"cts_to_cat", 0.08},
                      {"lingauss", 0.30}};
  bool ok = true;
  std::ostringstream os;
  for (const Row& row : rows) {
    auto [data, gt] = make_csuite(row.name);
    std::vector<double> rmses;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Trained tr = train_cached(
          std::string(row.name) + "_spline_s" + std::to_string(seed), data,
          spline_cfg(seed));
      rmses.push_back(ate_rmse_for(tr, gt, 40 + seed));
    }
    double med = median(rmses);
    if (os.tellp() > 0) os << ", ";
    os << row.name << " " << std::round(med * 1000.0) / 1000.0 << " (<= "
       << row.tol << ")";
    if (med > row.tol) ok = false;
  }
  note = os.str();
  return ok;
}

bool crit_true_graph_inference(std::string& note) {
  // effect estimation with the graph fixed to the truth
  auto [dlb, glb] = make_csuite("large_backdoor");
  TrainConfig cfg = spline_cfg(1);
  cfg.clamp_graph = glb.graph;
  Trained lb = train_cached("large_backdoor_clamp_s1", dlb, cfg);
  double rmse = ate_rmse_for(lb, glb, 71);

  auto [dss, gss] = make_csuite("symprod_simpson");
  TrainConfig cfg2 = spline_cfg(1);
  cfg2.clamp_graph = gss.graph;
  Trained ss = train_cached("symprod_simpson_clamp_s1", dss, cfg2);

  const datagen::InterventionCase* cc = nullptr;
  for (const auto& c : gss.cases)
    if (c.has_condition) cc = &c;
  if (!cc) {
    note = "no conditional test case found";
    return false;
  }
  // ground truth by MCMC under the data-generating process
  RngStream hr(72);
  RngStream hr2 = hr.child(2);
  Tensor st = datagen::hmc_conditional_samples(
      *gss.sem, {{cc->treatment, cc->value}},
      {{cc->condition_node, cc->condition_value}}, 2000, hr);
  Tensor sr = datagen::hmc_conditional_samples(
      *gss.sem, {{cc->treatment, cc->reference}},
      {{cc->condition_node, cc->condition_value}}, 2000, hr2);
  std::size_t target = cc->targets[0];
  double mt = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < st.rows(); ++i) mt += st.at(i, target);
  for (std::size_t i = 0; i < sr.rows(); ++i) mr += sr.at(i, target);
  double truth = mt / (double)st.rows() - mr / (double)sr.rows();

  CausalQuery q;
  q.treatment = {{cc->treatment, cc->value}};
  q.reference = {{cc->treatment, cc->reference}};
  q.targets = cc->targets;
  q.condition = {{cc->condition_node, cc->condition_value}};
  RngStream er(73);
  auto res = inference::estimate_cate(ss.model, ss.posterior, q, 10, 10000, er);
  double err = std::fabs(res.targets[0].value[0] - truth);

  std::ostringstream os;
  os << "large_backdoor ATE RMSE " << std::round(rmse * 1000.0) / 1000.0
     << " (<= 0.1), conditional effect error "
     << std::round(err * 1000.0) / 1000.0 << " (<= 0.35, truth "
     << std::round(truth * 100.0) / 100.0 << ")";
  note = os.str();
  return rmse <= 0.10 && err <= 0.35;
}

// ---------- criterion 8: estimator oracles ----------

std::shared_ptr<datagen::ClosureSem> linear_gaussian_sem(
    std::size_t d, const std::vector<std::vector<double>>& b,
    const std::vector<double>& sigma) {
  auto s = std::make_shared<datagen::ClosureSem>();
  s->graph = AdjacencyMatrix(d);
  s->specs_.clear();
  for (std::size_t i = 0; i < d; ++i)
    s->specs_.push_back(VariableSpec::continuous("x" + std::to_string(i)));
  s->nodes.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      if (b[j][i] != 0.0) s->graph.set_edge(j, i);
    double sg = sigma[i];
    std::vector<double> coef(d);
    for (std::size_t j = 0; j < d; ++j) coef[j] = b[j][i];
    s->nodes[i].mean = [coef, d](const std::vector<double>& x) {
      double m = 0.0;
      for (std::size_t j = 0; j < d; ++j) m += coef[j] * x[j];
      return m;
    };
    s->nodes[i].sample_noise = [sg](RngStream& r) { return sg * r.normal(); };
    s->nodes[i].noise_log_density = [sg](double z) {
      double u = z / sg;
      return -0.5 * u * u - std::log(sg) - 0.9189385332046727;
    };
  }
  return s;
}

bool crit_estimator_oracle(std::string& note) {
  // chain x0 -> x1 -> x2 with weights 0.7: do(x0: 1 vs 0) on x2 gives 0.49
  auto chain = linear_gaussian_sem(
      3, {{0, 0.7, 0}, {0, 0, 0.7}, {0, 0, 0}}, {1.0, 1.0, 1.0});
  VariationalGraphPosterior qpost =
      VariationalGraphPosterior::saturated(chain->graph);
  CausalQuery q;
  q.treatment = {{0, 1.0}};
  q.reference = {{0, 0.0}};
  q.targets = {2};
  RngStream rng(81);
  auto res = inference::estimate_ate(*chain, qpost, q, 100, 1000, rng);
  double est = res.targets[0].value[0];
  double se = res.targets[0].stderr_[0];
  bool ate_ok = std::fabs(est - 0.49) < 3.0 * std::max(se, 1e-12);

  // confounded triangle: x2 -> x0 (0.8), x2 -> x1 (-0.6), x0 -> x1 (0.9);
  // the conditional effect of do(x0: 1.5 vs -0.5) on x1 is 0.9 * 2 = 1.8
  auto tri = linear_gaussian_sem(
      3, {{0, 0.9, 0}, {0, 0, 0}, {0.8, -0.6, 0}}, {1.0, 1.0, 1.0});
  VariationalGraphPosterior qtri =
      VariationalGraphPosterior::saturated(tri->graph);
  CausalQuery qc;
  qc.treatment = {{0, 1.5}};
  qc.reference = {{0, -0.5}};
  qc.targets = {1};
  qc.condition = {{2, 0.3}};
  RngStream rng2(82);
  inference::RffConfig rff;
  rff.n_features = 1000;
  auto cres = inference::estimate_cate(*tri, qtri, qc, 2, 20000, rng2, rff);
  double cerr = std::fabs(cres.targets[0].value[0] - 1.8);

  std::ostringstream os;
  os << "ATE " << est << " vs 0.49 (3se " << 3.0 * se << "), conditional "
     << cres.targets[0].value[0] << " vs 1.8";
  note = os.str();
  return ate_ok && cerr < 0.05;
}

// ---------- criterion 9: missing data ----------

bool crit_missing_data(std::string& note) {
  auto [data, gt] = make_csuite("linexp");
  datagen::Dataset masked = data;
  RngStream mr(91);
  datagen::apply_mcar_mask(masked, 0.3, mr);

  auto adj_f1 = [&](const Trained& tr) {
    RngStream r(92);
    return metrics::expected_discovery_metrics(gt.graph, tr.posterior, 100, r)
        .adjacency.mean;
  };
  std::vector<double> full, miss;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    full.push_back(adj_f1(train_cached(
        "linexp_spline_s" + std::to_string(seed), data, spline_cfg(seed))));
    miss.push_back(adj_f1(train_cached(
        "linexp_mcar_s" + std::to_string(seed), masked, spline_cfg(seed))));
  }
  double drop = median(full) - median(miss);
  std::ostringstream os;
  os << "median adjacency F1 " << median(full) << " observed vs "
     << median(miss) << " with 30% missing cells (drop "
     << std::round(drop * 1000.0) / 1000.0 << " < 0.15)";
  note = os.str();
  return drop < 0.15;
}

// ---------- criterion 10: constraint schedule ----------

bool crit_schedule(std::string& note) {
  AugLagState s;
  s.rho = 1.0;
  s.alpha = 0.0;
  s.last_penalty = 1.0;
  AugLagState a = training::auglag_update(s, 0.5);
  bool ok = std::fabs(a.alpha - 0.5) < 1e-15 && a.rho == 1.0 &&
            a.last_penalty == 0.5 && a.outer_step == 1;
  AugLagState b = training::auglag_update(s, 0.9);
  ok = ok && b.rho == 10.0 && b.alpha == 0.0;
  AugLagState c = training::auglag_update(s, 0.64999);
  ok = ok && std::fabs(c.alpha - 0.64999) < 1e-12 && c.rho == 1.0;
  AugLagState e = training::auglag_update(s, 0.65001);
  ok = ok && e.rho == 10.0;

  // repeated no-progress escalation crosses the 1e13 cap, which ends the
  // outer loop; from rho = 1 that takes exactly 14 multiplications by 10
  AugLagState run = s;
  run.last_penalty = 1.0;
  int escalations = 0;
  while (run.rho <= 1e13 && escalations < 100) {
    run = training::auglag_update(run, run.last_penalty);
    ++escalations;
  }
  ok = ok && escalations == 14 && run.rho > 1e13;

  // expected constraint value on every cached trained model
  int models = 0;
  double worst = 0.0;
  for (const auto& entry : fs::directory_iterator(cache_dir())) {
    if (entry.path().extension() != ".ckpt") continue;
    DeciModel m;
    VariationalGraphPosterior qp;
    sem::load_checkpoint(entry.path().string(), m, qp);
    RngStream r(100);
    double acc = 0.0;
    for (int i = 0; i < 100; ++i)
      acc += graphs::dag_penalty(qp.sample_hard(r).to_tensor());
    worst = std::max(worst, acc / 100.0);
    ++models;
  }
  std::ostringstream os;
  os << "schedule transitions exact; max expected constraint "
     << worst << " over " << models << " trained models (< 1e-4)";
  note = os.str();
  return ok && worst < 1e-4;
}

// ---------- criterion 11: MCMC oracle ----------

bool crit_hmc_oracle(std::string& note) {
  // x0 ~ N(0,1); x1 = 0.8 x0 + N(0, 0.25); x2 = 1.2 x0 + N(0, 0.25)
  auto sem3 = linear_gaussian_sem(
      3, {{0, 0.8, 1.2}, {0, 0, 0}, {0, 0, 0}}, {1.0, 0.5, 0.5});
  RngStream rng(12);
  Tensor s = datagen::hmc_conditional_samples(*sem3, {}, {{1, 1.0}}, 2000, rng);
  double post_var = 1.0 / (1.0 + 0.64 / 0.25);
  double post_mean = post_var * (0.8 / 0.25);
  double m0 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    m0 += s.at(i, 0) / (double)s.rows();
    m2 += s.at(i, 2) / (double)s.rows();
  }
  double e0 = std::fabs(m0 - post_mean);
  double e2 = std::fabs(m2 - 1.2 * post_mean);
  std::ostringstream os;
  os << "conditional mean errors " << std::round(e0 * 1e4) / 1e4 << " and "
     << std::round(e2 / 1.2 * 1e4) / 1e4 << " (< 0.02)";
  note = os.str();
  return e0 < 0.02 && e2 / 1.2 < 0.02;
}

// ---------- criterion 12: discovery metrics ----------

bool crit_metrics(std::string& note) {
  AdjacencyMatrix t(3);
  t.set_edge(0, 1);
  t.set_edge(1, 2);
  AdjacencyMatrix partial(3);
  partial.set_edge(0, 1);
  bool ok = std::fabs(metrics::adjacency_f1(t, partial) - 2.0 / 3.0) < 1e-15;

  AdjacencyMatrix p(3);
  p.set_edge(0, 1);
  p.set_edge(2, 1);  // one correct edge, one reversed
  ok = ok && std::fabs(metrics::orientation_f1(t, p) - 0.5) < 1e-15;

  AdjacencyMatrix skip(3);
  skip.set_edge(0, 2);
  ok = ok && std::fabs(metrics::causal_accuracy(t, skip) - 1.0 / 3.0) < 1e-15;

  RngStream rng(121);
  int violations = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    std::size_t d = 2 + rng.uniform_index(5);
    AdjacencyMatrix a(d), b(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        if (i == j) continue;
        if (rng.uniform() < 0.3 && !a.edge(j, i)) a.set_edge(i, j);
        if (rng.uniform() < 0.3 && !b.edge(j, i)) b.set_edge(i, j);
      }
    if (metrics::orientation_f1(a, b) > metrics::adjacency_f1(a, b) + 1e-12)
      ++violations;
  }
  std::ostringstream os;
  os << "hand-counted fixtures exact, " << violations
     << "/1000 ordering violations";
  note = os.str();
  return ok && violations == 0;
}

// ---------- criterion 13: reproducibility ----------

bool crit_reproducibility(std::string& note) {
  std::string cli = cli_path();
  if (!fs::exists(cli)) {
    note = "command-line binary not found at " + cli +
           " (set DECI_CLI to its path)";
    return false;
  }
  fs::path root = cache_dir() / "repro";
  fs::remove_all(root);
  fs::create_directories(root);
  auto p = [&](const char* n) { return (root / n).string(); };

  // identical datasets
  if (run_cmd(cli + " generate --csuite lingauss --seed 7 --out " + p("a")) ||
      run_cmd(cli + " generate --csuite lingauss --seed 7 --out " + p("b"))) {
    note = "generate failed";
    return false;
  }
  for (const char* f : {"data.csv", "graph.csv", "interventions.json"})
    if (!same_bytes(root / "a" / f, root / "b" / f)) {
      note = std::string("dataset file differs: ") + f;
      return false;
    }

  // identical checkpoints from a short fit (non-converged exit is fine)
  std::string opts =
      " --noise spline --seed 3 --set inner_max_steps=60"
      " --set inner_patience=60 --set outer_max_steps=2"
      " --set penalty_samples=10";
  int r1 = run_cmd(cli + " train --data " + p("a") + " --out " + p("m1.ckpt") + opts);
  int r2 = run_cmd(cli + " train --data " + p("a") + " --out " + p("m2.ckpt") + opts);
  if ((r1 != 0 && r1 != 2) || r1 != r2) {
    note = "train exit codes " + std::to_string(r1) + "/" + std::to_string(r2);
    return false;
  }
  if (!same_bytes(root / "m1.ckpt", root / "m2.ckpt")) {
    note = "checkpoints differ between identical runs";
    return false;
  }

  // identical result JSON
  {
    std::ofstream q(root / "q.json");
    q << "{\"treatment\": {\"x1\": 1}, \"reference\": {\"x1\": 0}, "
         "\"targets\": [\"x2\"]}\n";
  }
  if (run_cmd(cli + " ate --model " + p("m1.ckpt") + " --query " + p("q.json") +
              " --seed 5 --out " + p("r1.json")) ||
      run_cmd(cli + " ate --model " + p("m1.ckpt") + " --query " + p("q.json") +
              " --seed 5 --out " + p("r2.json"))) {
    note = "ate command failed";
    return false;
  }
  if (!same_bytes(root / "r1.json", root / "r2.json")) {
    note = "effect estimates differ between identical runs";
    return false;
  }
  note = "datasets, checkpoints and result JSONs byte-identical across reruns";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* title;
    std::function<bool(std::string&)> fn;
  };
  std::vector<Criterion> all = {
      {1, "acyclicity penalty", crit_dag_penalty},
      {2, "gradient checks", crit_gradients},
      {3, "flow round-trip and density mass", crit_flow},
      {4, "discovery on identifiable benchmarks", crit_discovery_identifiable},
      {5, "orientation uncertainty on the non-identifiable benchmark",
       crit_discovery_nonidentifiable},
      {6, "treatment-effect accuracy on benchmarks", crit_ate_benchmarks},
      {7, "effect estimation with the true graph", crit_true_graph_inference},
      {8, "closed-form estimator oracle", crit_estimator_oracle},
      {9, "robustness to missing data", crit_missing_data},
      {10, "constraint schedule and convergence", crit_schedule},
      {11, "conditional sampler oracle", crit_hmc_oracle},
      {12, "discovery metrics", crit_metrics},
      {13, "seeded reproducibility of the command line", crit_reproducibility},
  };

  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0, ran = 0;
  for (auto& c : all) {
    if (!wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), c.id) == wanted.end())
      continue;
    ++ran;
    std::string note;
    bool pass = false;
    try {
      pass = c.fn(note);
    } catch (const std::exception& e) {
      note = std::string("exception: ") + e.what();
    }
    if (!pass) ++failures;
    std::printf("criterion %2d [%s] %s — %s\n", c.id, pass ? "PASS" : "FAIL",
                c.title, note.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
