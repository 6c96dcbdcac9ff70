#include "deci/inference.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <cblas.h>
#include <lapacke.h>

namespace deci::inference {

namespace {

// width of a target's effect vector
std::size_t effect_width(const sem::VariableSpec& sp) {
  return sp.kind == sem::VarKind::Categorical ? sp.cardinality : 1;
}

// one-hot (categorical) or raw-value (continuous/binary) target encoding
void encode_target(const sem::VariableSpec& sp, double v, double* out) {
  if (sp.kind == sem::VarKind::Categorical) {
    for (std::size_t k = 0; k < sp.cardinality; ++k) out[k] = 0.0;
    out[(std::size_t)std::llround(v)] = 1.0;
  } else {
    out[0] = v;
  }
}

std::vector<AdjacencyMatrix> sample_dags(
    const VariationalGraphPosterior& posterior, std::size_t n_graphs,
    RngStream& rng, std::size_t* rejected_out) {
  std::vector<AdjacencyMatrix> out;
  std::size_t attempts = 0, rejected = 0;
  std::size_t max_attempts = 10 * n_graphs;
  while (out.size() < n_graphs && attempts < max_attempts) {
    AdjacencyMatrix g = posterior.sample_hard(rng);
    ++attempts;
    if (graphs::is_dag(g))
      out.push_back(std::move(g));
    else
      ++rejected;
  }
  if (rejected_out) *rejected_out = rejected;
  if (out.size() < n_graphs || rejected * 2 > attempts)
    throw PosteriorNotDag("posterior produced mostly cyclic samples (" +
                          std::to_string(rejected) + "/" +
                          std::to_string(attempts) + " rejected)");
  return out;
}

}  // namespace

void validate_query(const CausalQuery& q,
                    const std::vector<sem::VariableSpec>& specs) {
  std::size_t D = specs.size();
  auto check_node = [&](std::size_t i) {
    if (i >= D) throw std::invalid_argument("query: node index out of range");
  };
  if (q.treatment.size() != q.reference.size())
    throw std::invalid_argument("query: treatment/reference arm mismatch");
  std::set<std::size_t> tset, cset;
  for (std::size_t i = 0; i < q.treatment.size(); ++i) {
    check_node(q.treatment[i].node);
    if (q.treatment[i].node != q.reference[i].node)
      throw std::invalid_argument("query: arm node mismatch");
    tset.insert(q.treatment[i].node);
  }
  for (const auto& c : q.condition) {
    check_node(c.node);
    cset.insert(c.node);
    if (tset.count(c.node))
      throw std::invalid_argument("query: treatment and condition overlap");
  }
  if (q.targets.empty()) throw std::invalid_argument("query: no targets");
  for (std::size_t y : q.targets) {
    check_node(y);
    if (tset.count(y) || cset.count(y))
      throw std::invalid_argument("query: target overlaps treatment/condition");
  }
}

EffectResult estimate_ate(const InterventionalSampler& sampler,
                          const VariationalGraphPosterior& posterior,
                          const CausalQuery& query, std::size_t n_graphs,
                          std::size_t n_per_graph, RngStream& rng) {
  const auto& specs = sampler.specs();
  validate_query(query, specs);

  EffectResult res;
  std::vector<AdjacencyMatrix> dags =
      sample_dags(posterior, n_graphs, rng, &res.n_cyclic_rejected);
  res.n_graphs_used = dags.size();

  std::vector<std::size_t> widths;
  std::size_t total_w = 0;
  for (std::size_t y : query.targets) {
    widths.push_back(effect_width(specs[y]));
    total_w += widths.back();
  }
  std::vector<double> mean(total_w, 0.0), m2(total_w, 0.0);
  std::size_t count = 0;

  std::vector<double> ea(total_w), eb(total_w);
  for (const AdjacencyMatrix& g : dags) {
    auto [xa, xb] = sampler.simulate_arms(g, query.treatment, query.reference,
                                          n_per_graph, rng);
    for (std::size_t s = 0; s < n_per_graph; ++s) {
      std::size_t off = 0;
      for (std::size_t yi = 0; yi < query.targets.size(); ++yi) {
        std::size_t y = query.targets[yi];
        encode_target(specs[y], xa.at(s, y), &ea[off]);
        encode_target(specs[y], xb.at(s, y), &eb[off]);
        off += widths[yi];
      }
      ++count;
      for (std::size_t k = 0; k < total_w; ++k) {
        double diff = ea[k] - eb[k];
        double delta = diff - mean[k];
        mean[k] += delta / (double)count;
        m2[k] += delta * (diff - mean[k]);
      }
    }
  }

  std::size_t off = 0;
  for (std::size_t yi = 0; yi < query.targets.size(); ++yi) {
    EffectEstimate e;
    e.node = query.targets[yi];
    for (std::size_t k = 0; k < widths[yi]; ++k) {
      e.value.push_back(mean[off + k]);
      e.stderr_.push_back(
          count > 1 ? std::sqrt(m2[off + k] / (double)(count - 1) /
                                (double)count)
                    : 0.0);
    }
    off += widths[yi];
    res.targets.push_back(std::move(e));
  }
  return res;
}

// --- random Fourier feature surrogate ---

namespace {

Tensor rff_features(const Tensor& xc, const Tensor& freqs,
                    const Tensor& phases) {
  std::size_t n = xc.rows(), F = freqs.rows(), cd = freqs.cols();
  if (xc.cols() != cd) throw std::invalid_argument("rff: dim mismatch");
  // phi = sqrt(2/F) cos(xc freqs^T + phases)
  Tensor ft = Tensor::zeros({cd, F});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t c = 0; c < cd; ++c) ft.at(c, f) = freqs.at(f, c);
  Tensor phi = Tensor::zeros({n, F});
  num::matmul_values(xc, ft, phi);
  double sc = std::sqrt(2.0 / (double)F);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t f = 0; f < F; ++f)
      phi.at(s, f) = sc * std::cos(phi.at(s, f) + phases.data[f]);
  return phi;
}

void rff_solve(RffSurrogate& s, const Tensor& xc, const Tensor& y,
               const RffConfig& cfg) {
  std::size_t n = xc.rows(), F = s.freqs.rows(), yd = y.cols();
  std::size_t cd = xc.cols();

  s.y_mean = Tensor::zeros({yd});
  for (std::size_t i = 0; i < yd; ++i) {
    double m = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += y.at(r, i);
    s.y_mean.data[i] = m / (double)n;
  }

  // Normal equations with ridge, accumulated over row blocks so the (n, F)
  // feature matrix is never materialized in full.
  Tensor a = Tensor::zeros({F, F});
  Tensor b = Tensor::zeros({F, yd});
  const std::size_t block = 4096;
  Tensor xb = Tensor::zeros({std::min(block, n), cd});
  Tensor yb = Tensor::zeros({std::min(block, n), yd});
  for (std::size_t r0 = 0; r0 < n; r0 += block) {
    std::size_t m = std::min(block, n - r0);
    if (xb.rows() != m) {
      xb = Tensor::zeros({m, cd});
      yb = Tensor::zeros({m, yd});
    }
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < cd; ++c) xb.at(r, c) = xc.at(r0 + r, c);
      for (std::size_t i = 0; i < yd; ++i)
        yb.at(r, i) = y.at(r0 + r, i) - s.y_mean.data[i];
    }
    Tensor phi = rff_features(xb, s.freqs, s.phases);
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)F, (int)F,
                (int)m, 1.0, phi.data.data(), (int)F, phi.data.data(), (int)F,
                1.0, a.data.data(), (int)F);
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)F, (int)yd,
                (int)m, 1.0, phi.data.data(), (int)F, yb.data.data(), (int)yd,
                1.0, b.data.data(), (int)yd);
  }
  double lambda = cfg.ridge_scale * (double)F;
  for (std::size_t f = 0; f < F; ++f) a.at(f, f) += lambda;

  int info = LAPACKE_dposv(LAPACK_ROW_MAJOR, 'U', (lapack_int)F,
                           (lapack_int)yd, a.data.data(), (lapack_int)F,
                           b.data.data(), (lapack_int)yd);
  if (info != 0)
    throw std::runtime_error("rff: ridge system not positive definite");
  s.weights = std::move(b);
}

}  // namespace

Tensor RffSurrogate::predict(const Tensor& xc) const {
  Tensor phi = rff_features(xc, freqs, phases);
  Tensor out = Tensor::zeros({xc.rows(), weights.cols()});
  num::matmul_values(phi, weights, out);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t i = 0; i < out.cols(); ++i)
      out.at(r, i) += y_mean.data[i];
  return out;
}

RffSurrogate fit_rff_surrogate(const Tensor& xc, const Tensor& y,
                               const RffConfig& cfg, RngStream& rng) {
  std::size_t cd = xc.cols();
  RffSurrogate s;
  s.freqs = Tensor::zeros({cfg.n_features, cd});
  for (double& v : s.freqs.data) v = rng.normal() / cfg.lengthscale;
  s.phases = Tensor::zeros({cfg.n_features});
  for (double& v : s.phases.data) v = rng.uniform(0.0, 2.0 * M_PI);
  rff_solve(s, xc, y, cfg);
  return s;
}

RffSurrogate refit_rff_surrogate(const RffSurrogate& basis, const Tensor& xc,
                                 const Tensor& y, const RffConfig& cfg) {
  RffSurrogate s;
  s.freqs = basis.freqs;
  s.phases = basis.phases;
  rff_solve(s, xc, y, cfg);
  return s;
}

EffectResult estimate_cate(const InterventionalSampler& sampler,
                           const VariationalGraphPosterior& posterior,
                           const CausalQuery& query, std::size_t n_graphs,
                           std::size_t n_per_graph, RngStream& rng,
                           const RffConfig& rff) {
  const auto& specs = sampler.specs();
  validate_query(query, specs);

  EffectResult res;
  std::vector<AdjacencyMatrix> dags =
      sample_dags(posterior, n_graphs, rng, &res.n_cyclic_rejected);

  std::vector<std::size_t> cont_c, disc_c;
  std::vector<double> cont_val, disc_val;
  for (const auto& c : query.condition) {
    if (specs[c.node].kind == sem::VarKind::Continuous) {
      cont_c.push_back(c.node);
      cont_val.push_back(c.value);
    } else {
      disc_c.push_back(c.node);
      disc_val.push_back(c.value);
    }
  }

  std::vector<std::size_t> widths;
  std::size_t total_w = 0;
  for (std::size_t y : query.targets) {
    widths.push_back(effect_width(specs[y]));
    total_w += widths.back();
  }

  std::vector<double> acc(total_w, 0.0), acc2(total_w, 0.0);
  std::size_t graphs_used = 0;
  bool warned_support = false, warned_path = false, warned_stratum = false;

  // evaluates one arm at the conditioning point
  auto arm_value = [&](const Tensor& x, const RffSurrogate* basis,
                       RffSurrogate* fitted, std::vector<double>& out) {
    std::size_t n = x.rows();
    // stratify on discrete conditioning values
    std::vector<std::size_t> rows;
    for (std::size_t s = 0; s < n; ++s) {
      bool keep = true;
      for (std::size_t k = 0; k < disc_c.size(); ++k)
        keep &= std::llround(x.at(s, disc_c[k])) == std::llround(disc_val[k]);
      if (keep) rows.push_back(s);
    }
    if (rows.empty()) return false;

    Tensor y = Tensor::zeros({rows.size(), total_w});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::size_t off = 0;
      for (std::size_t yi = 0; yi < query.targets.size(); ++yi) {
        encode_target(specs[query.targets[yi]],
                      x.at(rows[r], query.targets[yi]), &y.at(r, off));
        off += widths[yi];
      }
    }
    if (cont_c.empty()) {
      for (std::size_t k = 0; k < total_w; ++k) {
        double m = 0.0;
        for (std::size_t r = 0; r < rows.size(); ++r) m += y.at(r, k);
        out[k] = m / (double)rows.size();
      }
      return true;
    }

    Tensor xc = Tensor::zeros({rows.size(), cont_c.size()});
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t k = 0; k < cont_c.size(); ++k)
        xc.at(r, k) = x.at(rows[r], cont_c[k]);

    // flag conditioning points outside the sampled 1st-99th percentile
    for (std::size_t k = 0; k < cont_c.size() && !warned_support; ++k) {
      std::vector<double> col(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) col[r] = xc.at(r, k);
      std::sort(col.begin(), col.end());
      double lo = col[(std::size_t)(0.01 * (double)(col.size() - 1))];
      double hi = col[(std::size_t)(0.99 * (double)(col.size() - 1))];
      if (cont_val[k] < lo || cont_val[k] > hi) {
        res.warnings.push_back(
            "conditioning value outside the sampled 1st-99th percentile");
        warned_support = true;
      }
    }

    *fitted = basis ? refit_rff_surrogate(*basis, xc, y, rff)
                    : fit_rff_surrogate(xc, y, rff, rng);
    Tensor at = Tensor::zeros({1, cont_c.size()});
    for (std::size_t k = 0; k < cont_c.size(); ++k) at.at(0, k) = cont_val[k];
    Tensor pred = fitted->predict(at);
    for (std::size_t k = 0; k < total_w; ++k) out[k] = pred.data[k];
    return true;
  };

  std::vector<double> va(total_w), vb(total_w);
  for (const AdjacencyMatrix& g : dags) {
    // the conditioning set must not be caused by the treatment
    bool bad = false;
    for (const auto& tr : query.treatment)
      for (const auto& c : query.condition)
        bad |= graphs::has_directed_path(g, tr.node, c.node);
    if (bad) {
      if (!warned_path) {
        res.warnings.push_back(
            "skipped graphs with a directed path from treatment to "
            "conditioning set");
        warned_path = true;
      }
      continue;
    }

    auto [xa, xb] = sampler.simulate_arms(g, query.treatment, query.reference,
                                          n_per_graph, rng);
    RffSurrogate sa, sb;
    bool oka = arm_value(xa, nullptr, &sa, va);
    bool okb = oka && arm_value(xb, cont_c.empty() ? nullptr : &sa, &sb, vb);
    if (!oka || !okb) {
      if (!warned_stratum) {
        res.warnings.push_back("empty conditioning stratum in some graphs");
        warned_stratum = true;
      }
      continue;
    }
    ++graphs_used;
    for (std::size_t k = 0; k < total_w; ++k) {
      double diff = va[k] - vb[k];
      acc[k] += diff;
      acc2[k] += diff * diff;
    }
  }

  if (graphs_used == 0)
    throw std::runtime_error(
        "estimate_cate: no usable posterior graphs for this query");
  res.n_graphs_used = graphs_used;

  std::size_t off = 0;
  for (std::size_t yi = 0; yi < query.targets.size(); ++yi) {
    EffectEstimate e;
    e.node = query.targets[yi];
    for (std::size_t k = 0; k < widths[yi]; ++k) {
      double m = acc[off + k] / (double)graphs_used;
      e.value.push_back(m);
      if (graphs_used > 1) {
        double var = (acc2[off + k] - (double)graphs_used * m * m) /
                     (double)(graphs_used - 1);
        e.stderr_.push_back(std::sqrt(std::max(0.0, var) /
                                      (double)graphs_used));
      }
    }
    off += widths[yi];
    res.targets.push_back(std::move(e));
  }
  return res;
}

}  // namespace deci::inference
