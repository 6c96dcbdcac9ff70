#include "deci/sem.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace deci::sem {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Plain-value MLP forward (records a throwaway tape).
Tensor mlp_forward(const MlpBlock& m, const Tensor& x) {
  Tape t;
  auto v = m.register_params(t);
  Var out = m.apply(t, v, t.constant(x));
  return t.value(out);
}

}  // namespace

void validate_specs(const std::vector<VariableSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("specs: empty");
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (!names.insert(s.name).second)
      throw std::invalid_argument("specs: duplicate name " + s.name);
    if (s.kind == VarKind::Categorical && s.cardinality < 2)
      throw std::invalid_argument("specs: categorical cardinality < 2");
  }
}

std::size_t DeciModel::in_width(std::size_t i) const {
  return specs[i].kind == VarKind::Categorical ? specs[i].cardinality : 1;
}

std::size_t DeciModel::out_width(std::size_t i) const {
  return specs[i].kind == VarKind::Categorical ? specs[i].cardinality : 1;
}

std::size_t DeciModel::max_in_width() const {
  std::size_t w = 1;
  for (std::size_t i = 0; i < d(); ++i) w = std::max(w, in_width(i));
  return w;
}

std::size_t DeciModel::max_out_width() const {
  std::size_t w = 1;
  for (std::size_t i = 0; i < d(); ++i) w = std::max(w, out_width(i));
  return w;
}

void DeciModel::init(RngStream& rng) {
  validate_specs(specs);
  if (embed_dim == 0) embed_dim = d();
  embeddings = Tensor::zeros({d(), embed_dim});
  for (double& v : embeddings.data) v = rng.normal();

  ell = MlpBlock(embed_dim + max_in_width(), hidden_dim, latent_dim);
  ell.init(rng);
  zeta = MlpBlock(embed_dim + latent_dim, hidden_dim, max_out_width());
  zeta.init(rng, /*zero_output=*/true);

  log_var = Tensor::zeros({d()});
  splines.clear();
  if (noise_kind == NoiseKind::Spline) {
    std::vector<double> wr, hr, dr;
    num::rq_spline_identity_params(kSplineBins, wr, hr, dr);
    for (std::size_t i = 0; i < d(); ++i)
      splines.push_back({Tensor({(std::size_t)kSplineBins}, wr),
                         Tensor({(std::size_t)kSplineBins}, hr),
                         Tensor({(std::size_t)kSplineBins - 1}, dr)});
  }
}

std::vector<Tensor*> DeciModel::params() {
  std::vector<Tensor*> out{&embeddings};
  for (Tensor* p : ell.params()) out.push_back(p);
  for (Tensor* p : zeta.params()) out.push_back(p);
  out.push_back(&log_var);
  for (auto& s : splines) {
    out.push_back(&s.widths_raw);
    out.push_back(&s.heights_raw);
    out.push_back(&s.derivs_raw);
  }
  return out;
}

DeciModel::Vars DeciModel::register_params(Tape& t) const {
  Vars v;
  v.emb = t.input(embeddings);
  v.ell = ell.register_params(t);
  v.zeta = zeta.register_params(t);
  v.log_var = t.input(log_var);
  for (const auto& s : splines)
    v.splines.push_back({t.input(s.widths_raw), t.input(s.heights_raw),
                         t.input(s.derivs_raw)});
  return v;
}

void DeciModel::read_grads(const Tape& t, const Vars& v,
                           std::vector<Tensor>& out) const {
  out.clear();
  auto push = [&](Var p) {
    const Tensor& g = t.grad(p);
    out.push_back(g.data.empty() ? Tensor::zeros(t.value(p).shape) : g);
  };
  push(v.emb);
  std::vector<Tensor> mg;
  ell.read_grads(t, v.ell, mg);
  for (auto& g : mg) out.push_back(std::move(g));
  zeta.read_grads(t, v.zeta, mg);
  for (auto& g : mg) out.push_back(std::move(g));
  push(v.log_var);
  for (const auto& s : v.splines) {
    push(s.widths_raw);
    push(s.heights_raw);
    push(s.derivs_raw);
  }
}

Var DeciModel::predict(Tape& t, const Vars& v, const Tensor& x, Var w) const {
  std::size_t n = x.rows(), D = d(), wi = max_in_width();
  if (x.cols() != D) throw std::invalid_argument("predict: x width != D");

  // encoded node inputs, row s*D + j
  Tensor enc = Tensor::zeros({n * D, wi});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < D; ++j) {
      double val = x.at(s, j);
      double* row = &enc.data[(s * D + j) * wi];
      if (specs[j].kind == VarKind::Categorical) {
        auto cls = (std::size_t)std::llround(val);
        if (cls >= specs[j].cardinality)
          throw std::invalid_argument("predict: class index out of range");
        row[cls] = 1.0;
      } else {
        row[0] = val;
      }
    }

  // tile embeddings to (n*D, embed_dim) via a constant selector matrix
  Tensor sel = Tensor::zeros({n * D, D});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < D; ++j) sel.at(s * D + j, j) = 1.0;
  Var tile = matmul(t, t.constant(std::move(sel)), v.emb);

  Var lat = ell.apply(t, v.ell, concat_cols(t, {tile, t.constant(std::move(enc))}));
  Var agg = graph_aggregate(t, w, lat, n, D, latent_dim);
  return zeta.apply(t, v.zeta, concat_cols(t, {tile, agg}));
}

Var DeciModel::log_likelihood(Tape& t, const Vars& v, const Tensor& x,
                              Var w) const {
  std::size_t n = x.rows(), D = d();
  Var f = predict(t, v, x, w);
  Var total = t.constant(0.0);
  for (std::size_t i = 0; i < D; ++i) {
    std::vector<std::size_t> rows(n);
    for (std::size_t s = 0; s < n; ++s) rows[s] = s * D + i;
    Var fi_full = gather_rows(t, f, rows);
    const VariableSpec& sp = specs[i];
    Var ll;
    if (sp.kind == VarKind::Continuous) {
      Var fi = reshape(t, slice_cols(t, fi_full, 0, 1), {n});
      Tensor xi = Tensor::zeros({n});
      for (std::size_t s = 0; s < n; ++s) xi.data[s] = x.at(s, i);
      Var res = sub(t, t.constant(std::move(xi)), fi);
      if (noise_kind == NoiseKind::Gaussian) {
        Var lv = gather(t, v.log_var, {i});
        Var quad = mul(t, sum(t, square(t, res)), exp_(t, neg(t, lv)));
        ll = add(t, t.constant(-0.5 * n * kLog2Pi),
                 add(t, scale(t, lv, -0.5 * (double)n), scale(t, quad, -0.5)));
      } else {
        auto [base, ld] = num::rq_spline_inverse(t, res, v.splines[i],
                                                 kSplineBins);
        ll = add(t, t.constant(-0.5 * n * kLog2Pi),
                 add(t, scale(t, sum(t, square(t, base)), -0.5), sum(t, ld)));
      }
    } else if (sp.kind == VarKind::Binary) {
      Var fi = reshape(t, slice_cols(t, fi_full, 0, 1), {n});
      Tensor sgn = Tensor::zeros({n});
      for (std::size_t s = 0; s < n; ++s)
        sgn.data[s] = 1.0 - 2.0 * x.at(s, i);
      ll = neg(t, sum(t, softplus(t, mul(t, t.constant(std::move(sgn)), fi))));
    } else {
      std::size_t k = sp.cardinality;
      Var ls = log_softmax_rows(t, slice_cols(t, fi_full, 0, k));
      Tensor onehot = Tensor::zeros({n, k});
      for (std::size_t s = 0; s < n; ++s)
        onehot.at(s, (std::size_t)std::llround(x.at(s, i))) = 1.0;
      ll = sum(t, mul(t, t.constant(std::move(onehot)), ls));
    }
    total = add(t, total, ll);
  }
  return total;
}

Var DeciModel::log_likelihood_vx(Tape& t, const Vars& v, Var x, Var w) const {
  const Tensor xv = t.value(x);  // copy: later nodes may reallocate storage
  std::size_t n = xv.rows(), D = d();
  if (xv.cols() != D) throw std::invalid_argument("log_likelihood_vx: width");

  Var ones = t.constant(Tensor::full({n, 1}, 1.0));
  auto tile_emb = [&](std::size_t j) {
    return matmul(t, ones, gather_rows(t, v.emb, {j}));
  };

  // per-node latent codes
  std::size_t wi = max_in_width();
  std::vector<Var> lat(D);
  for (std::size_t j = 0; j < D; ++j) {
    Var enc;
    if (specs[j].kind == VarKind::Categorical) {
      Tensor oh = Tensor::zeros({n, wi});
      for (std::size_t s = 0; s < n; ++s)
        oh.at(s, (std::size_t)std::llround(xv.at(s, j))) = 1.0;
      enc = t.constant(std::move(oh));
    } else {
      enc = slice_cols(t, x, j, j + 1);
      if (wi > 1)
        enc = concat_cols(t, {enc, t.constant(Tensor::zeros({n, wi - 1}))});
    }
    lat[j] = ell.apply(t, v.ell, concat_cols(t, {tile_emb(j), enc}));
  }

  Var wf = reshape(t, w, {D * D});
  Var total = t.constant(0.0);
  for (std::size_t i = 0; i < D; ++i) {
    Var agg = t.constant(Tensor::zeros({n, latent_dim}));
    for (std::size_t j = 0; j < D; ++j) {
      if (j == i) continue;
      agg = add(t, agg, mul(t, lat[j], gather(t, wf, {j * D + i})));
    }
    Var fi_full = zeta.apply(t, v.zeta, concat_cols(t, {tile_emb(i), agg}));
    const VariableSpec& sp = specs[i];
    Var ll;
    if (sp.kind == VarKind::Continuous) {
      Var fi = reshape(t, slice_cols(t, fi_full, 0, 1), {n});
      Var xi = reshape(t, slice_cols(t, x, i, i + 1), {n});
      Var res = sub(t, xi, fi);
      if (noise_kind == NoiseKind::Gaussian) {
        Var lv = gather(t, v.log_var, {i});
        Var quad = mul(t, sum(t, square(t, res)), exp_(t, neg(t, lv)));
        ll = add(t, t.constant(-0.5 * n * kLog2Pi),
                 add(t, scale(t, lv, -0.5 * (double)n), scale(t, quad, -0.5)));
      } else {
        auto [base, ld] = num::rq_spline_inverse(t, res, v.splines[i],
                                                 kSplineBins);
        ll = add(t, t.constant(-0.5 * n * kLog2Pi),
                 add(t, scale(t, sum(t, square(t, base)), -0.5), sum(t, ld)));
      }
    } else if (sp.kind == VarKind::Binary) {
      Var fi = reshape(t, slice_cols(t, fi_full, 0, 1), {n});
      Tensor sgn = Tensor::zeros({n});
      for (std::size_t s = 0; s < n; ++s)
        sgn.data[s] = 1.0 - 2.0 * xv.at(s, i);
      ll = neg(t, sum(t, softplus(t, mul(t, t.constant(std::move(sgn)), fi))));
    } else {
      std::size_t k = sp.cardinality;
      Var ls = log_softmax_rows(t, slice_cols(t, fi_full, 0, k));
      Tensor onehot = Tensor::zeros({n, k});
      for (std::size_t s = 0; s < n; ++s)
        onehot.at(s, (std::size_t)std::llround(xv.at(s, i))) = 1.0;
      ll = sum(t, mul(t, t.constant(std::move(onehot)), ls));
    }
    total = add(t, total, ll);
  }
  return total;
}

double DeciModel::log_likelihood(const Tensor& x,
                                 const AdjacencyMatrix& g) const {
  Tape t;
  Vars v = register_params(t);
  Var ll = log_likelihood(t, v, x, t.constant(g.to_tensor()));
  return t.value(ll).data[0];
}

Tensor DeciModel::predict_values(const Tensor& x, const Tensor& w) const {
  Tape t;
  Vars v = register_params(t);
  Var f = predict(t, v, x, t.constant(w));
  return t.value(f);
}

NoiseDraws DeciModel::draw_noise(std::size_t n, RngStream& rng) const {
  NoiseDraws out;
  out.z = Tensor::zeros({n, d()});
  out.gumbel.resize(d());
  for (std::size_t i = 0; i < d(); ++i) {
    const VariableSpec& sp = specs[i];
    if (sp.kind == VarKind::Continuous) {
      if (noise_kind == NoiseKind::Gaussian) {
        double sd = std::exp(0.5 * log_var.data[i]);
        for (std::size_t s = 0; s < n; ++s) out.z.at(s, i) = sd * rng.normal();
      } else {
        num::RqSpline sp_i = num::RqSpline::from_unconstrained(
            splines[i].widths_raw.data, splines[i].heights_raw.data,
            splines[i].derivs_raw.data);
        for (std::size_t s = 0; s < n; ++s)
          out.z.at(s, i) = sp_i.forward(rng.normal()).first;
      }
    } else if (sp.kind == VarKind::Binary) {
      for (std::size_t s = 0; s < n; ++s) out.z.at(s, i) = rng.logistic();
    } else {
      out.gumbel[i] = Tensor::zeros({n, sp.cardinality});
      for (double& v : out.gumbel[i].data) v = rng.gumbel();
    }
  }
  return out;
}

Tensor DeciModel::simulate_from_noise(const AdjacencyMatrix& g,
                                      const NoiseDraws& noise,
                                      const std::vector<Intervention>& dos) const {
  std::size_t n = noise.n(), D = d();
  std::vector<std::size_t> treated;
  for (const auto& iv : dos) treated.push_back(iv.node);
  AdjacencyMatrix g2 = graphs::mutilate(g, treated);
  std::vector<std::size_t> order = graphs::topological_order(g2);

  Tensor x = Tensor::zeros({n, D});
  std::vector<Tensor> lat(D);  // ell outputs, filled in topological order

  auto node_latent = [&](std::size_t j) {
    std::size_t wi = max_in_width();
    Tensor in = Tensor::zeros({n, embed_dim + wi});
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t e = 0; e < embed_dim; ++e)
        in.at(s, e) = embeddings.at(j, e);
      if (specs[j].kind == VarKind::Categorical)
        in.at(s, embed_dim + (std::size_t)std::llround(x.at(s, j))) = 1.0;
      else
        in.at(s, embed_dim) = x.at(s, j);
    }
    lat[j] = mlp_forward(ell, in);
  };

  for (std::size_t i : order) {
    const Intervention* iv = nullptr;
    for (const auto& v : dos)
      if (v.node == i) iv = &v;
    if (iv) {
      for (std::size_t s = 0; s < n; ++s) x.at(s, i) = iv->value;
      node_latent(i);
      continue;
    }

    Tensor zin = Tensor::zeros({n, embed_dim + latent_dim});
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t e = 0; e < embed_dim; ++e)
        zin.at(s, e) = embeddings.at(i, e);
    for (std::size_t j = 0; j < D; ++j)
      if (g2.edge(j, i))
        for (std::size_t s = 0; s < n; ++s)
          for (std::size_t k = 0; k < latent_dim; ++k)
            zin.at(s, embed_dim + k) += lat[j].at(s, k);
    Tensor f = mlp_forward(zeta, zin);

    const VariableSpec& sp = specs[i];
    for (std::size_t s = 0; s < n; ++s) {
      if (sp.kind == VarKind::Continuous) {
        x.at(s, i) = f.at(s, 0) + noise.z.at(s, i);
      } else if (sp.kind == VarKind::Binary) {
        x.at(s, i) = f.at(s, 0) + noise.z.at(s, i) > 0.0 ? 1.0 : 0.0;
      } else {
        std::size_t best = 0;
        double bv = -1e308;
        for (std::size_t k = 0; k < sp.cardinality; ++k) {
          double v = f.at(s, k) + noise.gumbel[i].at(s, k);
          if (v > bv) {
            bv = v;
            best = k;
          }
        }
        x.at(s, i) = (double)best;
      }
    }
    node_latent(i);
  }
  return x;
}

Tensor DeciModel::sample_observational(const AdjacencyMatrix& g, std::size_t n,
                                       RngStream& rng) const {
  return simulate_from_noise(g, draw_noise(n, rng), {});
}

Tensor DeciModel::sample_interventional(const AdjacencyMatrix& g,
                                        const std::vector<Intervention>& dos,
                                        std::size_t n, RngStream& rng) const {
  return simulate_from_noise(g, draw_noise(n, rng), dos);
}

Tensor DeciModel::invert_to_noise(const Tensor& x,
                                  const AdjacencyMatrix& g) const {
  for (const auto& sp : specs)
    if (sp.kind != VarKind::Continuous)
      throw std::invalid_argument("invert_to_noise: discrete nodes present");
  if (!graphs::is_dag(g)) throw graphs::CyclicGraphError("invert: cyclic");
  Tensor f = predict_values(x, g.to_tensor());
  std::size_t n = x.rows(), D = d();
  Tensor z = Tensor::zeros({n, D});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < D; ++i)
      z.at(s, i) = x.at(s, i) - f.at(s * D + i, 0);
  return z;
}

double DeciModel::intervened_log_density(const std::vector<double>& xin,
                                         const std::vector<Intervention>& dos,
                                         const AdjacencyMatrix& g) const {
  std::size_t D = d();
  if (xin.size() != D)
    throw std::invalid_argument("intervened_log_density: bad length");
  std::vector<std::size_t> treated;
  for (const auto& iv : dos) treated.push_back(iv.node);
  AdjacencyMatrix g2 = graphs::mutilate(g, treated);

  Tensor x = Tensor::zeros({1, D});
  for (std::size_t i = 0; i < D; ++i) x.at(0, i) = xin[i];
  for (const auto& iv : dos) x.at(0, iv.node) = iv.value;

  Tensor f = predict_values(x, g2.to_tensor());
  double total = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    bool is_treated = false;
    for (auto tn : treated) is_treated |= tn == i;
    if (is_treated) continue;
    if (specs[i].kind != VarKind::Continuous)
      throw std::invalid_argument(
          "intervened_log_density: non-treated discrete node");
    double z = x.at(0, i) - f.at(i, 0);
    if (noise_kind == NoiseKind::Gaussian) {
      double lv = log_var.data[i];
      total += -0.5 * kLog2Pi - 0.5 * lv - 0.5 * z * z * std::exp(-lv);
    } else {
      num::RqSpline sp_i = num::RqSpline::from_unconstrained(
          splines[i].widths_raw.data, splines[i].heights_raw.data,
          splines[i].derivs_raw.data);
      auto [base, ld] = sp_i.inverse(z);
      total += -0.5 * kLog2Pi - 0.5 * base * base + ld;
    }
  }
  return total;
}

// --- checkpoint I/O ---

namespace {

using nlohmann::json;

std::vector<std::pair<std::string, const Tensor*>> tensor_table(
    const DeciModel& m, const graphs::VariationalGraphPosterior& q) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.emplace_back("embeddings", &m.embeddings);
  const char* mlp_names[10] = {"w1", "b1", "g1", "a1", "w2",
                               "b2", "g2", "a2", "w3", "b3"};
  auto ep = m.ell.params();
  auto zp = m.zeta.params();
  for (int i = 0; i < 10; ++i) {
    out.emplace_back(std::string("ell.") + mlp_names[i], ep[i]);
    out.emplace_back(std::string("zeta.") + mlp_names[i], zp[i]);
  }
  out.emplace_back("log_var", &m.log_var);
  for (std::size_t i = 0; i < m.splines.size(); ++i) {
    std::string p = "spline." + std::to_string(i) + ".";
    out.emplace_back(p + "widths", &m.splines[i].widths_raw);
    out.emplace_back(p + "heights", &m.splines[i].heights_raw);
    out.emplace_back(p + "derivs", &m.splines[i].derivs_raw);
  }
  out.emplace_back("posterior.gamma", &q.gamma);
  out.emplace_back("posterior.theta", &q.theta);
  return out;
}

constexpr char kMagic[8] = {'D', 'E', 'C', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const DeciModel& model,
                     const graphs::VariationalGraphPosterior& posterior) {
  json header;
  header["noise"] = model.noise_kind == NoiseKind::Gaussian ? "gaussian"
                                                            : "spline";
  header["embed_dim"] = model.embed_dim;
  header["latent_dim"] = model.latent_dim;
  header["hidden_dim"] = model.hidden_dim;
  json specs = json::array();
  for (const auto& s : model.specs) {
    json sp;
    sp["name"] = s.name;
    sp["kind"] = s.kind == VarKind::Continuous ? "continuous"
                 : s.kind == VarKind::Binary   ? "binary"
                                               : "categorical";
    sp["cardinality"] = s.cardinality;
    specs.push_back(sp);
  }
  header["specs"] = specs;
  json tensors = json::array();
  auto table = tensor_table(model, posterior);
  for (const auto& [name, t] : table) {
    json e;
    e["name"] = name;
    e["shape"] = t->shape;
    tensors.push_back(e);
  }
  header["tensors"] = tensors;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  f.write(kMagic, 8);
  std::uint32_t ver = kVersion, hl = (std::uint32_t)hs.size();
  f.write(reinterpret_cast<const char*>(&ver), 4);
  f.write(reinterpret_cast<const char*>(&hl), 4);
  f.write(hs.data(), hs.size());
  for (const auto& [name, t] : table)
    f.write(reinterpret_cast<const char*>(t->data.data()),
            (std::streamsize)(t->data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, DeciModel& model,
                     graphs::VariationalGraphPosterior& posterior) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t ver = 0, hl = 0;
  f.read(reinterpret_cast<char*>(&ver), 4);
  f.read(reinterpret_cast<char*>(&hl), 4);
  if (ver != kVersion) throw std::runtime_error("checkpoint: bad version");
  std::string hs(hl, '\0');
  f.read(hs.data(), hl);
  json header = json::parse(hs);

  model = DeciModel{};
  model.noise_kind = header["noise"] == "gaussian" ? NoiseKind::Gaussian
                                                   : NoiseKind::Spline;
  model.embed_dim = header["embed_dim"];
  model.latent_dim = header["latent_dim"];
  model.hidden_dim = header["hidden_dim"];
  for (const auto& sp : header["specs"]) {
    VariableSpec s;
    s.name = sp["name"];
    std::string kind = sp["kind"];
    s.kind = kind == "continuous" ? VarKind::Continuous
             : kind == "binary"   ? VarKind::Binary
                                  : VarKind::Categorical;
    s.cardinality = sp["cardinality"];
    model.specs.push_back(s);
  }
  std::size_t D = model.specs.size();
  model.ell = MlpBlock(model.embed_dim + model.max_in_width(),
                       model.hidden_dim, model.latent_dim);
  model.zeta = MlpBlock(model.embed_dim + model.latent_dim, model.hidden_dim,
                        model.max_out_width());
  if (model.noise_kind == NoiseKind::Spline)
    model.splines.resize(D);
  posterior = graphs::VariationalGraphPosterior(D);

  auto table = tensor_table(model, posterior);
  std::size_t idx = 0;
  for (const auto& entry : header["tensors"]) {
    if (idx >= table.size())
      throw std::runtime_error("checkpoint: tensor count mismatch");
    auto& [name, tc] = table[idx];
    if (entry["name"] != name)
      throw std::runtime_error("checkpoint: unexpected tensor order");
    Tensor* t = const_cast<Tensor*>(tc);
    std::vector<std::size_t> shape = entry["shape"];
    *t = Tensor::zeros(shape);
    f.read(reinterpret_cast<char*>(t->data.data()),
           (std::streamsize)(t->data.size() * sizeof(double)));
    ++idx;
  }
  if (idx != table.size() || !f)
    throw std::runtime_error("checkpoint: truncated file " + path);
}

}  // namespace deci::sem
