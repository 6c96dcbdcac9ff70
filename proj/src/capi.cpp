#include "deci.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "deci/datagen.hpp"
#include "deci/inference.hpp"
#include "deci/metrics.hpp"
#include "deci/training.hpp"

using json = nlohmann::json;

struct deci_dataset {
  deci::datagen::DatasetPackage pkg;
};

struct deci_model {
  deci::sem::DeciModel model;
  deci::graphs::VariationalGraphPosterior posterior;
  bool has_diag = false;
  deci::training::Diagnostics diag;
};

namespace {

thread_local std::string g_last_error;

deci_status fail(deci_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

char* dup_string(const std::string& s) {
  char* out = (char*)std::malloc(s.size() + 1);
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Wraps an operation, translating exceptions to status codes.
template <typename F>
deci_status guarded(deci_status io_or_runtime, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    return fail(DECI_ERR_INVALID, e.what());
  } catch (const std::exception& e) {
    return fail(io_or_runtime, e.what());
  }
}

std::size_t resolve_name(const std::vector<deci::sem::VariableSpec>& specs,
                         const std::string& name) {
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (specs[i].name == name) return i;
  throw std::invalid_argument("unknown variable: " + name);
}

deci::inference::CausalQuery parse_query(
    const std::vector<deci::sem::VariableSpec>& specs, const char* query_json) {
  json q = json::parse(query_json);
  deci::inference::CausalQuery out;
  for (auto& [name, value] : q.at("treatment").items())
    out.treatment.push_back({resolve_name(specs, name), value.get<double>()});
  for (auto& [name, value] : q.at("reference").items())
    out.reference.push_back({resolve_name(specs, name), value.get<double>()});
  for (const auto& name : q.at("targets"))
    out.targets.push_back(resolve_name(specs, name.get<std::string>()));
  if (q.contains("condition"))
    for (auto& [name, value] : q.at("condition").items())
      out.condition.push_back({resolve_name(specs, name), value.get<double>()});
  return out;
}

json effect_to_json(const std::vector<deci::sem::VariableSpec>& specs,
                    const deci::inference::EffectResult& r) {
  json out;
  out["targets"] = json::array();
  for (const auto& t : r.targets) {
    json e;
    e["node"] = specs[t.node].name;
    e["value"] = t.value;
    e["stderr"] = t.stderr_;
    out["targets"].push_back(e);
  }
  out["n_graphs_used"] = r.n_graphs_used;
  out["n_cyclic_rejected"] = r.n_cyclic_rejected;
  out["warnings"] = r.warnings;
  return out;
}

json adjacency_to_json(const deci::num::Tensor& t) {
  json rows = json::array();
  for (std::size_t j = 0; j < t.rows(); ++j) {
    json row = json::array();
    for (std::size_t i = 0; i < t.cols(); ++i) row.push_back(t.at(j, i));
    rows.push_back(row);
  }
  return rows;
}

deci::graphs::AdjacencyMatrix read_graph_csv(const std::string& path,
                                             std::size_t d) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  deci::graphs::AdjacencyMatrix g(d);
  std::string line, cell;
  for (std::size_t j = 0; j < d; ++j) {
    if (!std::getline(f, line))
      throw std::runtime_error("graph csv: too few rows in " + path);
    std::stringstream ss(line);
    for (std::size_t i = 0; i < d; ++i) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("graph csv: too few columns in " + path);
      if (std::stoi(cell)) g.set_edge(j, i);
    }
  }
  return g;
}

double expected_penalty(const deci::graphs::VariationalGraphPosterior& q,
                        std::size_t n, deci::num::RngStream& rng) {
  double sum = 0.0;
  for (std::size_t s = 0; s < n; ++s)
    sum += deci::graphs::dag_penalty(q.sample_hard(rng).to_tensor());
  return sum / (double)n;
}

const char* kind_name(deci::sem::VarKind k) {
  switch (k) {
    case deci::sem::VarKind::Continuous: return "continuous";
    case deci::sem::VarKind::Binary: return "binary";
    default: return "categorical";
  }
}

json specs_to_json(const std::vector<deci::sem::VariableSpec>& specs) {
  json arr = json::array();
  for (const auto& sp : specs) {
    json v;
    v["name"] = sp.name;
    v["type"] = kind_name(sp.kind);
    v["cardinality"] = sp.cardinality;
    arr.push_back(v);
  }
  return arr;
}

}  // namespace

extern "C" {

const char* deci_version(void) { return "deci 1.0.0"; }

const char* deci_last_error(void) { return g_last_error.c_str(); }

deci_status deci_set_threads(int n) {
  if (n < 1) return fail(DECI_ERR_INVALID, "thread count must be positive");
  deci::num::set_blas_threads(n);
  return DECI_OK;
}

void deci_string_free(char* s) { std::free(s); }

deci_status deci_dataset_generate(const char* spec_json, uint64_t seed,
                                  deci_dataset** out) {
  if (!spec_json || !out)
    return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_RUNTIME, [&] {
    json spec = json::parse(spec_json);
    deci::num::RngStream rng(seed);
    auto handle = std::make_unique<deci_dataset>();
    deci::datagen::Dataset data;
    deci::datagen::GroundTruthPackage gt;
    if (spec.contains("csuite")) {
      std::string name = spec.at("csuite");
      std::tie(data, gt) = deci::datagen::generate_csuite(name, rng);
    } else {
      deci::datagen::SyntheticSpec s;
      std::string family = spec.at("family");
      if (family == "er")
        s.family = deci::datagen::GraphFamily::ER;
      else if (family == "sf")
        s.family = deci::datagen::GraphFamily::SF;
      else
        throw std::invalid_argument("unknown graph family: " + family);
      s.d = spec.value("d", 16);
      s.e = spec.value("e", 64);
      s.n = spec.value("n", 5000);
      std::string noise = spec.value("noise", "gaussian");
      if (noise == "gaussian")
        s.noise = deci::datagen::SyntheticNoise::Gaussian;
      else if (noise == "mlp")
        s.noise = deci::datagen::SyntheticNoise::MlpGaussian;
      else
        throw std::invalid_argument("unknown noise family: " + noise);
      deci::graphs::AdjacencyMatrix g =
          s.family == deci::datagen::GraphFamily::ER
              ? deci::datagen::sample_er_graph(s.d, s.e, rng)
              : deci::datagen::sample_sf_graph(s.d, s.e, rng);
      std::tie(data, gt) = deci::datagen::simulate_anm(g, s, rng);
    }
    double rate = spec.value("missing_rate", 0.0);
    if (rate > 0.0) deci::datagen::apply_mcar_mask(data, rate, rng);
    handle->pkg.data = std::move(data);
    handle->pkg.has_graph = true;
    handle->pkg.graph = gt.graph;
    handle->pkg.cases = gt.cases;
    *out = handle.release();
    return DECI_OK;
  });
}

deci_status deci_dataset_load(const char* dir, deci_dataset** out) {
  if (!dir || !out) return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_IO, [&] {
    auto handle = std::make_unique<deci_dataset>();
    handle->pkg = deci::datagen::load_dataset(dir);
    *out = handle.release();
    return DECI_OK;
  });
}

deci_status deci_dataset_save(const deci_dataset* data, const char* dir) {
  if (!data || !dir) return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_IO, [&] {
    deci::datagen::save_dataset(dir, data->pkg.data,
                                data->pkg.has_graph ? &data->pkg.graph
                                                    : nullptr,
                                data->pkg.cases.empty() ? nullptr
                                                        : &data->pkg.cases);
    return DECI_OK;
  });
}

deci_status deci_dataset_info(const deci_dataset* data, char** json_out) {
  if (!data || !json_out) return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_RUNTIME, [&] {
    json out;
    out["n"] = data->pkg.data.n();
    out["d"] = data->pkg.data.d();
    out["variables"] = specs_to_json(data->pkg.data.specs);
    out["has_graph"] = data->pkg.has_graph;
    std::size_t missing = 0;
    for (auto m : data->pkg.data.missing) missing += m ? 1 : 0;
    out["missing_cells"] = missing;
    json cases = json::array();
    for (const auto& c : data->pkg.cases) {
      json v;
      v["treatment"] = data->pkg.data.specs[c.treatment].name;
      v["value"] = c.value;
      v["reference"] = c.reference;
      json targets = json::array();
      for (std::size_t t : c.targets)
        targets.push_back(data->pkg.data.specs[t].name);
      v["targets"] = targets;
      v["ate"] = c.ate;
      if (c.has_condition) {
        v["condition"] = data->pkg.data.specs[c.condition_node].name;
        v["condition_value"] = c.condition_value;
      }
      cases.push_back(v);
    }
    out["cases"] = cases;
    *json_out = dup_string(out.dump(2));
    return DECI_OK;
  });
}

void deci_dataset_free(deci_dataset* data) { delete data; }

deci_status deci_train(const deci_dataset* data, const char* config_json,
                       uint64_t seed, const char* diag_path,
                       deci_model** out) {
  if (!data || !out) return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_RUNTIME, [&] {
    deci::training::TrainConfig cfg;
    cfg.seed = seed;
    if (diag_path) cfg.diagnostics_path = diag_path;
    if (config_json && *config_json) {
      json c = json::parse(config_json);
      for (auto& [key, value] : c.items()) {
        if (key == "noise") {
          std::string noise = value;
          if (noise == "gaussian")
            cfg.noise = deci::sem::NoiseKind::Gaussian;
          else if (noise == "spline")
            cfg.noise = deci::sem::NoiseKind::Spline;
          else
            throw std::invalid_argument("unknown noise model: " + noise);
        } else if (key == "lambda_s") {
          cfg.lambda_s = value;
        } else if (key == "temperature") {
          cfg.temperature = value;
        } else if (key == "inner_max_steps") {
          cfg.inner_max_steps = value;
        } else if (key == "inner_patience") {
          cfg.inner_patience = value;
        } else if (key == "graph_lr_scale") {
          cfg.graph_lr_scale = value;
        } else if (key == "lr") {
          cfg.lr = value;
        } else if (key == "lr_patience") {
          cfg.lr_patience = value;
        } else if (key == "max_lr_decays") {
          cfg.max_lr_decays = value;
        } else if (key == "outer_max_steps") {
          cfg.outer_max_steps = value;
        } else if (key == "progress_ratio") {
          cfg.progress_ratio = value;
        } else if (key == "rho_multiplier") {
          cfg.rho_multiplier = value;
        } else if (key == "penalty_cap") {
          cfg.penalty_cap = value;
        } else if (key == "batch_size") {
          cfg.batch_size = value;
        } else if (key == "penalty_samples") {
          cfg.penalty_samples = value;
        } else if (key == "dag_tolerance") {
          cfg.dag_tolerance = value;
        } else if (key == "embed_dim") {
          cfg.embed_dim = value;
        } else if (key == "hidden_dim") {
          cfg.hidden_dim = value;
        } else if (key == "latent_dim") {
          cfg.latent_dim = value;
        } else if (key == "clamp_to_true_graph") {
          bool on = value.is_boolean() ? value.get<bool>()
                                       : value.get<double>() != 0.0;
          if (on) {
            if (!data->pkg.has_graph)
              throw std::invalid_argument(
                  "clamp_to_true_graph: dataset carries no graph");
            cfg.clamp_graph = data->pkg.graph;
          }
        } else {
          throw std::invalid_argument("unknown config key: " + key);
        }
      }
    }
    deci::training::TrainResult r = deci::training::train(
        data->pkg.data.specs, data->pkg.data.x, data->pkg.data.missing, cfg);
    if (!r.diag.finite)
      throw std::runtime_error("training diverged to non-finite loss");
    auto handle = std::make_unique<deci_model>();
    handle->model = std::move(r.model);
    handle->posterior = std::move(r.posterior);
    handle->has_diag = true;
    handle->diag = r.diag;
    *out = handle.release();
    return DECI_OK;
  });
}

deci_status deci_model_save(const deci_model* model, const char* path) {
  if (!model || !path) return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_IO, [&] {
    deci::sem::save_checkpoint(path, model->model, model->posterior);
    return DECI_OK;
  });
}

deci_status deci_model_load(const char* path, deci_model** out) {
  if (!path || !out) return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_IO, [&] {
    auto handle = std::make_unique<deci_model>();
    deci::sem::load_checkpoint(path, handle->model, handle->posterior);
    *out = handle.release();
    return DECI_OK;
  });
}

deci_status deci_model_info(const deci_model* model, char** json_out) {
  if (!model || !json_out) return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_RUNTIME, [&] {
    json out;
    out["d"] = model->model.d();
    out["noise"] = model->model.noise_kind == deci::sem::NoiseKind::Gaussian
                       ? "gaussian"
                       : "spline";
    out["variables"] = specs_to_json(model->model.specs);
    deci::num::RngStream rng(0);
    double penalty = expected_penalty(model->posterior, 100, rng);
    out["expected_dag_penalty"] = penalty;
    out["dag_converged"] =
        model->has_diag ? model->diag.dag_converged : penalty < 1e-4;
    if (model->has_diag) {
      out["final_elbo"] = model->diag.final_elbo;
      out["outer_steps"] = model->diag.outer_steps;
      out["inner_steps"] = model->diag.inner_steps;
    }
    *json_out = dup_string(out.dump(2));
    return DECI_OK;
  });
}

void deci_model_free(deci_model* model) { delete model; }

deci_status deci_model_clamp_graph(deci_model* model,
                                   const deci_dataset* data) {
  if (!model || !data) return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_RUNTIME, [&] {
    if (!data->pkg.has_graph)
      throw std::invalid_argument("dataset carries no ground-truth graph");
    if (data->pkg.graph.d != model->model.d())
      throw std::invalid_argument("graph dimension mismatch");
    model->posterior =
        deci::graphs::VariationalGraphPosterior::saturated(data->pkg.graph);
    return DECI_OK;
  });
}

deci_status deci_graph_report(const deci_model* model, int n_samples,
                              uint64_t seed, char** json_out) {
  if (!model || !json_out) return fail(DECI_ERR_INVALID, "null argument");
  if (n_samples < 0) return fail(DECI_ERR_INVALID, "negative sample count");
  return guarded(DECI_ERR_RUNTIME, [&] {
    json out;
    out["edge_probabilities"] =
        adjacency_to_json(model->posterior.edge_probabilities());
    auto [mode, cyclic] = model->posterior.mode();
    out["mode"] = adjacency_to_json(mode.to_tensor());
    out["mode_is_dag"] = !cyclic;
    deci::num::RngStream rng(seed);
    json samples = json::array();
    int rejected = 0;
    for (int s = 0; s < n_samples; ++s) {
      deci::graphs::AdjacencyMatrix g = model->posterior.sample_hard(rng);
      if (!deci::graphs::is_dag(g)) {
        ++rejected;
        continue;
      }
      samples.push_back(adjacency_to_json(g.to_tensor()));
    }
    out["samples"] = samples;
    out["cyclic_rejected"] = rejected;
    *json_out = dup_string(out.dump(2));
    return DECI_OK;
  });
}

deci_status deci_ate(const deci_model* model, const char* query_json,
                     uint64_t seed, char** json_out) {
  if (!model || !query_json || !json_out)
    return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_RUNTIME, [&] {
    auto query = parse_query(model->model.specs, query_json);
    deci::num::RngStream rng(seed);
    deci::inference::EffectResult r = deci::inference::estimate_ate(
        model->model, model->posterior, query, 1000, 2, rng);
    *json_out = dup_string(effect_to_json(model->model.specs, r).dump(2));
    return DECI_OK;
  });
}

deci_status deci_cate(const deci_model* model, const char* query_json,
                      uint64_t seed, char** json_out) {
  if (!model || !query_json || !json_out)
    return fail(DECI_ERR_INVALID, "null argument");
  return guarded(DECI_ERR_RUNTIME, [&] {
    auto query = parse_query(model->model.specs, query_json);
    if (query.condition.empty())
      throw std::invalid_argument("cate requires a non-empty condition");
    deci::num::RngStream rng(seed);
    deci::inference::DeciSampler sampler(model->model);
    deci::inference::EffectResult r = deci::inference::estimate_cate(
        sampler, model->posterior, query, 10, 10000, rng);
    *json_out = dup_string(effect_to_json(model->model.specs, r).dump(2));
    return DECI_OK;
  });
}

deci_status deci_eval(const deci_model* model, const char* graph_csv,
                      const deci_dataset* data, uint64_t seed,
                      char** json_out) {
  if (!data || !json_out) return fail(DECI_ERR_INVALID, "null argument");
  if ((model == nullptr) == (graph_csv == nullptr))
    return fail(DECI_ERR_INVALID,
                "provide exactly one of model / graph csv path");
  return guarded(DECI_ERR_RUNTIME, [&] {
    json out;
    json warnings = json::array();
    deci::num::RngStream rng(seed);

    if (data->pkg.has_graph) {
      deci::metrics::DiscoveryReport rep;
      if (model) {
        rep = deci::metrics::expected_discovery_metrics(
            data->pkg.graph, model->posterior, 100, rng);
      } else {
        auto pred = read_graph_csv(graph_csv, data->pkg.data.d());
        auto point = deci::graphs::VariationalGraphPosterior::saturated(pred);
        rep = deci::metrics::expected_discovery_metrics(data->pkg.graph,
                                                        point, 1, rng);
      }
      json disc;
      disc["adjacency"] = {{"mean", rep.adjacency.mean},
                           {"stddev", rep.adjacency.stddev}};
      disc["orientation"] = {{"mean", rep.orientation.mean},
                             {"stddev", rep.orientation.stddev}};
      disc["causal_accuracy"] = {{"mean", rep.causal.mean},
                                 {"stddev", rep.causal.stddev}};
      out["discovery"] = disc;
    } else {
      warnings.push_back("no graph.csv: discovery metrics skipped");
    }

    if (!data->pkg.cases.empty() && model) {
      std::vector<double> est, truth, cate_est, cate_truth;
      for (const auto& c : data->pkg.cases) {
        deci::inference::CausalQuery q;
        q.treatment = {{c.treatment, c.value}};
        q.reference = {{c.treatment, c.reference}};
        q.targets = c.targets;
        auto r = deci::inference::estimate_ate(model->model, model->posterior,
                                               q, 1000, 2, rng);
        for (std::size_t t = 0; t < c.targets.size(); ++t) {
          est.push_back(r.targets[t].value[0]);
          truth.push_back(c.ate[t]);
        }
      }
      json ate;
      ate["estimates"] = est;
      ate["truth"] = truth;
      ate["rmse"] = deci::metrics::ate_rmse(est, truth);
      out["ate"] = ate;
    } else if (data->pkg.cases.empty()) {
      warnings.push_back("no interventions.json: effect metrics skipped");
    } else {
      warnings.push_back("graph-only evaluation: effect metrics skipped");
    }

    out["warnings"] = warnings;
    *json_out = dup_string(out.dump(2));
    return DECI_OK;
  });
}

}  // extern "C"
