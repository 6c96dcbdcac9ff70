// Command-line front end; talks to the library exclusively through the C API.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "deci.h"

using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitWarnings = 2;

int die(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return kExitError;
}

int die_api(const std::string& what) {
  std::cerr << "error: " << what << ": " << deci_last_error() << "\n";
  return kExitError;
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  deci_string_free(s);
  return out;
}

// flat `key = value` config file -> JSON object; blank lines and lines
// starting with '#' are ignored
json parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  json out = json::object();
  std::string line;
  while (std::getline(f, line)) {
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line missing '=': " + line);
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::runtime_error("malformed config line: " + line);
    try {
      std::size_t used = 0;
      double num = std::stod(value, &used);
      if (used == value.size()) {
        out[key] = num;
        continue;
      }
    } catch (...) {
    }
    out[key] = value;
  }
  return out;
}

void apply_overrides(json& cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got: " + kv);
    std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    try {
      std::size_t used = 0;
      double num = std::stod(value, &used);
      if (used == value.size()) {
        cfg[key] = num;
        continue;
      }
    } catch (...) {
    }
    cfg[key] = value;
  }
}

void write_matrix_csv(const std::string& path, const json& rows,
                      bool as_int) {
  std::ofstream f(path);
  for (const auto& row : rows) {
    bool first = true;
    for (const auto& v : row) {
      if (!first) f << ",";
      first = false;
      if (as_int)
        f << (int)std::llround(v.get<double>());
      else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
        f << buf;
      }
    }
    f << "\n";
  }
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream f(out_path);
    f << text << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deci: end-to-end causal discovery and treatment-effect "
               "estimation"};
  app.set_version_flag("--version", deci_version());
  int threads = 1;
  app.add_option("--threads", threads, "internal parallelism bound")
      ->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "create a synthetic dataset");
  std::string csuite, family = "er", noise = "gaussian", gen_out;
  std::vector<int> er_args, sf_args;
  int gen_n = 5000;
  double missing_rate = 0.0;
  std::uint64_t gen_seed = 1;
  gen->add_option("--csuite", csuite, "benchmark dataset name");
  gen->add_option("--er", er_args, "random ER graph: node count, edge count")
      ->expected(2);
  gen->add_option("--sf", sf_args,
                  "random scale-free graph: node count, edge count")
      ->expected(2);
  gen->add_option("--noise", noise, "gaussian | mlp")->capture_default_str();
  gen->add_option("--n", gen_n, "sample count")->capture_default_str();
  gen->add_option("--missing-rate", missing_rate, "MCAR cell rate")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "rng seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "fit a model to a dataset");
  std::string tr_data, tr_out, tr_config, tr_noise, tr_diag;
  std::vector<std::string> tr_sets;
  std::uint64_t tr_seed = 1;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint output path")->required();
  tr->add_option("--config", tr_config,
                 "flat key = value config file (see deci.h for keys)");
  tr->add_option("--set", tr_sets, "config override, key=value (repeatable)");
  tr->add_option("--noise", tr_noise, "gaussian | spline (overrides config)");
  tr->add_option("--diagnostics", tr_diag, "per-epoch JSONL log path");
  tr->add_option("--seed", tr_seed, "rng seed")->capture_default_str();

  // graph
  auto* gr = app.add_subcommand("graph", "export the learned graph posterior");
  std::string gr_model, gr_out;
  int gr_samples = 10;
  std::uint64_t gr_seed = 1;
  gr->add_option("--model", gr_model, "checkpoint path")->required();
  gr->add_option("--out", gr_out, "output directory")->required();
  gr->add_option("--samples", gr_samples, "hard DAG samples to write")
      ->capture_default_str();
  gr->add_option("--seed", gr_seed, "rng seed")->capture_default_str();

  // ate / cate
  auto* ate = app.add_subcommand("ate", "average treatment effect");
  auto* cate = app.add_subcommand("cate", "conditional average treatment "
                                          "effect");
  std::string q_model, q_query, q_out;
  std::uint64_t q_seed = 1;
  for (auto* cmd : {ate, cate}) {
    cmd->add_option("--model", q_model, "checkpoint path")->required();
    cmd->add_option("--query", q_query, "query JSON file")->required();
    cmd->add_option("--out", q_out, "result JSON path (default stdout)");
    cmd->add_option("--seed", q_seed, "rng seed")->capture_default_str();
  }

  // eval
  auto* ev = app.add_subcommand("eval", "score a model or graph against "
                                        "ground truth");
  std::string ev_model, ev_graph, ev_data, ev_out;
  std::uint64_t ev_seed = 1;
  ev->add_option("--model", ev_model, "checkpoint path");
  ev->add_option("--graph", ev_graph, "adjacency CSV path");
  ev->add_option("--data", ev_data, "dataset directory with ground truth")
      ->required();
  ev->add_option("--out", ev_out, "report JSON path (default stdout)");
  ev->add_option("--seed", ev_seed, "rng seed")->capture_default_str();

  app.require_subcommand(0, 1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return kExitError;
  }
  if (deci_set_threads(threads) != DECI_OK) return die_api("set threads");

  try {
    if (gen->parsed()) {
      json spec;
      if (!csuite.empty()) {
        spec["csuite"] = csuite;
      } else if (!er_args.empty() || !sf_args.empty()) {
        const auto& args = er_args.empty() ? sf_args : er_args;
        spec["family"] = er_args.empty() ? "sf" : "er";
        spec["d"] = args[0];
        spec["e"] = args[1];
        spec["noise"] = noise == "mlp" ? "mlp" : noise;
        spec["n"] = gen_n;
      } else {
        return die("generate needs --csuite or --er/--sf (valid csuite "
                   "names: lingauss linexp nonlingauss nonlin_simpson "
                   "symprod_simpson large_backdoor weak_arrows cat_to_cts "
                   "cts_to_cat mixed_simpson large_backdoor_binary_t "
                   "weak_arrows_binary_t mixed_confounding)");
      }
      if (missing_rate > 0.0) spec["missing_rate"] = missing_rate;
      deci_dataset* data = nullptr;
      if (deci_dataset_generate(spec.dump().c_str(), gen_seed, &data) !=
          DECI_OK) {
        std::cerr << "error: generate: " << deci_last_error()
                  << "\nvalid csuite names: lingauss linexp nonlingauss "
                     "nonlin_simpson symprod_simpson large_backdoor "
                     "weak_arrows cat_to_cts cts_to_cat mixed_simpson "
                     "large_backdoor_binary_t weak_arrows_binary_t "
                     "mixed_confounding\n";
        return kExitError;
      }
      deci_status st = deci_dataset_save(data, gen_out.c_str());
      deci_dataset_free(data);
      if (st != DECI_OK) return die_api("save dataset");
      std::cout << "wrote dataset to " << gen_out << "\n";
      return kExitOk;
    }

    if (tr->parsed()) {
      json cfg = tr_config.empty() ? json::object()
                                   : parse_config_file(tr_config);
      apply_overrides(cfg, tr_sets);
      if (!tr_noise.empty()) cfg["noise"] = tr_noise;
      deci_dataset* data = nullptr;
      if (deci_dataset_load(tr_data.c_str(), &data) != DECI_OK)
        return die_api("load dataset");
      deci_model* model = nullptr;
      deci_status st =
          deci_train(data, cfg.dump().c_str(), tr_seed,
                     tr_diag.empty() ? nullptr : tr_diag.c_str(), &model);
      deci_dataset_free(data);
      if (st != DECI_OK) return die_api("train");
      if (deci_model_save(model, tr_out.c_str()) != DECI_OK) {
        deci_model_free(model);
        return die_api("save checkpoint");
      }
      char* info_raw = nullptr;
      bool converged = true;
      if (deci_model_info(model, &info_raw) == DECI_OK) {
        json info = json::parse(take_string(info_raw));
        converged = info.value("dag_converged", true);
        std::cout << info.dump(2) << "\n";
      }
      deci_model_free(model);
      if (!converged) {
        std::cerr << "warning: posterior did not reach the DAG tolerance\n";
        return kExitWarnings;
      }
      return kExitOk;
    }

    if (gr->parsed()) {
      deci_model* model = nullptr;
      if (deci_model_load(gr_model.c_str(), &model) != DECI_OK)
        return die_api("load checkpoint");
      char* raw = nullptr;
      deci_status st = deci_graph_report(model, gr_samples, gr_seed, &raw);
      deci_model_free(model);
      if (st != DECI_OK) return die_api("graph report");
      json rep = json::parse(take_string(raw));
      std::filesystem::create_directories(gr_out);
      write_matrix_csv(gr_out + "/edge_probabilities.csv",
                       rep["edge_probabilities"], false);
      write_matrix_csv(gr_out + "/mode.csv", rep["mode"], true);
      std::filesystem::create_directories(gr_out + "/samples");
      int idx = 0;
      for (const auto& s : rep["samples"]) {
        char name[64];
        std::snprintf(name, sizeof name, "/samples/sample_%03d.csv", idx++);
        write_matrix_csv(gr_out + name, s, true);
      }
      std::cout << "wrote " << idx << " DAG samples ("
                << rep["cyclic_rejected"].get<int>()
                << " cyclic draws rejected); mode "
                << (rep["mode_is_dag"].get<bool>() ? "is" : "is NOT")
                << " a DAG\n";
      return kExitOk;
    }

    if (ate->parsed() || cate->parsed()) {
      std::ifstream qf(q_query);
      if (!qf) return die("cannot open query file " + q_query);
      std::stringstream qs;
      qs << qf.rdbuf();
      deci_model* model = nullptr;
      if (deci_model_load(q_model.c_str(), &model) != DECI_OK)
        return die_api("load checkpoint");
      char* raw = nullptr;
      deci_status st =
          ate->parsed()
              ? deci_ate(model, qs.str().c_str(), q_seed, &raw)
              : deci_cate(model, qs.str().c_str(), q_seed, &raw);
      deci_model_free(model);
      if (st != DECI_OK)
        return die_api(ate->parsed() ? "ate" : "cate");
      emit(take_string(raw), q_out);
      return kExitOk;
    }

    if (ev->parsed()) {
      if (ev_model.empty() == ev_graph.empty())
        return die("eval needs exactly one of --model / --graph");
      deci_dataset* data = nullptr;
      if (deci_dataset_load(ev_data.c_str(), &data) != DECI_OK)
        return die_api("load dataset");
      deci_model* model = nullptr;
      if (!ev_model.empty() &&
          deci_model_load(ev_model.c_str(), &model) != DECI_OK) {
        deci_dataset_free(data);
        return die_api("load checkpoint");
      }
      char* raw = nullptr;
      deci_status st =
          deci_eval(model, ev_graph.empty() ? nullptr : ev_graph.c_str(),
                    data, ev_seed, &raw);
      if (model) deci_model_free(model);
      deci_dataset_free(data);
      if (st != DECI_OK) return die_api("eval");
      emit(take_string(raw), ev_out);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    return die(e.what());
  }
  return kExitError;
}
