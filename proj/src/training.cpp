#include "deci/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace deci::training {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

AugLagState auglag_update(const AugLagState& s, double p2,
                          double progress_ratio, double rho_multiplier) {
  if (p2 < 0.0) throw std::invalid_argument("auglag_update: negative penalty");
  AugLagState out = s;
  if (p2 < progress_ratio * s.last_penalty)
    out.alpha += s.rho * p2;
  else
    out.rho *= rho_multiplier;
  out.last_penalty = p2;
  out.outer_step += 1;
  return out;
}

void ImputationNetwork::init(std::size_t dim, std::size_t hidden,
                             RngStream& rng) {
  d = dim;
  enc = num::MlpBlock(2 * dim, hidden, 2 * dim);
  enc.init(rng, /*zero_output=*/true);
}

ElboParts elbo_estimate(Tape& t, const sem::DeciModel& model,
                        const sem::DeciModel::Vars& mv,
                        const VariationalGraphPosterior& q, Var gamma_v,
                        Var theta_v, const GraphPrior& prior,
                        const Tensor& batch, std::size_t n_total,
                        double temperature, RngStream& rng) {
  if (batch.rows() == 0) throw std::invalid_argument("elbo: empty batch");
  double sf = (double)n_total / (double)batch.rows();
  auto s = q.sample_arm(t, gamma_v, temperature, rng);
  Var ll = scale(t, model.log_likelihood(t, mv, batch, s.g), sf);
  Var pr = prior.log_density_unnormalized(t, s.g);
  Var ent = q.entropy(t, gamma_v, theta_v);
  ElboParts parts{add(t, add(t, ll, pr), ent), ll, pr, ent,
                  Tensor::zeros(s.u.shape)};
  if (s.anti_differs) {
    double f_main = t.value(ll).data[0] + t.value(pr).data[0];
    double f_anti = sf * model.log_likelihood(batch, s.anti) +
                    prior.log_density_unnormalized(s.anti.to_tensor());
    double diff = f_anti - f_main;
    for (std::size_t p = 0; p < s.u.size(); ++p)
      parts.arm_theta_grad.data[p] = diff * (s.u.data[p] - 0.5);
  }
  return parts;
}

ElboParts elbo_missing(Tape& t, const sem::DeciModel& model,
                       const sem::DeciModel::Vars& mv,
                       const ImputationNetwork& imputer,
                       const num::MlpBlock::Vars& iv,
                       const VariationalGraphPosterior& q, Var gamma_v,
                       Var theta_v, const GraphPrior& prior,
                       const Tensor& batch,
                       const std::vector<std::uint8_t>& mask,
                       std::size_t n_total, double temperature,
                       RngStream& rng) {
  std::size_t n = batch.rows(), D = batch.cols();
  if (n == 0) throw std::invalid_argument("elbo: empty batch");
  if (mask.size() != n * D) throw std::invalid_argument("elbo: mask size");

  auto s = q.sample_arm(t, gamma_v, temperature, rng);

  // encoder input: zero-filled values next to the observed indicator
  Tensor enc_in = Tensor::zeros({n, 2 * D});
  Tensor miss_mask = Tensor::zeros({n, D});
  Tensor filled = batch;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < D; ++j) {
      bool missing = mask[s * D + j] != 0;
      if (missing && model.specs[j].kind != sem::VarKind::Continuous)
        throw std::invalid_argument("elbo_missing: missing discrete entry");
      miss_mask.at(s, j) = missing ? 1.0 : 0.0;
      filled.at(s, j) = missing ? 0.0 : batch.at(s, j);
      enc_in.at(s, j) = filled.at(s, j);
      enc_in.at(s, D + j) = missing ? 0.0 : 1.0;
    }

  Var enc_out = imputer.enc.apply(t, iv, t.constant(std::move(enc_in)));
  Var means = slice_cols(t, enc_out, 0, D);
  Var logvars = slice_cols(t, enc_out, D, 2 * D);

  Tensor eps = Tensor::zeros({n, D});
  for (double& v : eps.data) v = rng.normal();
  Var ximp = add(t, means,
                 mul(t, exp_(t, scale(t, logvars, 0.5)),
                     t.constant(std::move(eps))));
  Var xvar = select(t, miss_mask, ximp, t.constant(std::move(filled)));

  Var ll = model.log_likelihood_vx(t, mv, xvar, s.g);
  // 0.5 * (1 + ln 2pi + logvar) per missing cell
  Var imp_ent = scale(
      t,
      sum(t, mul(t, t.constant(miss_mask), add_const(t, logvars, 1.0 + kLog2Pi))),
      0.5);
  double sf = (double)n_total / (double)n;
  Var data_term = scale(t, add(t, ll, imp_ent), sf);
  Var pr = prior.log_density_unnormalized(t, s.g);
  Var ent = q.entropy(t, gamma_v, theta_v);
  ElboParts parts{add(t, add(t, data_term, pr), ent), scale(t, ll, sf), pr,
                  ent, Tensor::zeros(s.u.shape)};
  if (s.anti_differs) {
    // same imputation draw; the imputation entropy does not depend on the
    // orientations and cancels in the antithetic difference
    double f_main =
        sf * t.value(ll).data[0] + t.value(pr).data[0];
    double f_anti = sf * model.log_likelihood(t.value(xvar), s.anti) +
                    prior.log_density_unnormalized(s.anti.to_tensor());
    double diff = f_anti - f_main;
    for (std::size_t p = 0; p < s.u.size(); ++p)
      parts.arm_theta_grad.data[p] = diff * (s.u.data[p] - 0.5);
  }
  return parts;
}

TrainResult train(const std::vector<sem::VariableSpec>& specs, const Tensor& x,
                  const std::vector<std::uint8_t>& missing,
                  const TrainConfig& cfg) {
  std::size_t n = x.rows(), D = specs.size();
  if (n == 0) throw std::invalid_argument("train: empty dataset");
  if (x.cols() != D) throw std::invalid_argument("train: width mismatch");
  bool has_missing = false;
  for (auto m : missing) has_missing |= m != 0;
  if (has_missing && missing.size() != n * D)
    throw std::invalid_argument("train: mask size mismatch");

  RngStream root(cfg.seed);
  RngStream init_rng = root.child(1);
  RngStream run_rng = root.child(2);

  TrainResult r;
  r.model.specs = specs;
  r.model.noise_kind = cfg.noise;
  r.model.embed_dim = cfg.embed_dim;
  r.model.hidden_dim = cfg.hidden_dim;
  r.model.latent_dim = cfg.latent_dim;
  r.model.init(init_rng);
  bool clamped = cfg.clamp_graph.d != 0;
  if (clamped && cfg.clamp_graph.d != D)
    throw std::invalid_argument("train: clamp graph dimension mismatch");
  r.posterior = clamped ? VariationalGraphPosterior::saturated(cfg.clamp_graph)
                        : VariationalGraphPosterior(D);

  ImputationNetwork imputer;
  if (has_missing) imputer.init(D, cfg.hidden_dim, init_rng);

  std::vector<Tensor*> params = r.model.params();
  if (has_missing)
    for (Tensor* p : imputer.params()) params.push_back(p);
  std::vector<Tensor*> graph_params;
  if (!clamped) {
    graph_params.push_back(&r.posterior.gamma);
    graph_params.push_back(&r.posterior.theta);
  }

  GraphPrior prior;
  prior.lambda_s = cfg.lambda_s;
  AugLagState st;

  std::ofstream diag;
  if (!cfg.diagnostics_path.empty()) diag.open(cfg.diagnostics_path);
  auto log_line = [&](int outer, long long step, double elbo, double penalty,
                      double lr) {
    if (!diag.is_open()) return;
    nlohmann::json j;
    j["outer"] = outer;
    j["step"] = step;
    j["elbo"] = elbo;
    j["penalty"] = penalty;
    j["rho"] = st.rho;
    j["alpha"] = st.alpha;
    j["lr"] = lr;
    diag << j.dump() << "\n";
  };

  std::size_t bs = cfg.effective_batch(n);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  auto penalty_estimate = [&]() {
    double p = 0.0;
    for (std::size_t s = 0; s < cfg.penalty_samples; ++s)
      p += graphs::dag_penalty(
          r.posterior.sample_hard(run_rng).to_tensor());
    return p / (double)cfg.penalty_samples;
  };

  double last_p2 = std::numeric_limits<double>::infinity();
  int consecutive_dag = 0;
  double last_epoch_elbo = 0.0;

  while (st.outer_step < cfg.outer_max_steps && st.rho <= cfg.penalty_cap &&
         st.alpha <= cfg.penalty_cap && r.diag.finite) {
    // once the posterior has settled on DAGs the inner objective no longer
    // responds to rho/alpha; fast-forward the schedule to its cap
    if (consecutive_dag >= 2) {
      st = auglag_update(st, last_p2, cfg.progress_ratio, cfg.rho_multiplier);
      prior.rho = st.rho;
      prior.alpha = st.alpha;
      log_line(st.outer_step, r.diag.inner_steps, last_epoch_elbo, last_p2,
               0.0);
      continue;
    }

    num::AdamState adam;
    adam.step_size = cfg.lr;
    adam.init(params);
    num::AdamState adam_g;
    // First outer step: posterior logits move slowly so edge orientations
    // stay exploratory while the structural equations and noise flows fit.
    // Later outer steps use the full rate so the posterior can converge on
    // the likelihood gap the fitted model exposes.
    adam_g.step_size =
        cfg.lr * (st.outer_step == 0 ? cfg.graph_lr_scale : 1.0);
    adam_g.init(graph_params);
    double best = std::numeric_limits<double>::infinity();
    int since = 0, decays = 0, step = 0;
    bool stop = false;

    while (!stop && step < cfg.inner_max_steps) {
      // one epoch
      for (std::size_t i = n; i > 1; --i)
        std::swap(perm[i - 1], perm[run_rng.uniform_index(i)]);
      double epoch_loss = 0.0;
      int epoch_steps = 0;
      for (std::size_t b0 = 0;
           b0 < n && step < cfg.inner_max_steps && r.diag.finite;
           b0 += bs) {
        std::size_t bn = std::min(bs, n - b0);
        Tensor batch = Tensor::zeros({bn, D});
        std::vector<std::uint8_t> bmask(has_missing ? bn * D : 0);
        for (std::size_t s = 0; s < bn; ++s) {
          std::size_t row = perm[b0 + s];
          for (std::size_t j = 0; j < D; ++j) {
            batch.at(s, j) = x.at(row, j);
            if (has_missing) bmask[s * D + j] = missing[row * D + j];
          }
        }

        Tape t;
        auto mv = r.model.register_params(t);
        Var gv = t.input(r.posterior.gamma);
        Var tv = t.input(r.posterior.theta);
        num::MlpBlock::Vars iv;
        if (has_missing) iv = imputer.enc.register_params(t);

        ElboParts parts =
            has_missing
                ? elbo_missing(t, r.model, mv, imputer, iv, r.posterior, gv,
                               tv, prior, batch, bmask, n, cfg.temperature,
                               run_rng)
                : elbo_estimate(t, r.model, mv, r.posterior, gv, tv, prior,
                                batch, n, cfg.temperature, run_rng);
        double elbo = t.value(parts.elbo).data[0];
        if (!std::isfinite(elbo)) {
          r.diag.finite = false;
          break;
        }
        t.backward(parts.elbo);

        std::vector<Tensor> grads;
        r.model.read_grads(t, mv, grads);
        if (has_missing) {
          std::vector<Tensor> ig;
          imputer.enc.read_grads(t, iv, ig);
          for (auto& g : ig) grads.push_back(std::move(g));
        }
        std::vector<Tensor> ggrads;
        if (!clamped) {
          auto push_grad = [&](Var p) {
            const Tensor& g = t.grad(p);
            ggrads.push_back(g.data.empty() ? Tensor::zeros(t.value(p).shape)
                                            : g);
          };
          push_grad(gv);
          push_grad(tv);
          if (parts.arm_theta_grad.size() == ggrads[1].size())
            for (std::size_t p = 0; p < ggrads[1].size(); ++p)
              ggrads[1].data[p] += parts.arm_theta_grad.data[p];
        }
        for (Tensor& g : grads)  // ascent on the ELBO
          for (double& v : g.data) v = -v;
        for (Tensor& g : ggrads)
          for (double& v : g.data) v = -v;
        adam.update(params, grads);
        if (!clamped) adam_g.update(graph_params, ggrads);

        epoch_loss += -elbo;
        ++epoch_steps;
        ++step;
        ++r.diag.inner_steps;
      }
      if (!r.diag.finite || epoch_steps == 0) break;
      epoch_loss /= epoch_steps;
      last_epoch_elbo = -epoch_loss;
      log_line(st.outer_step, r.diag.inner_steps, -epoch_loss, last_p2,
               adam.step_size);

      if (epoch_loss < best - 1e-9) {
        best = epoch_loss;
        since = 0;
      } else {
        since += epoch_steps;
        if (since >= cfg.inner_patience) {
          stop = true;
        } else if (since >= cfg.lr_patience) {
          ++decays;
          if (decays > cfg.max_lr_decays) {
            stop = true;
          } else {
            adam.step_size /= cfg.lr_decay_factor;
            adam_g.step_size /= cfg.lr_decay_factor;
            since = 0;
          }
        }
      }
    }
    if (!r.diag.finite) break;

    double p2 = penalty_estimate();
    consecutive_dag = p2 < cfg.dag_tolerance ? consecutive_dag + 1 : 0;
    last_p2 = p2;
    st = auglag_update(st, p2, cfg.progress_ratio, cfg.rho_multiplier);
    prior.rho = st.rho;
    prior.alpha = st.alpha;
    log_line(st.outer_step, r.diag.inner_steps, last_epoch_elbo, p2,
             adam.step_size);
  }

  r.diag.outer_steps = st.outer_step;
  r.diag.final_penalty = std::isfinite(last_p2) ? last_p2 : -1.0;
  r.diag.final_elbo = last_epoch_elbo;
  r.diag.dag_converged = last_p2 < cfg.dag_tolerance;
  return r;
}

}  // namespace deci::training
