#include "lot/lot_loss.hpp"

#include <cmath>

#include "lot/errors.hpp"

namespace lot {

const char* to_string(LossMode mode) {
  switch (mode) {
    case LossMode::full: return "full";
    case LossMode::contrastor_only: return "contrastor_only";
    case LossMode::reinforcer_only: return "reinforcer_only";
    default: return "mle_only";
  }
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "full") return LossMode::full;
  if (s == "contrastor_only") return LossMode::contrastor_only;
  if (s == "reinforcer_only") return LossMode::reinforcer_only;
  if (s == "mle_only") return LossMode::mle_only;
  throw ConfigError("unknown loss mode: " + s);
}

double LotConfig::effective_gamma() const {
  return (mode == LossMode::reinforcer_only || mode == LossMode::mle_only) ? 0.0 : gamma;
}

double LotConfig::effective_lambda() const {
  return (mode == LossMode::contrastor_only || mode == LossMode::mle_only) ? 0.0 : lambda;
}

void LotConfig::validate() const {
  if (!(xi > 0.0)) throw ConfigError("LotConfig: xi must be positive (the CE anchor is never disabled)");
  if (gamma < 0.0 || lambda < 0.0) throw ConfigError("LotConfig: gamma and lambda must be nonnegative");
  if (!(kl_cap > 0.0)) throw ConfigError("LotConfig: kl_cap must be positive");
  if (!(eps_smooth > 0.0)) throw ConfigError("LotConfig: eps_smooth must be positive");
}

double mle_loss(const std::vector<Dist>& beta_dists, const std::vector<int>& gold) {
  if (beta_dists.size() != gold.size() || gold.empty())
    throw ArgumentError("mle_loss: distribution/gold length mismatch");
  double acc = 0.0;
  for (std::size_t t = 0; t < gold.size(); ++t)
    acc -= std::log(beta_dists[t][static_cast<std::size_t>(gold[t])]);
  return acc / static_cast<double>(gold.size());
}

namespace {

LossBreakdown lot_loss_impl(const std::vector<Dist>& beta_dists,
                            const std::vector<Dist>& tau_dists,
                            const std::vector<Dist>& s_dists,
                            const std::vector<int>& gold, const LotConfig& cfg,
                            std::vector<Dist>* dist_grads) {
  cfg.validate();
  if (beta_dists.size() != gold.size() || gold.empty())
    throw ArgumentError("lot_loss: distribution/gold length mismatch");
  const bool mle_only = cfg.mode == LossMode::mle_only;
  if (!mle_only && (tau_dists.size() != gold.size() || s_dists.size() != gold.size()))
    throw ArgumentError("lot_loss: parallel distribution list length mismatch");

  const std::size_t T = gold.size();
  const double inv_t = 1.0 / static_cast<double>(T);
  const double gamma = cfg.effective_gamma();
  const double lambda = cfg.effective_lambda();

  LossBreakdown out;
  out.n_positions = static_cast<int>(T);

  if (dist_grads) {
    dist_grads->assign(T, Dist());
    for (std::size_t t = 0; t < T; ++t) (*dist_grads)[t].assign(beta_dists[t].size(), 0.0);
  }

  for (std::size_t t = 0; t < T; ++t) {
    const Dist& p = beta_dists[t];
    const double pg = p[static_cast<std::size_t>(gold[t])];
    out.mle_term -= std::log(pg) * inv_t;
    if (dist_grads)
      (*dist_grads)[t][static_cast<std::size_t>(gold[t])] -= cfg.xi * inv_t / pg;

    if (mle_only) continue;

    auto add_div = [&](const Dist& ref, double coeff, double& term) {
      DivergenceValue d = cfg.div_kind == DivKind::JS ? js(p, ref) : kl(p, ref);
      bool clamped = false;
      if (cfg.div_kind == DivKind::KL) {
        d = clamp(d, cfg.kl_cap);
        clamped = d.clamped;
      }
      term += d.value_nats * inv_t;
      if (dist_grads && coeff != 0.0 && !clamped) {
        const auto g =
            cfg.div_kind == DivKind::JS ? js_grad_p(p, ref) : kl_grad_p(p, ref);
        for (std::size_t i = 0; i < g.size(); ++i)
          (*dist_grads)[t][i] += coeff * inv_t * g[i];
      }
    };
    add_div(tau_dists[t], -gamma, out.contrast_term);
    add_div(s_dists[t], +lambda, out.reinforce_term);
  }

  out.total = cfg.xi * out.mle_term - gamma * out.contrast_term + lambda * out.reinforce_term;
  if (!std::isfinite(out.total)) throw NumericalError("lot_loss: non-finite total");
  return out;
}

}  // namespace

LossBreakdown lot_loss(const std::vector<Dist>& beta_dists,
                       const std::vector<Dist>& tau_dists,
                       const std::vector<Dist>& s_dists,
                       const std::vector<int>& gold, const LotConfig& cfg) {
  return lot_loss_impl(beta_dists, tau_dists, s_dists, gold, cfg, nullptr);
}

LossBreakdown lot_loss_grad(const std::vector<Dist>& beta_dists,
                            const std::vector<Dist>& tau_dists,
                            const std::vector<Dist>& s_dists,
                            const std::vector<int>& gold, const LotConfig& cfg,
                            std::vector<Dist>& dist_grads) {
  return lot_loss_impl(beta_dists, tau_dists, s_dists, gold, cfg, &dist_grads);
}

std::pair<LossBreakdown, Gradients> lot_grad(const ModelParams& model,
                                             const DialoguePair& pair,
                                             const ModelParams* frozen_tau,
                                             const ModelParams* frozen_s,
                                             const LotConfig& cfg) {
  cfg.validate();
  const bool mle_only = cfg.mode == LossMode::mle_only;
  if (!mle_only) {
    if (!frozen_tau || !frozen_s)
      throw ConfigError("lot_grad: frozen references required outside mle_only mode");
    if (frozen_tau->arch != model.arch || frozen_s->arch != model.arch)
      throw ConfigError("lot_grad: frozen models must share the learning model's architecture");
  }

  auto beta_dists = sequence_forward(model, pair.context, pair.response);
  std::vector<Dist> tau_dists, s_dists;
  if (!mle_only) {
    tau_dists = sequence_forward(*frozen_tau, pair.context, pair.response);
    s_dists = sequence_forward(*frozen_s, pair.context, pair.response);
  }

  std::vector<Dist> dist_grads;
  const LossBreakdown breakdown =
      lot_loss_impl(beta_dists, tau_dists, s_dists, pair.response, cfg, &dist_grads);

  Gradients grads;
  grads.embedding = Tensor(model.params.embedding.rows, model.params.embedding.cols);
  grads.w_hidden = Tensor(model.params.w_hidden.rows, model.params.w_hidden.cols);
  grads.b_hidden = Tensor(model.params.b_hidden.rows, model.params.b_hidden.cols);
  grads.w_out = Tensor(model.params.w_out.rows, model.params.w_out.cols);
  grads.b_out = Tensor(model.params.b_out.rows, model.params.b_out.cols);
  backprop_example(model, pair.context, pair.response, dist_grads, 1.0, grads);
  return {breakdown, std::move(grads)};
}

}  // namespace lot
