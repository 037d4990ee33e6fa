#pragma once

#include "lot/divergence.hpp"
#include "lot/model.hpp"

namespace lot {

enum class LossMode { full, contrastor_only, reinforcer_only, mle_only };

const char* to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& s);

// Coefficients and switches of the three-term objective:
//   total = xi * CE - gamma * d(beta, toxic) + lambda * d(beta, safe).
struct LotConfig {
  double xi = 1.0;
  double gamma = 0.5;
  double lambda = 0.5;
  DivKind div_kind = DivKind::JS;
  LossMode mode = LossMode::full;
  double kl_cap = 10.0;
  double eps_smooth = 1e-8;

  // Mode-adjusted coefficients: contrastor_only zeroes lambda,
  // reinforcer_only zeroes gamma, mle_only zeroes both.
  double effective_gamma() const;
  double effective_lambda() const;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double mle_term = 0.0;        // mean CE, nats
  double contrast_term = 0.0;   // mean d(beta, toxic), pre-sign
  double reinforce_term = 0.0;  // mean d(beta, safe)
  int n_positions = 0;
};

// Mean over positions of -ln p(gold_t).
double mle_loss(const std::vector<Dist>& beta_dists, const std::vector<int>& gold);

// Per-batch objective over teacher-forced parallel distributions; gradients
// flow only through beta_dists (the frozen references are constants). Under
// KL each per-position divergence is clamped at kl_cap before averaging.
LossBreakdown lot_loss(const std::vector<Dist>& beta_dists,
                       const std::vector<Dist>& tau_dists,
                       const std::vector<Dist>& s_dists,
                       const std::vector<int>& gold, const LotConfig& cfg);

// As lot_loss, and fills d(total)/d(beta_dists).
LossBreakdown lot_loss_grad(const std::vector<Dist>& beta_dists,
                            const std::vector<Dist>& tau_dists,
                            const std::vector<Dist>& s_dists,
                            const std::vector<int>& gold, const LotConfig& cfg,
                            std::vector<Dist>& dist_grads);

// One example: forward all three models, assemble the objective, backprop
// into the learning model. frozen_tau / frozen_s may be null only in
// mle_only mode.
std::pair<LossBreakdown, Gradients> lot_grad(const ModelParams& model,
                                             const DialoguePair& pair,
                                             const ModelParams* frozen_tau,
                                             const ModelParams* frozen_s,
                                             const LotConfig& cfg);

}  // namespace lot
