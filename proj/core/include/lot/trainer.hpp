#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lot/corpus.hpp"
#include "lot/lot_loss.hpp"
#include "lot/model.hpp"

namespace lot {

enum class OptKind { sgd, sgd_momentum, adam };

const char* to_string(OptKind kind);
OptKind opt_kind_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 5;
  int batch_size = 32;
  double learning_rate = 0.05;
  OptKind optimizer = OptKind::sgd_momentum;
  double momentum = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::optional<double> grad_clip = 5.0;

  void validate() const;
};

struct OptState {
  ParamSet m;  // momentum buffer / first moment
  ParamSet v;  // second moment (adam only)
  long step = 0;
};

OptState make_opt_state(const ModelParams& model);

// In-place parameter update; clips the gradient at global norm grad_clip
// first when set. Refuses non-finite gradients.
void apply_step(ModelParams& model, const Gradients& grads, const TrainConfig& cfg,
                OptState& state);

struct EpochStats {
  double total = 0.0;
  double mle_term = 0.0;
  double contrast_term = 0.0;
  double reinforce_term = 0.0;
};

struct TrainResult {
  ModelParams model;
  std::vector<EpochStats> history;  // per-epoch mean LossBreakdown
};

// Fine-tune on a label-filtered corpus with the plain CE objective; the
// result carries the requested auxiliary role.
TrainResult train_aux(const ModelParams& base, const LabeledCorpus& corpus,
                      SafetyLabel which, const TrainConfig& cfg);

// LOT fine-tune against the frozen references; the result carries role
// `output` and tau/s are never written to.
TrainResult train_lot(const ModelParams& base, const LabeledCorpus& corpus,
                      const ModelParams& tau, const ModelParams& s,
                      const TrainConfig& tcfg, const LotConfig& lcfg);

enum class BaselineVariant { all_data, clean_only };

TrainResult train_baseline(const ModelParams& base, const LabeledCorpus& corpus,
                           BaselineVariant variant, const TrainConfig& cfg);

}  // namespace lot
