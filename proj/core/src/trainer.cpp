#include "lot/trainer.hpp"

#include <cmath>
#include <numeric>

#include "lot/errors.hpp"
#include "lot/rng.hpp"

namespace lot {

const char* to_string(OptKind kind) {
  switch (kind) {
    case OptKind::sgd: return "sgd";
    case OptKind::sgd_momentum: return "sgd_momentum";
    default: return "adam";
  }
}

OptKind opt_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptKind::sgd;
  if (s == "sgd_momentum") return OptKind::sgd_momentum;
  if (s == "adam") return OptKind::adam;
  throw ConfigError("unknown optimizer: " + s);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be positive");
  if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("TrainConfig: grad_clip must be positive");
}

namespace {

ParamSet zeros_like(const ParamSet& p) {
  ParamSet out;
  out.embedding = Tensor(p.embedding.rows, p.embedding.cols);
  out.w_hidden = Tensor(p.w_hidden.rows, p.w_hidden.cols);
  out.b_hidden = Tensor(p.b_hidden.rows, p.b_hidden.cols);
  out.w_out = Tensor(p.w_out.rows, p.w_out.cols);
  out.b_out = Tensor(p.b_out.rows, p.b_out.cols);
  return out;
}

double global_norm(const Gradients& g) {
  double acc = 0.0;
  g.for_each([&](const char*, const Tensor& t) {
    for (double x : t.v) acc += x * x;
  });
  return std::sqrt(acc);
}

}  // namespace

OptState make_opt_state(const ModelParams& model) {
  OptState st;
  st.m = zeros_like(model.params);
  st.v = zeros_like(model.params);
  return st;
}

void apply_step(ModelParams& model, const Gradients& grads, const TrainConfig& cfg,
                OptState& state) {
  if (!model.params.same_shape(grads))
    throw ConfigError("apply_step: gradient layout does not match model");
  if (!grads.all_finite())
    throw NumericalError("apply_step: non-finite gradient, step refused");

  double scale = 1.0;
  if (cfg.grad_clip) {
    const double norm = global_norm(grads);
    if (norm > *cfg.grad_clip) scale = *cfg.grad_clip / norm;
  }

  state.step += 1;
  const double lr = cfg.learning_rate;
  auto visit = [&](Tensor& w, const Tensor& g, Tensor& m, Tensor& v) {
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      const double gi = g.v[i] * scale;
      switch (cfg.optimizer) {
        case OptKind::sgd:
          w.v[i] -= lr * gi;
          break;
        case OptKind::sgd_momentum:
          m.v[i] = cfg.momentum * m.v[i] + gi;
          w.v[i] -= lr * m.v[i];
          break;
        case OptKind::adam: {
          m.v[i] = cfg.momentum * m.v[i] + (1.0 - cfg.momentum) * gi;
          v.v[i] = cfg.adam_beta2 * v.v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
          const double mhat = m.v[i] / (1.0 - std::pow(cfg.momentum, state.step));
          const double vhat = v.v[i] / (1.0 - std::pow(cfg.adam_beta2, state.step));
          w.v[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
          break;
        }
      }
    }
  };
  visit(model.params.embedding, grads.embedding, state.m.embedding, state.v.embedding);
  visit(model.params.w_hidden, grads.w_hidden, state.m.w_hidden, state.v.w_hidden);
  visit(model.params.b_hidden, grads.b_hidden, state.m.b_hidden, state.v.b_hidden);
  visit(model.params.w_out, grads.w_out, state.m.w_out, state.v.w_out);
  visit(model.params.b_out, grads.b_out, state.m.b_out, state.v.b_out);
}

namespace {

// Shared fine-tuning loop. All stages, CE-only and LOT alike, run through
// this single path; CE stages pass mle_only so the code (and therefore the
// arithmetic) is identical.
TrainResult train_loop(const ModelParams& base, const LabeledCorpus& corpus,
                       const ModelParams* tau, const ModelParams* s,
                       const TrainConfig& tcfg, const LotConfig& lcfg, Role out_role) {
  tcfg.validate();
  lcfg.validate();
  if (corpus.pairs.empty()) throw ConfigError("train: empty corpus");

  TrainResult result;
  result.model = base;
  result.model.role = out_role;
  OptState state = make_opt_state(result.model);

  std::mt19937_64 order_rng(tcfg.seed);
  std::vector<std::size_t> order(corpus.pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    shuffle_vec(order, order_rng);
    EpochStats stats;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      Gradients acc = zeros_like(result.model.params);
      for (std::size_t k = start; k < end; ++k) {
        const DialoguePair& pair = corpus.pairs[order[k]];
        auto [breakdown, grads] = lot_grad(result.model, pair, tau, s, lcfg);
        grads.for_each([&](const char* name, Tensor& g) {
          Tensor* dst = nullptr;
          acc.for_each([&](const char* n, Tensor& t) {
            if (std::string_view(name) == n) dst = &t;
          });
          for (std::size_t i = 0; i < g.v.size(); ++i) dst->v[i] += g.v[i] * inv_b;
        });
        stats.total += breakdown.total;
        stats.mle_term += breakdown.mle_term;
        stats.contrast_term += breakdown.contrast_term;
        stats.reinforce_term += breakdown.reinforce_term;
        ++seen;
      }
      apply_step(result.model, acc, tcfg, state);
    }
    const double inv_n = 1.0 / static_cast<double>(seen);
    stats.total *= inv_n;
    stats.mle_term *= inv_n;
    stats.contrast_term *= inv_n;
    stats.reinforce_term *= inv_n;
    result.history.push_back(stats);
  }
  return result;
}

LotConfig mle_only_config() {
  LotConfig cfg;
  cfg.xi = 1.0;
  cfg.gamma = 0.0;
  cfg.lambda = 0.0;
  cfg.mode = LossMode::mle_only;
  return cfg;
}

}  // namespace

TrainResult train_aux(const ModelParams& base, const LabeledCorpus& corpus,
                      SafetyLabel which, const TrainConfig& cfg) {
  if (base.role != Role::base) throw ConfigError("train_aux: expected a base-role model");
  for (const auto& p : corpus.pairs)
    if (p.label != which)
      throw ConfigError("train_aux: corpus must be pre-filtered to the requested label");
  const Role role = which == SafetyLabel::unsafe ? Role::toxic : Role::safe;
  return train_loop(base, corpus, nullptr, nullptr, cfg, mle_only_config(), role);
}

TrainResult train_lot(const ModelParams& base, const LabeledCorpus& corpus,
                      const ModelParams& tau, const ModelParams& s,
                      const TrainConfig& tcfg, const LotConfig& lcfg) {
  if (tau.role != Role::toxic || s.role != Role::safe)
    throw ConfigError("train_lot: frozen references must have roles toxic and safe");
  if (tau.arch != base.arch || s.arch != base.arch)
    throw ConfigError("train_lot: vocabulary/architecture mismatch with frozen references");
  const bool mle_only = lcfg.mode == LossMode::mle_only;
  return train_loop(base, corpus, mle_only ? nullptr : &tau, mle_only ? nullptr : &s,
                    tcfg, lcfg, Role::output);
}

TrainResult train_baseline(const ModelParams& base, const LabeledCorpus& corpus,
                           BaselineVariant variant, const TrainConfig& cfg) {
  if (base.role != Role::base) throw ConfigError("train_baseline: expected a base-role model");
  if (variant == BaselineVariant::clean_only) {
    LabeledCorpus clean = filter_by_label(corpus, SafetyLabel::safe);
    if (clean.pairs.empty()) throw ConfigError("train_baseline: no safe pairs for clean_only");
    return train_loop(base, clean, nullptr, nullptr, cfg, mle_only_config(), Role::base);
  }
  return train_loop(base, corpus, nullptr, nullptr, cfg, mle_only_config(), Role::base);
}

}  // namespace lot
