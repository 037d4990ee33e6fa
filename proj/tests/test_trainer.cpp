#include <cmath>

#include <doctest.h>

#include "lot/errors.hpp"
#include "lot/eval.hpp"
#include "lot/trainer.hpp"

using namespace lot;

namespace {

const Arch kArch{50, 8, 16, 6};

LabeledCorpus small_corpus(std::uint64_t seed = 1) {
  GenConfig cfg;
  cfg.n_pairs = 200;
  cfg.vocab_size = 50;
  cfg.toxic_fraction = 0.4;
  return gen_synthetic_corpus(cfg, seed);
}

TrainConfig quick_train(int epochs = 3) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.05;
  cfg.seed = 7;
  return cfg;
}

double mean_gold_prob(const ModelParams& m, const LabeledCorpus& corpus) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& pair : corpus.pairs) {
    const auto dists = sequence_forward(m, pair.context, pair.response);
    for (std::size_t t = 0; t < pair.response.size(); ++t)
      acc += dists[t][static_cast<std::size_t>(pair.response[t])];
    n += pair.response.size();
  }
  return acc / static_cast<double>(n);
}

}  // namespace

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("apply_step: zero gradients leave parameters unchanged") {
  auto m = init_model(kArch, 1);
  const auto before = save_checkpoint(m);
  Gradients g = make_opt_state(m).m;  // zero-filled, same layout
  auto state = make_opt_state(m);
  apply_step(m, g, quick_train(), state);
  CHECK(save_checkpoint(m) == before);
}

TEST_CASE("apply_step: sgd clip algebra") {
  auto m = init_model(kArch, 1);
  Gradients g = make_opt_state(m).m;
  // A single gradient entry of norm 5.
  g.w_out.v[0] = 5.0;
  TrainConfig cfg = quick_train();
  cfg.optimizer = OptKind::sgd;
  cfg.learning_rate = 1e-3;
  cfg.grad_clip = 1.0;
  const double before = m.params.w_out.v[0];
  auto state = make_opt_state(m);
  apply_step(m, g, cfg, state);
  CHECK(std::abs(before - m.params.w_out.v[0]) == doctest::Approx(1e-3 * 1.0).epsilon(1e-9));
}

TEST_CASE("apply_step refuses non-finite gradients") {
  auto m = init_model(kArch, 1);
  Gradients g = make_opt_state(m).m;
  g.b_out.v[0] = std::nan("");
  auto state = make_opt_state(m);
  CHECK_THROWS_AS(apply_step(m, g, quick_train(), state), NumericalError);
}

TEST_CASE("a single small sgd step does not increase the example loss") {
  const auto m0 = init_model(kArch, 2);
  const auto corpus = small_corpus();
  const DialoguePair& pair = corpus.pairs[0];

  LotConfig mle;
  mle.mode = LossMode::mle_only;
  for (int rep = 0; rep < 5; ++rep) {
    auto m = init_model(kArch, 10 + static_cast<std::uint64_t>(rep));
    auto [bd, g] = lot_grad(m, pair, nullptr, nullptr, mle);
    TrainConfig cfg = quick_train();
    cfg.optimizer = OptKind::sgd;
    cfg.learning_rate = 1e-3;
    auto state = make_opt_state(m);
    apply_step(m, g, cfg, state);
    const auto after = mle_loss(sequence_forward(m, pair.context, pair.response), pair.response);
    CHECK(after <= bd.total + 1e-12);
  }
}

TEST_CASE("train_aux improves the likelihood of its own subset") {
  const auto corpus = small_corpus();
  const auto safe = filter_by_label(corpus, SafetyLabel::safe);
  const auto base = init_model(kArch, 0);

  const auto result = train_aux(base, safe, SafetyLabel::safe, quick_train(5));
  CHECK(result.model.role == Role::safe);
  REQUIRE(result.history.size() == 5);
  CHECK(result.history.back().mle_term < result.history.front().mle_term);
  CHECK(mean_gold_prob(result.model, safe) > mean_gold_prob(base, safe));
}

TEST_CASE("train_aux assigns the toxic role") {
  const auto corpus = small_corpus();
  const auto unsafe = filter_by_label(corpus, SafetyLabel::unsafe);
  const auto result = train_aux(init_model(kArch, 0), unsafe, SafetyLabel::unsafe, quick_train(2));
  CHECK(result.model.role == Role::toxic);
}

TEST_CASE("train_aux validates inputs") {
  const auto corpus = small_corpus();
  const auto base = init_model(kArch, 0);
  TrainConfig cfg = quick_train();
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_aux(base, filter_by_label(corpus, SafetyLabel::safe), SafetyLabel::safe, cfg),
                  ConfigError);
  // Unfiltered corpus refused.
  CHECK_THROWS_AS(train_aux(base, corpus, SafetyLabel::safe, quick_train()), ConfigError);
  // Empty corpus refused.
  LabeledCorpus empty;
  empty.vocab = corpus.vocab;
  CHECK_THROWS_AS(train_aux(base, empty, SafetyLabel::safe, quick_train()), ConfigError);
}

TEST_CASE("training is deterministic under fixed seeds") {
  const auto corpus = small_corpus();
  const auto safe = filter_by_label(corpus, SafetyLabel::safe);
  const auto base = init_model(kArch, 0);
  const auto a = train_aux(base, safe, SafetyLabel::safe, quick_train(2));
  const auto b = train_aux(base, safe, SafetyLabel::safe, quick_train(2));
  CHECK(save_checkpoint(a.model) == save_checkpoint(b.model));
}

TEST_CASE("train_lot freezes the references and tags the output role") {
  const auto corpus = small_corpus();
  const auto base = init_model(kArch, 0);
  auto tau = train_aux(base, filter_by_label(corpus, SafetyLabel::unsafe), SafetyLabel::unsafe,
                       quick_train(2))
                 .model;
  auto s = train_aux(base, filter_by_label(corpus, SafetyLabel::safe), SafetyLabel::safe,
                     quick_train(2))
               .model;
  const auto tau_bytes = save_checkpoint(tau);
  const auto s_bytes = save_checkpoint(s);

  const auto result = train_lot(base, corpus, tau, s, quick_train(2), LotConfig{});
  CHECK(result.model.role == Role::output);
  CHECK(save_checkpoint(tau) == tau_bytes);
  CHECK(save_checkpoint(s) == s_bytes);
  REQUIRE(result.history.size() == 2);
  CHECK(result.history.back().contrast_term >= 0.0);
}

TEST_CASE("train_lot validates roles and arch") {
  const auto corpus = small_corpus();
  const auto base = init_model(kArch, 0);
  auto not_toxic = init_model(kArch, 1);  // role base
  auto s = init_model(kArch, 2);
  s.role = Role::safe;
  CHECK_THROWS_AS(train_lot(base, corpus, not_toxic, s, quick_train(1), LotConfig{}), ConfigError);

  auto tau_small = init_model(Arch{16, 4, 8, 4}, 3);
  tau_small.role = Role::toxic;
  CHECK_THROWS_AS(train_lot(base, corpus, tau_small, s, quick_train(1), LotConfig{}), ConfigError);
}

TEST_CASE("train_lot in mle_only mode equals baseline all-data fine-tuning bit for bit") {
  const auto corpus = small_corpus();
  const auto base = init_model(kArch, 0);
  auto tau = init_model(kArch, 1);
  tau.role = Role::toxic;
  auto s = init_model(kArch, 2);
  s.role = Role::safe;

  LotConfig mle;
  mle.mode = LossMode::mle_only;
  const auto lot = train_lot(base, corpus, tau, s, quick_train(2), mle);
  const auto baseline = train_baseline(base, corpus, BaselineVariant::all_data, quick_train(2));

  // Same parameter bytes; only the role tag differs (output vs base).
  bool same = true;
  lot.model.params.for_each([&](const char* name, const Tensor& t) {
    const Tensor* other = nullptr;
    baseline.model.params.for_each([&](const char* n, const Tensor& o) {
      if (std::string_view(name) == n) other = &o;
    });
    same = same && (t.v == other->v);
  });
  CHECK(same);
}

TEST_CASE("train_baseline clean_only trains on the safe subset") {
  const auto corpus = small_corpus();
  const auto base = init_model(kArch, 0);
  const auto clean = train_baseline(base, corpus, BaselineVariant::clean_only, quick_train(2));
  CHECK(clean.model.role == Role::base);
  const auto safe = filter_by_label(corpus, SafetyLabel::safe);
  const auto aux_equiv = train_aux(base, safe, SafetyLabel::safe, quick_train(2));
  bool same = true;
  clean.model.params.for_each([&](const char* name, const Tensor& t) {
    const Tensor* other = nullptr;
    aux_equiv.model.params.for_each([&](const char* n, const Tensor& o) {
      if (std::string_view(name) == n) other = &o;
    });
    same = same && (t.v == other->v);
  });
  CHECK(same);
}

TEST_CASE("train_baseline clean_only refuses a corpus without safe pairs") {
  const auto corpus = small_corpus();
  const auto unsafe_only = filter_by_label(corpus, SafetyLabel::unsafe);
  CHECK_THROWS_AS(
      train_baseline(init_model(kArch, 0), unsafe_only, BaselineVariant::clean_only, quick_train()),
      ConfigError);
}

TEST_CASE("aux training loss decreases in most epochs") {
  const auto corpus = small_corpus();
  const auto safe = filter_by_label(corpus, SafetyLabel::safe);
  const auto result = train_aux(init_model(kArch, 0), safe, SafetyLabel::safe, quick_train(10));
  int down = 0;
  for (std::size_t e = 1; e < result.history.size(); ++e)
    down += result.history[e].mle_term < result.history[e - 1].mle_term ? 1 : 0;
  CHECK(down >= 8);
}
