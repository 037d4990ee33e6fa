#include <cmath>
#include <random>

#include <doctest.h>

#include "lot/divergence.hpp"
#include "lot/errors.hpp"
#include "lot/lot_loss.hpp"
#include "lot/rng.hpp"

using namespace lot;

namespace {

Dist smoothed(std::initializer_list<double> raw, double eps = 1e-8) {
  Dist d(raw);
  for (auto& x : d) x = (1.0 - eps) * x + eps / d.size();
  return d;
}

Dist one_hot(std::size_t v, std::size_t i, double eps = 1e-8) {
  Dist d(v, 0.0);
  d[i] = 1.0;
  for (auto& x : d) x = (1.0 - eps) * x + eps / v;
  return d;
}

LotConfig unit_config() {
  LotConfig cfg;
  cfg.xi = 1.0;
  cfg.gamma = 1.0;
  cfg.lambda = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("mle_loss: certain gold predictions give zero") {
  std::vector<Dist> dists = {one_hot(4, 1), one_hot(4, 2)};
  CHECK(mle_loss(dists, {1, 2}) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("mle_loss: uniform over 16 gives ln 16") {
  std::vector<Dist> dists(3, Dist(16, 1.0 / 16.0));
  CHECK(mle_loss(dists, {0, 5, 9}) == doctest::Approx(2.772589).epsilon(1e-6));
}

TEST_CASE("mle_loss hand value") {
  // gold probs 0.5 and 0.25 -> (ln 2 + ln 4) / 2
  std::vector<Dist> dists = {smoothed({0.5, 0.5}), smoothed({0.25, 0.75})};
  CHECK(mle_loss(dists, {0, 0}) == doctest::Approx(1.039721).epsilon(1e-5));
}

TEST_CASE("mle_loss rejects length mismatch") {
  std::vector<Dist> dists = {Dist(4, 0.25)};
  CHECK_THROWS_AS(mle_loss(dists, {1, 2}), ArgumentError);
  CHECK_THROWS_AS(mle_loss({}, {}), ArgumentError);
}

TEST_CASE("lot_loss degenerates to xi * mle when gamma = lambda = 0") {
  std::mt19937_64 rng(1);
  std::vector<Dist> beta, tau, s;
  std::vector<int> gold;
  for (int t = 0; t < 4; ++t) {
    Dist p(8);
    double sum = 0.0;
    for (auto& x : p) {
      x = 0.01 + uniform01(rng);
      sum += x;
    }
    for (auto& x : p) x /= sum;
    beta.push_back(p);
    tau.push_back(one_hot(8, 1));
    s.push_back(one_hot(8, 2));
    gold.push_back(static_cast<int>(uniform_index(rng, 8)));
  }
  LotConfig cfg = unit_config();
  cfg.xi = 1.7;
  cfg.gamma = 0.0;
  cfg.lambda = 0.0;
  const auto bd = lot_loss(beta, tau, s, gold, cfg);
  CHECK(bd.total == doctest::Approx(1.7 * mle_loss(beta, gold)).epsilon(1e-12));
}

TEST_CASE("lot_loss with identical parallel distributions reduces to xi * mle") {
  std::vector<Dist> p = {smoothed({0.2, 0.3, 0.5}), smoothed({0.6, 0.2, 0.2})};
  const std::vector<int> gold = {2, 0};
  const auto bd = lot_loss(p, p, p, gold, unit_config());
  CHECK(bd.contrast_term == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(bd.reinforce_term == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(bd.total == doctest::Approx(mle_loss(p, gold)).epsilon(1e-9));
}

TEST_CASE("lot_loss single-position hand value") {
  std::vector<Dist> beta = {smoothed({0.5, 0.5})};
  std::vector<Dist> tau = {one_hot(2, 0)};
  std::vector<Dist> s = {smoothed({0.5, 0.5})};
  const auto bd = lot_loss(beta, tau, s, {0}, unit_config());
  CHECK(bd.mle_term == doctest::Approx(0.693147).epsilon(1e-5));
  CHECK(bd.contrast_term == doctest::Approx(0.215761).epsilon(1e-5));
  CHECK(bd.reinforce_term == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(bd.total == doctest::Approx(0.477386).epsilon(1e-5));
}

TEST_CASE("breakdown is affine in the coefficients") {
  std::mt19937_64 rng(2);
  std::vector<Dist> beta, tau, s;
  std::vector<int> gold;
  auto rand_dist = [&](std::size_t v) {
    Dist p(v);
    double sum = 0.0;
    for (auto& x : p) {
      x = 0.01 + uniform01(rng);
      sum += x;
    }
    for (auto& x : p) x /= sum;
    return p;
  };
  for (int t = 0; t < 3; ++t) {
    beta.push_back(rand_dist(6));
    tau.push_back(rand_dist(6));
    s.push_back(rand_dist(6));
    gold.push_back(static_cast<int>(uniform_index(rng, 6)));
  }
  for (double xi : {0.5, 1.0, 2.0})
    for (double gamma : {0.0, 0.7})
      for (double lambda : {0.0, 1.3}) {
        LotConfig cfg;
        cfg.xi = xi;
        cfg.gamma = gamma;
        cfg.lambda = lambda;
        const auto bd = lot_loss(beta, tau, s, gold, cfg);
        CHECK(bd.total == doctest::Approx(xi * bd.mle_term - gamma * bd.contrast_term +
                                          lambda * bd.reinforce_term)
                              .epsilon(1e-9));
        CHECK(bd.contrast_term >= 0.0);
        CHECK(bd.reinforce_term >= 0.0);
        // JS keeps the total bounded below by -gamma ln 2.
        CHECK(bd.total >= -gamma * 0.6931471805599453 - 1e-12);
      }
}

TEST_CASE("total decreases as gamma grows when beta is far from tau") {
  std::vector<Dist> beta = {smoothed({0.5, 0.5})};
  std::vector<Dist> tau = {one_hot(2, 0)};
  std::vector<Dist> s = {smoothed({0.5, 0.5})};
  double prev = 1e300;
  for (double gamma : {0.0, 0.5, 1.0, 2.0}) {
    LotConfig cfg = unit_config();
    cfg.gamma = gamma;
    const auto bd = lot_loss(beta, tau, s, {0}, cfg);
    CHECK(bd.total < prev);
    prev = bd.total;
  }
}

TEST_CASE("kl mode clamps per-position divergences at the cap") {
  std::vector<Dist> beta = {one_hot(4, 0, 1e-12)};
  std::vector<Dist> tau = {one_hot(4, 1, 1e-12)};  // KL(beta||tau) is huge
  std::vector<Dist> s = {beta[0]};
  LotConfig cfg = unit_config();
  cfg.div_kind = DivKind::KL;
  cfg.kl_cap = 10.0;
  const auto bd = lot_loss(beta, tau, s, {0}, cfg);
  CHECK(bd.contrast_term == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("lot_loss rejects mismatched list lengths") {
  std::vector<Dist> two = {Dist(4, 0.25), Dist(4, 0.25)};
  std::vector<Dist> one = {Dist(4, 0.25)};
  CHECK_THROWS_AS(lot_loss(two, one, two, {0, 1}, unit_config()), ArgumentError);
}

TEST_CASE("LotConfig validation") {
  LotConfig cfg;
  cfg.xi = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = LotConfig{};
  cfg.kl_cap = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = LotConfig{};
  cfg.mode = LossMode::contrastor_only;
  CHECK(cfg.effective_lambda() == 0.0);
  CHECK(cfg.effective_gamma() == cfg.gamma);
  cfg.mode = LossMode::reinforcer_only;
  CHECK(cfg.effective_gamma() == 0.0);
  cfg.mode = LossMode::mle_only;
  CHECK(cfg.effective_gamma() == 0.0);
  CHECK(cfg.effective_lambda() == 0.0);
}

TEST_CASE("lot_grad in mle_only mode equals backward with an MLE loss spec") {
  const Arch arch{12, 3, 5, 3};
  const auto m = init_model(arch, 21);
  DialoguePair pair{{4, 5}, {6, 7, 2}, SafetyLabel::safe};

  LotConfig cfg;
  cfg.mode = LossMode::mle_only;
  auto [bd, g_lot] = lot_grad(m, pair, nullptr, nullptr, cfg);

  auto [loss, g_mle] = backward(m, {pair},
                                [](const std::vector<Dist>& dists, const std::vector<int>& gold,
                                   std::vector<Dist>* grad) {
                                  if (grad) {
                                    grad->assign(dists.size(), Dist());
                                    for (std::size_t t = 0; t < dists.size(); ++t)
                                      (*grad)[t].assign(dists[t].size(), 0.0);
                                    const double inv_t = 1.0 / static_cast<double>(gold.size());
                                    for (std::size_t t = 0; t < gold.size(); ++t)
                                      (*grad)[t][static_cast<std::size_t>(gold[t])] =
                                          -inv_t / dists[t][static_cast<std::size_t>(gold[t])];
                                  }
                                  return mle_loss(dists, gold);
                                });
  CHECK(bd.total == loss);
  bool identical = true;
  g_lot.for_each([&](const char* name, const Tensor& t) {
    const Tensor* other = nullptr;
    g_mle.for_each([&](const char* n, const Tensor& o) {
      if (std::string_view(name) == n) other = &o;
    });
    identical = identical && (t.v == other->v);
  });
  CHECK(identical);
}

TEST_CASE("lot_grad matches finite differences of the full objective") {
  std::mt19937_64 rng(77);
  const Arch arch{8, 3, 4, 3};
  for (int trial = 0; trial < 3; ++trial) {
    auto m = init_model(arch, 200 + static_cast<std::uint64_t>(trial));
    auto tau = init_model(arch, 300 + static_cast<std::uint64_t>(trial));
    tau.role = Role::toxic;
    auto s = init_model(arch, 400 + static_cast<std::uint64_t>(trial));
    s.role = Role::safe;

    DialoguePair pair;
    for (int i = 0; i < 2; ++i)
      pair.context.push_back(4 + static_cast<int>(uniform_index(rng, 4)));
    for (int i = 0; i < 3; ++i)
      pair.response.push_back(4 + static_cast<int>(uniform_index(rng, 4)));

    LotConfig cfg = unit_config();
    cfg.gamma = 0.8;
    cfg.lambda = 1.1;
    auto [bd, grads] = lot_grad(m, pair, &tau, &s, cfg);

    auto loss_at = [&](const ModelParams& mm) {
      return lot_loss(sequence_forward(mm, pair.context, pair.response),
                      sequence_forward(tau, pair.context, pair.response),
                      sequence_forward(s, pair.context, pair.response), pair.response, cfg)
          .total;
    };
    const double h = 1e-5;
    auto check_tensor = [&](Tensor& wt, const Tensor& gt) {
      for (std::size_t i = 0; i < wt.v.size(); i += 3) {
        const double save = wt.v[i];
        wt.v[i] = save + h;
        const double up = loss_at(m);
        wt.v[i] = save - h;
        const double dn = loss_at(m);
        wt.v[i] = save;
        const double fd = (up - dn) / (2.0 * h);
        if (std::abs(gt.v[i]) > 1e-8)
          CHECK(fd == doctest::Approx(gt.v[i]).epsilon(1e-4));
      }
    };
    check_tensor(m.params.embedding, grads.embedding);
    check_tensor(m.params.w_hidden, grads.w_hidden);
    check_tensor(m.params.w_out, grads.w_out);
    check_tensor(m.params.b_out, grads.b_out);
  }
}

TEST_CASE("frozen references are byte-identical across lot_grad calls") {
  const Arch arch{8, 3, 4, 3};
  const auto m = init_model(arch, 1);
  auto tau = init_model(arch, 2);
  tau.role = Role::toxic;
  auto s = init_model(arch, 3);
  s.role = Role::safe;
  const auto tau_bytes = save_checkpoint(tau);
  const auto s_bytes = save_checkpoint(s);

  DialoguePair pair{{4}, {5, 6, 2}, SafetyLabel::safe};
  for (int i = 0; i < 5; ++i) lot_grad(m, pair, &tau, &s, unit_config());

  CHECK(save_checkpoint(tau) == tau_bytes);
  CHECK(save_checkpoint(s) == s_bytes);
}

TEST_CASE("single-step sign structure of the push and pull terms") {
  // One gradient step on -gamma * d(beta, tau) alone must not decrease
  // d(beta, tau); one step on +lambda * d(beta, s) alone must not increase
  // d(beta, s).
  const Arch arch{8, 3, 4, 3};
  auto tau = init_model(arch, 12);
  tau.role = Role::toxic;
  auto s = init_model(arch, 13);
  s.role = Role::safe;
  DialoguePair pair{{4, 5}, {6, 7, 2}, SafetyLabel::safe};

  auto mean_js = [&](const ModelParams& a, const ModelParams& b) {
    const auto pa = sequence_forward(a, pair.context, pair.response);
    const auto pb = sequence_forward(b, pair.context, pair.response);
    double acc = 0.0;
    for (std::size_t t = 0; t < pa.size(); ++t) acc += js(pa[t], pb[t]).value_nats;
    return acc / static_cast<double>(pa.size());
  };

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto m = init_model(arch, 500 + seed);

    LotConfig push;
    push.xi = 1e-12;  // CE anchor cannot be disabled; make it negligible
    push.gamma = 1.0;
    push.lambda = 0.0;
    auto m_push = m;
    auto [bd1, g1] = lot_grad(m_push, pair, &tau, &s, push);
    const double before_push = mean_js(m_push, tau);
    m_push.params.for_each([&](const char* name, Tensor& t) {
      const Tensor* g = nullptr;
      g1.for_each([&](const char* n, const Tensor& o) {
        if (std::string_view(name) == n) g = &o;
      });
      for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] -= 1e-3 * g->v[i];
    });
    CHECK(mean_js(m_push, tau) >= before_push - 1e-12);

    LotConfig pull;
    pull.xi = 1e-12;
    pull.gamma = 0.0;
    pull.lambda = 1.0;
    auto m_pull = m;
    auto [bd2, g2] = lot_grad(m_pull, pair, &tau, &s, pull);
    const double before_pull = mean_js(m_pull, s);
    m_pull.params.for_each([&](const char* name, Tensor& t) {
      const Tensor* g = nullptr;
      g2.for_each([&](const char* n, const Tensor& o) {
        if (std::string_view(name) == n) g = &o;
      });
      for (std::size_t i = 0; i < t.v.size(); ++i) t.v[i] -= 1e-3 * g->v[i];
    });
    CHECK(mean_js(m_pull, s) <= before_pull + 1e-12);
  }
}

TEST_CASE("lot_grad rejects architecture mismatch and missing references") {
  const auto m = init_model(Arch{8, 3, 4, 3}, 1);
  auto tau = init_model(Arch{16, 3, 4, 3}, 2);
  tau.role = Role::toxic;
  auto s = init_model(Arch{8, 3, 4, 3}, 3);
  s.role = Role::safe;
  DialoguePair pair{{4}, {5, 2}, SafetyLabel::safe};
  CHECK_THROWS_AS(lot_grad(m, pair, &tau, &s, LotConfig{}), ConfigError);
  CHECK_THROWS_AS(lot_grad(m, pair, nullptr, nullptr, LotConfig{}), ConfigError);
}
