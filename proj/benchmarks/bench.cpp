#include <benchmark/benchmark.h>

#include <random>

#include "lot/divergence.hpp"
#include "lot/lot_loss.hpp"
#include "lot/model.hpp"
#include "lot/rng.hpp"

using namespace lot;

namespace {

Dist random_dist(std::mt19937_64& rng, std::size_t n) {
  Dist d(n);
  double sum = 0.0;
  for (auto& x : d) {
    x = 1e-6 + uniform01(rng);
    sum += x;
  }
  for (auto& x : d) x /= sum;
  return d;
}

std::vector<int> random_seq(std::mt19937_64& rng, int vocab, int len) {
  std::vector<int> out;
  for (int i = 0; i < len; ++i)
    out.push_back(4 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(vocab - 4))));
  return out;
}

void BM_js(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto v = static_cast<std::size_t>(state.range(0));
  const Dist p = random_dist(rng, v);
  const Dist q = random_dist(rng, v);
  for (auto _ : state) benchmark::DoNotOptimize(js(p, q).value_nats);
}
BENCHMARK(BM_js)->Arg(50)->Arg(512);

void BM_sequence_forward(benchmark::State& state) {
  const Arch arch{50, 16, 32, 8};
  const auto m = init_model(arch, 1);
  std::mt19937_64 rng(2);
  const auto ctx = random_seq(rng, arch.vocab, 3);
  const auto gold = random_seq(rng, arch.vocab, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sequence_forward(m, ctx, gold));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_sequence_forward)->Arg(4)->Arg(8)->Arg(16);

void BM_lot_grad(benchmark::State& state) {
  const Arch arch{50, 16, 32, 8};
  const auto m = init_model(arch, 1);
  const auto tau = init_model(arch, 2);
  const auto s = init_model(arch, 3);
  std::mt19937_64 rng(3);
  const DialoguePair pair{random_seq(rng, arch.vocab, 3),
                          random_seq(rng, arch.vocab, static_cast<int>(state.range(0))),
                          SafetyLabel::safe};
  LotConfig cfg;
  cfg.gamma = 2.0;
  cfg.lambda = 2.0;
  for (auto _ : state) benchmark::DoNotOptimize(lot_grad(m, pair, &tau, &s, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_lot_grad)->Arg(4)->Arg(8);

}  // namespace

BENCHMARK_MAIN();
