#include <benchmark/benchmark.h>

#include "alfa/augment.hpp"
#include "alfa/datasets.hpp"
#include "alfa/losses.hpp"
#include "alfa/rng.hpp"
#include "alfa/tensor.hpp"
#include "alfa/train.hpp"

using namespace alfa;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_tensor({n, n}, 1);
  Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(128)->Arg(256);

void bm_matmul_backward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tape tape;
    Tensor a = tape.track(random_tensor({n, n}, 1));
    tape.backward(sum_all(matmul(a, b)));
    benchmark::DoNotOptimize(tape.grad_tensor(a).data.data());
  }
}
BENCHMARK(bm_matmul_backward)->Arg(64)->Arg(128);

void bm_hed_jitter(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  Tensor img({3, side, side});
  for (auto& v : img.data) v = rng.uniform(0.05, 0.95);
  Rng jrng(4);
  for (auto _ : state) {
    Tensor out = hed_jitter(img, 0.05, jrng);
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(bm_hed_jitter)->Arg(32)->Arg(96);

void bm_triplet_batch(benchmark::State& state) {
  DomainDataset ds = synth_generate(64, {0.0, 0.2}, 2, 16, 5);
  std::vector<Tensor> pool;
  for (const auto& ex : ds.domains[0]) pool.push_back(ex.image);
  AugmentSpec spec;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    TripletBatch tb = make_triplet_batch(pool, spec, 32, seed++);
    benchmark::DoNotOptimize(tb.anchors.data.data());
  }
}
BENCHMARK(bm_triplet_batch);

void bm_phase1_step(benchmark::State& state) {
  DomainDataset ds = synth_generate(64, {0.0, 0.05, 0.5}, 2, 12, 7);
  LodoSplit split = lodo_split(ds, 2, 0.2, 1);
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.encoder.input_dim = ds.domains[0][0].image.size();
  cfg.encoder.hidden = {48};
  cfg.encoder.embed_dim = 16;
  ParamSet params = init_model(cfg.encoder, ds.n_classes, ds.n_domains(), cfg.mask, 11);
  AdamState adam;
  auto batches = batch_iter(ds, split, cfg.batch, 1, 0, true);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    LossReport rep = phase1_step(params, ds, batches[seed % batches.size()], cfg, adam, seed);
    ++seed;
    benchmark::DoNotOptimize(rep.total);
  }
}
BENCHMARK(bm_phase1_step);

void bm_phase2_meta_step(benchmark::State& state) {
  DomainDataset ds = synth_generate(64, {0.0, 0.05, 0.5}, 2, 12, 7);
  LodoSplit split = lodo_split(ds, 2, 0.2, 1);
  MetaSplit meta = meta_split(ds, split, 0.5, 2);
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.encoder.input_dim = ds.domains[0][0].image.size();
  cfg.encoder.hidden = {48};
  cfg.encoder.embed_dim = 16;
  ParamSet params = init_model(cfg.encoder, ds.n_classes, ds.n_domains(), cfg.mask, 11);
  AdamState meta_adam;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    phase2_meta_step(params, ds, split, meta, cfg, meta_adam, seed++);
    benchmark::DoNotOptimize(params.at("dc.W").data.data());
  }
}
BENCHMARK(bm_phase2_meta_step);

}  // namespace

BENCHMARK_MAIN();
