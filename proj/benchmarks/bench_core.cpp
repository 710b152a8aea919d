#include <benchmark/benchmark.h>

#include <random>

#include "trg/graph.hpp"
#include "trg/losses.hpp"
#include "trg/ops.hpp"
#include "trg/trainer.hpp"

using namespace trg;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_TokenGraph(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  TokenBatch batch;
  batch.tokens = random_tensor({s, 32}, 3);
  batch.instance_index.assign(s, 0);
  batch.batch_size = 1;
  for (auto _ : state) benchmark::DoNotOptimize(build_token_graph(batch, 3, SigmaPolicy::median()).sigma);
}
BENCHMARK(BM_TokenGraph)->Arg(64)->Arg(128)->Arg(256);

void BM_GlobalLossBackward(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  auto ts = random_tensor({s, 6}, 4, true);
  auto tt = random_tensor({s, 32}, 5);
  Projection proj(6, 32, 6);
  for (auto _ : state) {
    auto loss = global_loss(token_similarity(ts, tt, proj), 0.1);
    backward(loss);
    benchmark::DoNotOptimize(ts.grad().data());
  }
}
BENCHMARK(BM_GlobalLossBackward)->Arg(64)->Arg(128);

struct StepSetup {
  RunConfig cfg;
  SplitDataset data;
  ToyNet teacher;
  StepSetup() : data(prepare_data(cfg)), teacher(make_teacher(cfg)) { teacher.freeze(); }
};

void BM_DistillStep(benchmark::State& state) {
  static StepSetup setup;
  auto cfg = setup.cfg;
  if (state.range(0) == 0) cfg.ablate = {LossTerm::inner, LossTerm::local, LossTerm::global};
  ToyNet student = make_student(cfg);
  Projection proj = make_projection(cfg, setup.teacher, student);
  auto params = student.parameters();
  params.push_back(proj.weight());
  Sgd opt(params, {cfg.momentum, cfg.weight_decay, true});
  std::vector<std::size_t> index(cfg.batch_size);
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  const auto images = setup.data.train.batch_images(index);
  const auto labels = setup.data.train.batch_labels(index);
  std::uint64_t plan = 0;
  for (auto _ : state) {
    auto br = distill_step(setup.teacher, student, proj, opt, images, labels, cfg, 1, ++plan);
    benchmark::DoNotOptimize(br.total);
  }
  state.SetLabel(state.range(0) == 0 ? "kd only" : "all terms");
}
BENCHMARK(BM_DistillStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
