#include <benchmark/benchmark.h>

#include <thread>
#include <vector>

#include "collsim/collective.hpp"
#include "collsim/engine.hpp"
#include "collsim/runner.hpp"
#include "collsim/trainer.hpp"

using namespace collsim;

// Throughput of dependency-chained ops on one tag (worst case for the
// grant path).
static void BM_EngineSerialChain(benchmark::State& state) {
  const int ops = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Engine engine(4);
    Tag tag = engine.new_variable();
    for (int i = 0; i < ops; ++i) {
      engine.push([] {}, {}, {tag});
    }
    engine.wait_all();
    engine.shutdown();
  }
  state.SetItemsProcessed(state.iterations() * ops);
}
BENCHMARK(BM_EngineSerialChain)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

// Independent ops across many tags; measures scheduling fan-out.
static void BM_EngineIndependentOps(benchmark::State& state) {
  const int ops = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Engine engine(4);
    std::vector<Tag> tags;
    tags.reserve(static_cast<size_t>(ops));
    for (int i = 0; i < ops; ++i) tags.push_back(engine.new_variable());
    for (int i = 0; i < ops; ++i) {
      engine.push([] {}, {}, {tags[static_cast<size_t>(i)]});
    }
    engine.wait_all();
    engine.shutdown();
  }
  state.SetItemsProcessed(state.iterations() * ops);
}
BENCHMARK(BM_EngineIndependentOps)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

// Round-trip latency of one world allreduce across R in-process ranks.
static void BM_AllreduceLatency(benchmark::State& state) {
  const int ranks = static_cast<int>(state.range(0));
  const int64_t elems = state.range(1);
  for (auto _ : state) {
    Transport transport(ranks, std::chrono::milliseconds(5000));
    std::vector<std::thread> threads;
    for (int r = 0; r < ranks; ++r) {
      threads.emplace_back([&, r] {
        Tensor buf = ones(Shape{elems});
        for (int i = 0; i < 50; ++i) {
          transport.allreduce_sum(Transport::world(), r, buf);
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  state.SetItemsProcessed(state.iterations() * 50);
}
BENCHMARK(BM_AllreduceLatency)->Args({2, 1024})->Args({4, 1024})->Args({4, 65536})
    ->Unit(benchmark::kMillisecond);

// End-to-end epoch time per kvstore mode on the diamond model.
static void BM_TrainEpoch(benchmark::State& state) {
  const KvMode mode = static_cast<KvMode>(state.range(0));
  for (auto _ : state) {
    RunConfig config;
    config.mode = mode;
    config.workers = 2;
    config.engine_threads = 4;
    config.epochs = 1;
    config.global_batch = 128;
    config.model = Topology::Diamond;
    config.seed = 1;
    Metrics m = run_scenario(config);
    benchmark::DoNotOptimize(m.final_train_loss);
  }
}
BENCHMARK(BM_TrainEpoch)
    ->Arg(static_cast<int>(KvMode::Funnel))
    ->Arg(static_cast<int>(KvMode::DepCha))
    ->Arg(static_cast<int>(KvMode::ConCom))
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
