#include "collsim/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

#include "collsim/collective.hpp"
#include "collsim/data.hpp"
#include "collsim/trace.hpp"
#include "collsim/trainer.hpp"

namespace collsim {

namespace {

void validate(const RunConfig& c) {
  if (c.workers < 1) throw ConfigError("run: workers must be >= 1");
  if (c.engine_threads < 1) throw ConfigError("run: engine-threads must be >= 1");
  if (c.epochs < 1) throw ConfigError("run: epochs must be >= 1");
  if (c.global_batch < 1 || c.global_batch % c.workers != 0) {
    throw ConfigError("run: global batch size must divide evenly across workers");
  }
  if (c.watchdog_ms <= 0) throw ConfigError("run: watchdog must be positive");
  if (c.inject_latency_us < 0) throw ConfigError("run: injected latency must be >= 0");
  if (c.learning_rate <= 0.0) throw ConfigError("run: learning rate must be positive");
  if (c.mode == KvMode::ConCom && c.outstanding < 1) {
    throw ConfigError("run: concom requires outstanding >= 1");
  }
  if ((c.mode == KvMode::DepCha || c.mode == KvMode::ConCom) && c.engine_threads < 2) {
    std::fprintf(stderr,
                 "warning: %s with a single engine thread cannot overlap communication\n",
                 kv_mode_name(c.mode));
  }
}

// Higher number wins the "primary error" slot in the metrics file.
int error_priority(const std::string& cls) {
  if (cls == "MismatchError") return 5;
  if (cls == "DeadlockTimeout") return 4;
  if (cls == "UsageError") return 3;
  if (cls == "EngineError") return 2;
  return 1;
}

}  // namespace

Metrics run_scenario(const RunConfig& config) {
  validate(config);

  TraceSink sink;
  Transport transport(config.workers, std::chrono::milliseconds(config.watchdog_ms), &sink);
  transport.set_inject_latency(std::chrono::microseconds(config.inject_latency_us));

  std::vector<CommId> comms;
  if (config.mode == KvMode::ConCom) {
    comms = create_communicators(transport, config.outstanding);
  }

  const DataSplit data =
      generate_dataset(config.seed, config.samples, config.features, config.classes);

  std::vector<WorkerOutcome> outcomes(static_cast<size_t>(config.workers));
  {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(config.workers));
    for (int rank = 0; rank < config.workers; ++rank) {
      threads.emplace_back([&, rank] {
        TrainPlan plan;
        plan.mode = config.mode;
        plan.topology = config.model;
        plan.hp = Hyperparams{config.learning_rate, config.global_batch, config.epochs,
                              config.seed};
        plan.num_ranks = config.workers;
        plan.rank = rank;
        plan.outstanding = config.outstanding;
        outcomes[static_cast<size_t>(rank)] =
            run_worker(transport, plan, data, config.engine_threads, &sink, comms);
      });
    }
    for (std::thread& t : threads) {
      t.join();
    }
  }

  Metrics m;
  m.mode = kv_mode_name(config.mode);
  m.model = topology_name(config.model);
  m.workers = config.workers;
  m.engine_threads = config.engine_threads;
  m.outstanding = config.outstanding;
  m.epochs = config.epochs;
  m.global_batch = config.global_batch;
  m.seed = config.seed;

  size_t completed_epochs = outcomes[0].epochs.size();
  for (const WorkerOutcome& o : outcomes) {
    completed_epochs = std::min(completed_epochs, o.epochs.size());
  }
  for (size_t e = 0; e < completed_epochs; ++e) {
    double wall = 0.0;
    double loss = 0.0;
    for (const WorkerOutcome& o : outcomes) {
      wall += o.epochs[e].wall_seconds;
      loss += o.epochs[e].train_loss;
    }
    m.epoch_times_s.push_back(wall / config.workers);
    if (e + 1 == completed_epochs) {
      m.final_train_loss = loss / config.workers;
    }
  }
  m.test_accuracy = outcomes[0].accuracy;

  for (const WorkerOutcome& o : outcomes) {
    for (const std::string& cls : o.error_classes) {
      if (std::find(m.error_classes.begin(), m.error_classes.end(), cls) ==
          m.error_classes.end()) {
        m.error_classes.push_back(cls);
      }
    }
  }
  for (const std::string& cls : m.error_classes) {
    if (m.error.empty() || error_priority(cls) > error_priority(m.error)) {
      m.error = cls;
    }
  }

  m.max_concurrent_collectives = sink.gauges().max_open_collectives.load();
  m.compute_overlap_observed = sink.gauges().compute_overlap.load();

  if (!config.trace_path.empty()) {
    sink.write_jsonl(config.trace_path);
  }
  if (!config.metrics_path.empty()) {
    write_metrics(m, config.metrics_path);
  }
  return m;
}

}  // namespace collsim
