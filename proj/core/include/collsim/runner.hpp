#pragma once

#include <cstdint>
#include <string>

#include "collsim/kvstore.hpp"
#include "collsim/metrics.hpp"
#include "collsim/model.hpp"

namespace collsim {

/// One complete scenario: mode, cluster shape, model, dataset knobs and
/// output paths.
struct RunConfig {
  KvMode mode = KvMode::Funnel;
  int workers = 1;
  int engine_threads = 4;
  int outstanding = 2;  // concom window / communicator count
  int epochs = 1;
  int global_batch = 128;
  Topology model = Topology::Diamond;
  uint64_t seed = 1;
  int watchdog_ms = 5000;
  int inject_latency_us = 0;
  double learning_rate = 0.1;
  int samples = 1024;
  int features = 16;
  int classes = 4;
  std::string trace_path;    // JSONL trace, empty = skip
  std::string metrics_path;  // JSON metrics, empty = skip
};

/// Spawns the worker threads, runs every epoch, writes trace/metrics files
/// and returns the aggregated metrics. Collective and engine failures are
/// reported through Metrics::error; configuration problems throw
/// ConfigError.
Metrics run_scenario(const RunConfig& config);

}  // namespace collsim
