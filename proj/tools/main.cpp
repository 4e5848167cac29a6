#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "collsim/metrics.hpp"
#include "collsim/runner.hpp"

namespace {

int cmd_run(const collsim::RunConfig& config) {
  collsim::Metrics metrics = collsim::run_scenario(config);
  std::printf("%s\n", collsim::metrics_to_json(metrics).c_str());
  if (!metrics.ok()) {
    std::fprintf(stderr, "error: %s\n", metrics.error.c_str());
    return 2;
  }
  return 0;
}

int cmd_compare(const std::string& path_a, const std::string& path_b) {
  collsim::Metrics a = collsim::read_metrics(path_a);
  collsim::Metrics b = collsim::read_metrics(path_b);
  collsim::CompareReport report = collsim::compare_metrics(a, b);
  std::printf("%s", report.text.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-process simulator of data-parallel SGD with collective "
               "operations embedded in a dependency-tracked task DAG"};
  app.require_subcommand(1);

  collsim::RunConfig config;
  std::string mode = "funnel";
  std::string model = "diamond";

  CLI::App* run = app.add_subcommand("run", "Run a training scenario and emit metrics");
  run->add_option("--mode", mode, "kvstore mode: funnel, depcha, concom, naive")
      ->check(CLI::IsMember({"funnel", "depcha", "concom", "naive"}));
  run->add_option("--workers", config.workers, "number of simulated workers (ranks)");
  run->add_option("--engine-threads", config.engine_threads, "engine pool size per worker");
  run->add_option("--outstanding", config.outstanding,
                  "concom: in-flight window = number of extra communicators");
  run->add_option("--epochs", config.epochs, "training epochs");
  run->add_option("--batch-size", config.global_batch, "global mini-batch size");
  run->add_option("--model", model, "model topology: mlp or diamond")
      ->check(CLI::IsMember({"mlp", "diamond"}));
  run->add_option("--seed", config.seed, "run seed (data, weights)");
  run->add_option("--watchdog-ms", config.watchdog_ms, "collective deadlock watchdog");
  run->add_option("--inject-latency-us", config.inject_latency_us,
                  "synthetic per-collective latency");
  run->add_option("--lr", config.learning_rate, "learning rate");
  run->add_option("--samples", config.samples, "synthetic dataset size");
  run->add_option("--trace", config.trace_path, "write JSONL trace to this path");
  run->add_option("--metrics", config.metrics_path, "write metrics JSON to this path");

  std::string path_a;
  std::string path_b;
  CLI::App* cmp = app.add_subcommand("compare", "Compare two metrics files");
  cmp->add_option("a", path_a, "first metrics file")->required();
  cmp->add_option("b", path_b, "second metrics file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      config.mode = collsim::parse_kv_mode(mode);
      config.model = collsim::parse_topology(model);
      return cmd_run(config);
    }
    return cmd_compare(path_a, path_b);
  } catch (const collsim::Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind_name(), e.what());
    return 1;
  }
}
