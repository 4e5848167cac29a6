#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace collsim {

/// Run outcome in the shape the metrics file stores: config echo, per-epoch
/// wall times averaged over the workers, and the concurrency gauges.
struct Metrics {
  std::string mode;
  std::string model;
  int workers = 1;
  int engine_threads = 1;
  int outstanding = 1;
  int epochs = 0;
  int global_batch = 0;
  uint64_t seed = 0;

  std::vector<double> epoch_times_s;
  double final_train_loss = 0.0;
  double test_accuracy = 0.0;
  int max_concurrent_collectives = 0;
  bool compute_overlap_observed = false;
  std::string error;  // primary error class, empty on success
  std::vector<std::string> error_classes;

  bool ok() const { return error.empty(); }
  double mean_epoch_time() const;
};

std::string metrics_to_json(const Metrics& m);
Metrics metrics_from_json(const std::string& text);
void write_metrics(const Metrics& m, const std::string& path);
Metrics read_metrics(const std::string& path);

/// Side-by-side of two runs over the same scenario shape (same model,
/// epochs and global batch; modes may differ).
struct CompareReport {
  double mean_epoch_a = 0.0;
  double mean_epoch_b = 0.0;
  double epoch_time_ratio = 0.0;  // b over a
  int max_concurrent_a = 0;
  int max_concurrent_b = 0;
  bool overlap_a = false;
  bool overlap_b = false;
  std::string text;
};

CompareReport compare_metrics(const Metrics& a, const Metrics& b);

}  // namespace collsim
