#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace collsim {

/// One lifecycle record. Fields that do not apply to the event are left at
/// their sentinel (-1 / empty) and omitted when serialized.
struct TraceEvent {
  int64_t t_us = 0;      // microseconds since sink creation
  int rank = -1;
  std::string event;     // op_pushed, op_started, op_finished,
                         // coll_enqueued, coll_matched, coll_done
  int64_t op = -1;       // engine push-sequence number
  int key = -1;          // kvstore key, when the emitter knows it
  int comm = -1;         // communicator id for collective events
  int64_t seq = -1;      // per-communicator sequence index
  std::string kind;      // op kind (compute/copy/collective) or collective kind
};

/// Cross-cutting concurrency gauges shared between the engine and the
/// transport. `overlap` latches once a compute op and an open collective
/// are observed in flight at the same time.
struct ConcurrencyGauges {
  std::atomic<int> open_collectives{0};
  std::atomic<int> max_open_collectives{0};
  std::atomic<int> running_compute{0};
  std::atomic<bool> compute_overlap{false};

  void collective_opened() {
    int open = open_collectives.fetch_add(1) + 1;
    int prev = max_open_collectives.load();
    while (open > prev && !max_open_collectives.compare_exchange_weak(prev, open)) {
    }
    if (running_compute.load() > 0) {
      compute_overlap.store(true);
    }
  }

  void collective_closed() { open_collectives.fetch_sub(1); }

  void compute_started() {
    running_compute.fetch_add(1);
    if (open_collectives.load() > 0) {
      compute_overlap.store(true);
    }
  }

  void compute_finished() { running_compute.fetch_sub(1); }
};

/// Thread-safe in-memory event log. Timestamps are taken under the sink lock
/// so emission order and t_us order agree.
class TraceSink {
 public:
  TraceSink();

  void emit(TraceEvent ev);

  std::vector<TraceEvent> snapshot() const;
  size_t count() const;

  /// Serializes every event as one JSON object per line.
  void write_jsonl(const std::string& path) const;

  ConcurrencyGauges& gauges() { return gauges_; }

 private:
  mutable std::mutex mu_;
  std::chrono::steady_clock::time_point start_;
  std::vector<TraceEvent> events_;
  ConcurrencyGauges gauges_;
};

}  // namespace collsim
