#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "collsim/error.hpp"
#include "collsim/tensor.hpp"
#include "collsim/trace.hpp"

namespace collsim {

using CommId = int;

enum class CollectiveKind { AllreduceSum, Broadcast, Barrier };

const char* collective_kind_name(CollectiveKind kind);

/// In-process transport emulating blocking collectives over R simulated
/// ranks. Matching follows MPI semantics: the k-th call a rank issues on a
/// communicator is paired with every other rank's k-th call on that
/// communicator, whatever the calls actually are. A rendezvous completes
/// only when all R paired calls carry the same kind, element count and root;
/// disagreement raises MismatchError on every participant, and a rendezvous
/// that stays incomplete past the watchdog raises DeadlockTimeout with a
/// per-rank pending-call report.
///
/// All calls are blocking and thread-safe. Sequence indices are taken in
/// call-arrival order, so concurrent calls from one rank on the same
/// communicator are paired nondeterministically -- exactly the ordering
/// hazard real MPI leaves undefined.
class Transport {
 public:
  Transport(int num_ranks, std::chrono::milliseconds watchdog, TraceSink* trace = nullptr);

  int num_ranks() const { return num_ranks_; }
  static constexpr CommId world() { return 0; }

  /// Creates a fresh communicator over all ranks. Setup-phase only: calling
  /// after any collective has been issued is an error.
  CommId new_communicator();
  int num_communicators() const;

  /// In-place sum across ranks: on return every rank's buffer holds the
  /// elementwise sum of all R buffers, accumulated in rank order.
  void allreduce_sum(CommId comm, int rank, Tensor& buffer, int trace_key = -1);

  /// On return every rank's buffer equals root's input buffer.
  void broadcast(CommId comm, int rank, int root, Tensor& buffer, int trace_key = -1);

  void barrier(CommId comm, int rank, int trace_key = -1);

  /// Synthetic per-collective latency, paid once per rendezvous by the
  /// completing rank. Models network cost absent from an in-process run.
  void set_inject_latency(std::chrono::microseconds latency);

  ConcurrencyGauges* gauges() const { return trace_ ? &trace_->gauges() : nullptr; }

 private:
  struct CallSig {
    CollectiveKind kind;
    int64_t count = 0;
    int root = -1;

    bool operator==(const CallSig& other) const = default;
  };

  struct Slot {
    CallSig sig;
    int arrived = 0;
    int returned = 0;
    bool all_arrived = false;
    bool done = false;
    bool failed = false;
    bool gauge_closed = false;
    Error::Kind fail_kind = Error::Kind::Mismatch;
    std::string fail_message;
    std::vector<Tensor*> buffers;           // indexed by rank
    std::vector<std::string> arrival_desc;  // indexed by rank
  };

  struct Communicator {
    std::vector<uint64_t> next_seq;             // per rank
    std::unordered_map<uint64_t, Slot> slots;   // keyed by sequence index
  };

  struct InFlight {
    uint64_t token;
    int rank;
    std::string desc;
  };

  void run_collective(CommId comm, int rank, CallSig sig, Tensor* buffer, int trace_key);
  [[noreturn]] void fail_slot(Slot& slot, Error::Kind kind, std::string message);
  [[noreturn]] void throw_slot_failure(const Slot& slot);
  std::string deadlock_report(CommId comm, uint64_t seq) const;  // requires mu_
  void close_slot_gauge(Slot& slot);

  const int num_ranks_;
  const std::chrono::milliseconds watchdog_;
  TraceSink* trace_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Communicator> comms_;
  std::vector<InFlight> in_flight_;
  uint64_t next_inflight_token_ = 0;
  std::chrono::microseconds latency_{0};
  bool started_ = false;
  bool latched_ = false;
  Error::Kind latch_kind_ = Error::Kind::Mismatch;
  std::string latch_message_;
};

}  // namespace collsim
