#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include "collsim/error.hpp"
#include "collsim/trace.hpp"

namespace collsim {

/// Opaque handle naming a schedulable data object. Tags are engine-scoped;
/// ids are never reused within an engine instance.
struct Tag {
  uint64_t id = 0;
  uint64_t engine_id = 0;
};

using OpId = uint64_t;

/// Rough task classification, used only for tracing and overlap gauges.
enum class OpKind { Compute, Copy, Collective, Other };

const char* op_kind_name(OpKind kind);

/// Asynchronous dependency-tracking executor. Closures are pushed with
/// explicit read/mutate tag lists from a single control thread; a pool of
/// worker threads runs each closure once every dependency is granted.
///
/// Per tag the engine keeps a FIFO of pending requests: a write request is
/// granted exclusively and blocks everything queued behind it; a run of read
/// requests at the queue head is granted together. Grants strictly follow
/// queue order, so writes to one tag execute in push order.
class Engine {
 public:
  /// `rank` only labels trace events. Bodies may block (collective
  /// rendezvous), so pool size must exceed the maximum number of
  /// simultaneously blocking bodies.
  explicit Engine(int num_worker_threads, int rank = 0, TraceSink* trace = nullptr);
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  Tag new_variable();

  /// Enqueues `body` behind the current holders of every listed tag and
  /// returns its push-sequence number. Never blocks on dependency
  /// availability. reads and mutates must be disjoint and engine-owned.
  OpId push(std::function<void()> body, const std::vector<Tag>& reads,
            const std::vector<Tag>& mutates, OpKind kind = OpKind::Other, int key = -1);

  /// Returns once every operation pushed so far that mutates `tag` has
  /// completed.
  void wait_for(const Tag& tag);

  /// Returns once every operation pushed before the call has completed.
  /// If any body failed, rethrows the first failure.
  void wait_all();

  /// Joins the worker pool. Idempotent. push after shutdown is an error.
  void shutdown();

  int num_threads() const { return static_cast<int>(workers_.size()); }
  uint64_t ops_pushed() const;
  uint64_t ops_completed() const;

 private:
  struct Operation {
    std::function<void()> body;
    std::vector<uint64_t> reads;
    std::vector<uint64_t> mutates;
    std::atomic<int> pending{0};
    OpId id = 0;
    OpKind kind = OpKind::Other;
    int key = -1;
  };

  struct QueueEntry {
    Operation* op;
    bool write;
    bool granted = false;
  };

  struct VarRecord {
    std::deque<QueueEntry> queue;
    uint64_t writes_pushed = 0;
    uint64_t writes_done = 0;
  };

  void worker_loop();
  void grant_head(VarRecord& var);           // requires mu_ held
  void complete(Operation* op);              // requires mu_ held
  void decrement_pending(Operation* op);     // requires mu_ held
  VarRecord& var_for(const Tag& tag);        // requires mu_ held

  const uint64_t engine_id_;
  const int rank_;
  TraceSink* trace_;

  mutable std::mutex mu_;
  std::condition_variable work_cv_;     // workers: ready op or stop
  std::condition_variable control_cv_;  // control thread: completions
  std::unordered_map<uint64_t, VarRecord> vars_;
  std::deque<Operation*> ready_;
  std::unordered_map<OpId, std::unique_ptr<Operation>> live_;
  uint64_t next_tag_ = 0;
  OpId next_op_ = 0;
  uint64_t ops_done_ = 0;
  bool stopping_ = false;
  bool shut_down_ = false;
  bool poisoned_ = false;
  std::exception_ptr first_failure_;
  std::vector<std::thread> workers_;
};

}  // namespace collsim
