#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "collsim/collective.hpp"
#include "collsim/engine.hpp"
#include "collsim/tensor.hpp"

namespace collsim {

/// A tensor paired with its engine tag; the unit the kvstore and trainer
/// hand around for weights and gradients. Non-owning view: the referenced
/// tensor must outlive every engine op pushed against it.
struct TensorSlot {
  Tensor& value;
  Tag tag;
};

enum class KvMode { Funnel, DepCha, ConCom, Naive };

KvMode parse_kv_mode(const std::string& name);
const char* kv_mode_name(KvMode mode);

struct KvConfig {
  KvMode mode = KvMode::Funnel;
  int outstanding = 1;  // concom: number of extra communicators / window size
  int num_keys = 0;
};

/// Creates `count` communicators on the transport; must run once, before any
/// worker issues a collective. The returned ids are passed to every rank's
/// concom store.
std::vector<CommId> create_communicators(Transport& transport, int count);

/// Per-worker init/push/pull/barrier facade over the engine and transport.
///
/// Modes:
///  - funnel: the control thread itself runs every allreduce on the world
///    communicator after waiting for the gradient copy, so issue order is
///    trivially consistent across ranks.
///  - concom: allreduces are offloaded to the engine and hashed across
///    `outstanding` dedicated communicators; barrier() drains the in-flight
///    counter and runs a world barrier.
///  - depcha: push only copies into the comm buffer; pull offloads one op
///    that allreduces on world and copies the result out, with a shared
///    dummy tag in its mutate list so the engine's write ordering serializes
///    all such ops in push order.
///  - naive: depcha without the dummy tag. Deliberately broken: with more
///    than one engine thread, ranks can issue world allreduces in different
///    orders, which the transport surfaces as MismatchError or
///    DeadlockTimeout.
class KvStore {
 public:
  KvStore(Engine& engine, Transport& transport, int rank, KvConfig config,
          std::vector<CommId> concom_comms = {});

  /// Allocates the key's communication buffer and pushes an engine op that
  /// broadcasts rank 0's tensor over the world communicator. Broadcast ops
  /// share an ordering tag so every rank issues them in key order.
  void init(int key, TensorSlot weights);

  /// Submits this iteration's gradient for global aggregation.
  void push(int key, TensorSlot grad);

  /// Retrieves the aggregated gradient into `out` (mode-dependent; see class
  /// comment). Requires a push of the same key first.
  void pull(int key, TensorSlot out);

  /// concom: waits until no offloaded allreduce is in flight, then runs a
  /// world barrier. No-op in the other modes.
  void barrier();

  int rank() const { return rank_; }
  const KvConfig& config() const { return config_; }
  int outstanding_in_flight() const { return mpi_outstanding_.load(); }
  const Tensor& comm_buf(int key) const;

 private:
  void check_key(int key, bool must_be_initialized) const;

  Engine& engine_;
  Transport& transport_;
  const int rank_;
  const KvConfig config_;
  std::vector<CommId> comms_;

  std::vector<Tensor> comm_buf_;
  std::vector<Tag> comm_buf_tag_;
  std::vector<bool> initialized_;
  std::vector<bool> pushed_;
  Tag init_order_tag_;
  Tag dummy_tag_;
  std::atomic<int> mpi_outstanding_{0};
};

}  // namespace collsim
