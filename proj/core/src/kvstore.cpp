#include "collsim/kvstore.hpp"

#include <utility>

namespace collsim {

KvMode parse_kv_mode(const std::string& name) {
  if (name == "funnel") return KvMode::Funnel;
  if (name == "depcha") return KvMode::DepCha;
  if (name == "concom") return KvMode::ConCom;
  if (name == "naive") return KvMode::Naive;
  throw ConfigError("unknown kvstore mode: " + name);
}

const char* kv_mode_name(KvMode mode) {
  switch (mode) {
    case KvMode::Funnel: return "funnel";
    case KvMode::DepCha: return "depcha";
    case KvMode::ConCom: return "concom";
    case KvMode::Naive: return "naive";
  }
  return "unknown";
}

std::vector<CommId> create_communicators(Transport& transport, int count) {
  std::vector<CommId> comms;
  comms.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    comms.push_back(transport.new_communicator());
  }
  return comms;
}

KvStore::KvStore(Engine& engine, Transport& transport, int rank, KvConfig config,
                 std::vector<CommId> concom_comms)
    : engine_(engine),
      transport_(transport),
      rank_(rank),
      config_(config),
      comms_(std::move(concom_comms)) {
  if (config_.num_keys < 1) {
    throw ConfigError("KvStore: num_keys must be >= 1");
  }
  if (config_.mode == KvMode::ConCom) {
    if (config_.outstanding < 1) {
      throw ConfigError("KvStore: concom requires outstanding >= 1");
    }
    if (static_cast<int>(comms_.size()) != config_.outstanding) {
      throw ConfigError("KvStore: concom requires exactly `outstanding` communicators");
    }
  }
  comm_buf_.reserve(static_cast<size_t>(config_.num_keys));
  comm_buf_tag_.resize(static_cast<size_t>(config_.num_keys));
  initialized_.assign(static_cast<size_t>(config_.num_keys), false);
  pushed_.assign(static_cast<size_t>(config_.num_keys), false);
  init_order_tag_ = engine_.new_variable();
  if (config_.mode == KvMode::DepCha) {
    dummy_tag_ = engine_.new_variable();
  }
}

void KvStore::check_key(int key, bool must_be_initialized) const {
  if (key < 0 || key >= config_.num_keys) {
    throw UsageError("KvStore: key out of range");
  }
  if (must_be_initialized && !initialized_[static_cast<size_t>(key)]) {
    throw UsageError("KvStore: key not initialized");
  }
}

const Tensor& KvStore::comm_buf(int key) const {
  check_key(key, true);
  return comm_buf_[static_cast<size_t>(key)];
}

void KvStore::init(int key, TensorSlot weights) {
  check_key(key, false);
  if (initialized_[static_cast<size_t>(key)]) {
    throw UsageError("KvStore: duplicate init for key");
  }
  if (static_cast<size_t>(key) != comm_buf_.size()) {
    throw UsageError("KvStore: keys must be initialized densely, in order");
  }
  comm_buf_.emplace_back(weights.value.shape());
  comm_buf_tag_[static_cast<size_t>(key)] = engine_.new_variable();
  initialized_[static_cast<size_t>(key)] = true;

  // Rank 0's initial weights reach everyone through a world broadcast. The
  // op mutates the weight tensor (non-root ranks are overwritten) plus a
  // store-wide ordering tag, so each rank issues its K broadcasts in key
  // order and the world sequence indices line up.
  Tensor* value = &weights.value;
  Transport* transport = &transport_;
  int rank = rank_;
  engine_.push([transport, rank, value, key] { transport->broadcast(Transport::world(), rank, 0, *value, key); },
               {}, {weights.tag, init_order_tag_}, OpKind::Collective, key);
}

void KvStore::push(int key, TensorSlot grad) {
  check_key(key, true);
  Tensor* buf = &comm_buf_[static_cast<size_t>(key)];
  if (!(grad.value.shape() == buf->shape())) {
    throw UsageError("KvStore: pushed gradient shape differs from init shape");
  }
  const Tag buf_tag = comm_buf_tag_[static_cast<size_t>(key)];

  // All modes start by staging the gradient into the communication buffer.
  const Tensor* src = &grad.value;
  engine_.push([src, buf] { copy(*src, *buf); }, {grad.tag}, {buf_tag}, OpKind::Copy, key);

  switch (config_.mode) {
    case KvMode::Funnel: {
      engine_.wait_for(buf_tag);
      transport_.allreduce_sum(Transport::world(), rank_, *buf, key);
      break;
    }
    case KvMode::ConCom: {
      engine_.wait_for(buf_tag);
      const CommId comm = comms_[static_cast<size_t>(key % config_.outstanding)];
      Transport* transport = &transport_;
      std::atomic<int>* outstanding = &mpi_outstanding_;
      int rank = rank_;
      mpi_outstanding_.fetch_add(1);
      engine_.push(
          [transport, outstanding, comm, rank, buf, key] {
            struct Drain {
              std::atomic<int>* counter;
              ~Drain() {
                counter->fetch_sub(1);
                counter->notify_all();
              }
            } drain{outstanding};
            transport->allreduce_sum(comm, rank, *buf, key);
          },
          {grad.tag}, {buf_tag}, OpKind::Collective, key);
      break;
    }
    case KvMode::DepCha:
    case KvMode::Naive:
      break;  // communication happens in pull
  }
  pushed_[static_cast<size_t>(key)] = true;
}

void KvStore::pull(int key, TensorSlot out) {
  check_key(key, true);
  if (!pushed_[static_cast<size_t>(key)]) {
    throw UsageError("KvStore: pull without a preceding push this iteration");
  }
  Tensor* buf = &comm_buf_[static_cast<size_t>(key)];
  if (!(out.value.shape() == buf->shape())) {
    throw UsageError("KvStore: pull output shape differs from init shape");
  }
  const Tag buf_tag = comm_buf_tag_[static_cast<size_t>(key)];

  switch (config_.mode) {
    case KvMode::Funnel:
    case KvMode::ConCom: {
      Tensor* dst = &out.value;
      engine_.push([buf, dst] { copy(*buf, *dst); }, {buf_tag}, {out.tag}, OpKind::Copy, key);
      break;
    }
    case KvMode::DepCha:
    case KvMode::Naive: {
      Tensor* dst = &out.value;
      Transport* transport = &transport_;
      int rank = rank_;
      auto body = [transport, rank, buf, dst, key] {
        transport->allreduce_sum(Transport::world(), rank, *buf, key);
        copy(*buf, *dst);
      };
      std::vector<Tag> mutates{out.tag};
      if (config_.mode == KvMode::DepCha) {
        // The shared dummy tag chains these ops through the engine's
        // write-order rule; naive omits it and loses cross-rank ordering.
        mutates.push_back(dummy_tag_);
      }
      engine_.push(std::move(body), {buf_tag}, mutates, OpKind::Collective, key);
      break;
    }
  }
  pushed_[static_cast<size_t>(key)] = false;
}

void KvStore::barrier() {
  if (config_.mode != KvMode::ConCom) {
    return;
  }
  for (int v = mpi_outstanding_.load(); v != 0; v = mpi_outstanding_.load()) {
    mpi_outstanding_.wait(v);
  }
  transport_.barrier(Transport::world(), rank_);
}

}  // namespace collsim
