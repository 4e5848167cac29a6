#include "collsim/collective.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

namespace collsim {

const char* collective_kind_name(CollectiveKind kind) {
  switch (kind) {
    case CollectiveKind::AllreduceSum: return "allreduce";
    case CollectiveKind::Broadcast: return "broadcast";
    case CollectiveKind::Barrier: return "barrier";
  }
  return "unknown";
}

namespace {

std::string describe(CollectiveKind kind, int64_t count, int root) {
  std::ostringstream os;
  os << collective_kind_name(kind);
  if (kind == CollectiveKind::AllreduceSum) {
    os << "(count=" << count << ")";
  } else if (kind == CollectiveKind::Broadcast) {
    os << "(count=" << count << ", root=" << root << ")";
  }
  return os.str();
}

}  // namespace

Transport::Transport(int num_ranks, std::chrono::milliseconds watchdog, TraceSink* trace)
    : num_ranks_(num_ranks), watchdog_(watchdog), trace_(trace) {
  if (num_ranks < 1) {
    throw ConfigError("Transport: num_ranks must be >= 1");
  }
  if (watchdog.count() <= 0) {
    throw ConfigError("Transport: watchdog duration must be positive");
  }
  comms_.push_back(Communicator{std::vector<uint64_t>(static_cast<size_t>(num_ranks), 0), {}});
}

CommId Transport::new_communicator() {
  std::lock_guard<std::mutex> lock(mu_);
  if (started_) {
    throw UsageError("Transport: communicators must be created before workers start issuing collectives");
  }
  comms_.push_back(Communicator{std::vector<uint64_t>(static_cast<size_t>(num_ranks_), 0), {}});
  return static_cast<CommId>(comms_.size() - 1);
}

int Transport::num_communicators() const {
  std::lock_guard<std::mutex> lock(mu_);
  return static_cast<int>(comms_.size());
}

void Transport::set_inject_latency(std::chrono::microseconds latency) {
  std::lock_guard<std::mutex> lock(mu_);
  latency_ = latency;
}

void Transport::allreduce_sum(CommId comm, int rank, Tensor& buffer, int trace_key) {
  if (buffer.size() <= 0) {
    throw UsageError("allreduce_sum: empty buffer");
  }
  run_collective(comm, rank, CallSig{CollectiveKind::AllreduceSum, buffer.size(), -1}, &buffer,
                 trace_key);
}

void Transport::broadcast(CommId comm, int rank, int root, Tensor& buffer, int trace_key) {
  if (root < 0 || root >= num_ranks_) {
    throw UsageError("broadcast: root out of range");
  }
  run_collective(comm, rank, CallSig{CollectiveKind::Broadcast, buffer.size(), root}, &buffer,
                 trace_key);
}

void Transport::barrier(CommId comm, int rank, int trace_key) {
  run_collective(comm, rank, CallSig{CollectiveKind::Barrier, 0, -1}, nullptr, trace_key);
}

void Transport::close_slot_gauge(Slot& slot) {
  if (!slot.gauge_closed) {
    slot.gauge_closed = true;
    if (trace_) {
      trace_->gauges().collective_closed();
    }
  }
}

void Transport::fail_slot(Slot& slot, Error::Kind kind, std::string message) {
  slot.failed = true;
  slot.fail_kind = kind;
  slot.fail_message = message;
  close_slot_gauge(slot);
  // Collective failures are unrecoverable for the whole run: latch so every
  // current and future call unblocks with the original error instead of
  // burning its own watchdog.
  latched_ = true;
  latch_kind_ = kind;
  latch_message_ = std::move(message);
  cv_.notify_all();
  throw_slot_failure(slot);
}

void Transport::throw_slot_failure(const Slot& slot) {
  if (slot.fail_kind == Error::Kind::DeadlockTimeout) {
    throw DeadlockTimeout(slot.fail_message);
  }
  throw MismatchError(slot.fail_message);
}

std::string Transport::deadlock_report(CommId comm, uint64_t seq) const {
  std::ostringstream os;
  os << "rendezvous on comm " << comm << " seq " << seq << " incomplete after "
     << watchdog_.count() << " ms;";
  for (int r = 0; r < num_ranks_; ++r) {
    os << " rank " << r << ": ";
    bool any = false;
    for (const InFlight& f : in_flight_) {
      if (f.rank == r) {
        if (any) os << ", ";
        os << f.desc;
        any = true;
      }
    }
    if (!any) {
      os << "no call issued";
    }
    if (r + 1 < num_ranks_) os << ";";
  }
  return os.str();
}

void Transport::run_collective(CommId comm, int rank, CallSig sig, Tensor* buffer,
                               int trace_key) {
  std::unique_lock<std::mutex> lock(mu_);
  if (rank < 0 || rank >= num_ranks_) {
    throw UsageError("collective: rank out of range");
  }
  if (comm < 0 || comm >= static_cast<CommId>(comms_.size())) {
    throw UsageError("collective: unknown communicator");
  }
  if (latched_) {
    if (latch_kind_ == Error::Kind::DeadlockTimeout) throw DeadlockTimeout(latch_message_);
    throw MismatchError(latch_message_);
  }
  started_ = true;

  Communicator& c = comms_[static_cast<size_t>(comm)];
  const uint64_t seq = c.next_seq[static_cast<size_t>(rank)]++;

  Slot& slot = c.slots[seq];
  if (slot.buffers.empty()) {
    slot.buffers.assign(static_cast<size_t>(num_ranks_), nullptr);
    slot.arrival_desc.assign(static_cast<size_t>(num_ranks_), "");
  }

  const std::string call_desc = describe(sig.kind, sig.count, sig.root);
  const uint64_t token = next_inflight_token_++;
  {
    std::ostringstream os;
    os << call_desc << " on comm " << comm << " seq " << seq;
    in_flight_.push_back(InFlight{token, rank, os.str()});
  }
  auto drop_in_flight = [this, token] {
    auto it = std::find_if(in_flight_.begin(), in_flight_.end(),
                           [token](const InFlight& f) { return f.token == token; });
    if (it != in_flight_.end()) in_flight_.erase(it);
  };

  if (trace_) {
    trace_->emit(TraceEvent{.rank = rank,
                            .event = "coll_enqueued",
                            .key = trace_key,
                            .comm = comm,
                            .seq = static_cast<int64_t>(seq),
                            .kind = collective_kind_name(sig.kind)});
  }

  if (slot.failed) {
    drop_in_flight();
    throw_slot_failure(slot);
  }

  if (slot.arrived == 0) {
    slot.sig = sig;
    if (trace_) {
      trace_->gauges().collective_opened();
    }
  } else if (!(slot.sig == sig)) {
    slot.arrival_desc[static_cast<size_t>(rank)] = call_desc;
    std::ostringstream os;
    os << "collective signature mismatch on comm " << comm << " seq " << seq << ":";
    for (int r = 0; r < num_ranks_; ++r) {
      const std::string& d = slot.arrival_desc[static_cast<size_t>(r)];
      if (!d.empty()) {
        os << " rank " << r << ": " << d << ";";
      }
    }
    drop_in_flight();
    fail_slot(slot, Error::Kind::Mismatch, os.str());
  }

  slot.buffers[static_cast<size_t>(rank)] = buffer;
  slot.arrival_desc[static_cast<size_t>(rank)] = call_desc;
  slot.arrived++;

  if (slot.arrived == num_ranks_) {
    // Last arriver completes the rendezvous: it plays the reducer and pays
    // the injected latency.
    slot.all_arrived = true;
    if (trace_) {
      trace_->emit(TraceEvent{.rank = rank,
                              .event = "coll_matched",
                              .key = trace_key,
                              .comm = comm,
                              .seq = static_cast<int64_t>(seq),
                              .kind = collective_kind_name(sig.kind)});
    }
    const auto latency = latency_;
    if (latency.count() > 0) {
      lock.unlock();
      std::this_thread::sleep_for(latency);
      lock.lock();
    }
    if (sig.kind == CollectiveKind::AllreduceSum) {
      // Fixed rank-order accumulation keeps results deterministic.
      Tensor acc = *slot.buffers[0];
      for (int r = 1; r < num_ranks_; ++r) {
        add_inplace(acc, *slot.buffers[static_cast<size_t>(r)]);
      }
      for (int r = 0; r < num_ranks_; ++r) {
        copy(acc, *slot.buffers[static_cast<size_t>(r)]);
      }
    } else if (sig.kind == CollectiveKind::Broadcast) {
      const Tensor& src = *slot.buffers[static_cast<size_t>(sig.root)];
      for (int r = 0; r < num_ranks_; ++r) {
        if (r != sig.root) {
          copy(src, *slot.buffers[static_cast<size_t>(r)]);
        }
      }
    }
    slot.done = true;
    close_slot_gauge(slot);
    cv_.notify_all();
  } else {
    const auto deadline = std::chrono::steady_clock::now() + watchdog_;
    for (;;) {
      // Once every rank has arrived the rendezvous completes locally and
      // quickly; only an incomplete one can dead-end, so the watchdog and
      // the failure latch apply solely before full arrival.
      if (slot.done || slot.failed) break;
      if (slot.all_arrived) {
        cv_.wait(lock);
        continue;
      }
      if (latched_) break;
      if (cv_.wait_until(lock, deadline) == std::cv_status::timeout &&
          !(slot.done || slot.failed || slot.all_arrived || latched_)) {
        fail_slot(slot, Error::Kind::DeadlockTimeout, deadlock_report(comm, seq));
      }
    }
    if (slot.failed) {
      drop_in_flight();
      throw_slot_failure(slot);
    }
    if (!slot.done && latched_) {
      drop_in_flight();
      close_slot_gauge(slot);
      if (latch_kind_ == Error::Kind::DeadlockTimeout) throw DeadlockTimeout(latch_message_);
      throw MismatchError(latch_message_);
    }
  }

  drop_in_flight();
  if (trace_) {
    trace_->emit(TraceEvent{.rank = rank,
                            .event = "coll_done",
                            .key = trace_key,
                            .comm = comm,
                            .seq = static_cast<int64_t>(seq),
                            .kind = collective_kind_name(sig.kind)});
  }
  slot.returned++;
  if (slot.returned == num_ranks_) {
    c.slots.erase(seq);
  }
}

}  // namespace collsim
