#include "collsim/engine.hpp"

#include <algorithm>

namespace collsim {

namespace {
std::atomic<uint64_t> g_engine_ids{1};
}

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::Compute: return "compute";
    case OpKind::Copy: return "copy";
    case OpKind::Collective: return "collective";
    case OpKind::Other: return "other";
  }
  return "other";
}

Engine::Engine(int num_worker_threads, int rank, TraceSink* trace)
    : engine_id_(g_engine_ids.fetch_add(1)), rank_(rank), trace_(trace) {
  if (num_worker_threads < 1) {
    throw ConfigError("Engine: worker pool size must be >= 1");
  }
  workers_.reserve(static_cast<size_t>(num_worker_threads));
  for (int i = 0; i < num_worker_threads; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

Engine::~Engine() { shutdown(); }

Tag Engine::new_variable() {
  std::lock_guard<std::mutex> lock(mu_);
  uint64_t id = next_tag_++;
  vars_.emplace(id, VarRecord{});
  return Tag{id, engine_id_};
}

Engine::VarRecord& Engine::var_for(const Tag& tag) {
  if (tag.engine_id != engine_id_) {
    throw UsageError("Engine: tag belongs to a different engine");
  }
  auto it = vars_.find(tag.id);
  if (it == vars_.end()) {
    throw UsageError("Engine: unknown tag");
  }
  return it->second;
}

OpId Engine::push(std::function<void()> body, const std::vector<Tag>& reads,
                  const std::vector<Tag>& mutates, OpKind kind, int key) {
  OpId id;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (shut_down_ || stopping_) {
      throw UsageError("Engine: push after shutdown");
    }
    for (const Tag& r : reads) {
      for (const Tag& m : mutates) {
        if (r.id == m.id) {
          throw UsageError("Engine: a tag may not appear in both reads and mutates");
        }
      }
    }
    // Validate all tags before touching any queue.
    for (const Tag& t : reads) var_for(t);
    for (const Tag& t : mutates) var_for(t);

    id = next_op_++;
    auto op = std::make_unique<Operation>();
    op->body = std::move(body);
    op->id = id;
    op->kind = kind;
    op->key = key;
    for (const Tag& t : reads) op->reads.push_back(t.id);
    for (const Tag& t : mutates) op->mutates.push_back(t.id);
    op->pending.store(static_cast<int>(op->reads.size() + op->mutates.size()));

    Operation* raw = op.get();
    live_.emplace(id, std::move(op));

    // Emitted before the op can become runnable so op_pushed always
    // precedes op_started in the sink.
    if (trace_) {
      trace_->emit(TraceEvent{.rank = rank_,
                              .event = "op_pushed",
                              .op = static_cast<int64_t>(id),
                              .key = key,
                              .kind = op_kind_name(kind)});
    }

    if (raw->pending.load() == 0) {
      ready_.push_back(raw);
      work_cv_.notify_one();
    } else {
      for (uint64_t t : raw->reads) {
        vars_[t].queue.push_back(QueueEntry{raw, false});
      }
      for (uint64_t t : raw->mutates) {
        VarRecord& var = vars_[t];
        var.queue.push_back(QueueEntry{raw, true});
        var.writes_pushed++;
      }
      for (uint64_t t : raw->reads) grant_head(vars_[t]);
      for (uint64_t t : raw->mutates) grant_head(vars_[t]);
    }
  }
  return id;
}

void Engine::grant_head(VarRecord& var) {
  auto it = var.queue.begin();
  if (it == var.queue.end()) {
    return;
  }
  if (it->write) {
    if (!it->granted) {
      it->granted = true;
      decrement_pending(it->op);
    }
    return;
  }
  // Maximal head run of reads is granted together; a write further back
  // stays blocked until the whole run has completed and popped.
  for (; it != var.queue.end() && !it->write; ++it) {
    if (!it->granted) {
      it->granted = true;
      decrement_pending(it->op);
    }
  }
}

void Engine::decrement_pending(Operation* op) {
  if (op->pending.fetch_sub(1) == 1) {
    ready_.push_back(op);
    work_cv_.notify_one();
  }
}

void Engine::complete(Operation* op) {
  for (uint64_t t : op->reads) {
    VarRecord& var = vars_[t];
    auto it = std::find_if(var.queue.begin(), var.queue.end(),
                           [op](const QueueEntry& e) { return e.op == op && !e.write; });
    var.queue.erase(it);
    grant_head(var);
  }
  for (uint64_t t : op->mutates) {
    VarRecord& var = vars_[t];
    auto it = std::find_if(var.queue.begin(), var.queue.end(),
                           [op](const QueueEntry& e) { return e.op == op && e.write; });
    var.queue.erase(it);
    var.writes_done++;
    grant_head(var);
  }
  live_.erase(op->id);
  ops_done_++;
  control_cv_.notify_all();
}

void Engine::worker_loop() {
  for (;;) {
    Operation* op = nullptr;
    {
      std::unique_lock<std::mutex> lock(mu_);
      work_cv_.wait(lock, [this] { return stopping_ || !ready_.empty(); });
      if (ready_.empty()) {
        return;  // stopping and drained
      }
      op = ready_.front();
      ready_.pop_front();
    }

    if (trace_) {
      trace_->emit(TraceEvent{.rank = rank_,
                              .event = "op_started",
                              .op = static_cast<int64_t>(op->id),
                              .key = op->key,
                              .kind = op_kind_name(op->kind)});
    }
    ConcurrencyGauges* gauges = trace_ ? &trace_->gauges() : nullptr;
    if (gauges && op->kind == OpKind::Compute) {
      gauges->compute_started();
    }

    std::exception_ptr failure;
    try {
      op->body();
    } catch (...) {
      failure = std::current_exception();
    }

    if (gauges && op->kind == OpKind::Compute) {
      gauges->compute_finished();
    }
    if (trace_) {
      trace_->emit(TraceEvent{.rank = rank_,
                              .event = "op_finished",
                              .op = static_cast<int64_t>(op->id),
                              .key = op->key,
                              .kind = op_kind_name(op->kind)});
    }

    {
      std::lock_guard<std::mutex> lock(mu_);
      if (failure && !poisoned_) {
        poisoned_ = true;
        first_failure_ = failure;
      }
      complete(op);
    }
  }
}

void Engine::wait_for(const Tag& tag) {
  std::unique_lock<std::mutex> lock(mu_);
  VarRecord& var = var_for(tag);
  const uint64_t target = var.writes_pushed;
  control_cv_.wait(lock, [&var, target] { return var.writes_done >= target; });
}

void Engine::wait_all() {
  std::unique_lock<std::mutex> lock(mu_);
  const uint64_t target = next_op_;
  control_cv_.wait(lock, [this, target] { return ops_done_ >= target; });
  if (poisoned_) {
    std::rethrow_exception(first_failure_);
  }
}

void Engine::shutdown() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (shut_down_) {
      return;
    }
    stopping_ = true;
    shut_down_ = true;
    work_cv_.notify_all();
  }
  for (std::thread& t : workers_) {
    t.join();
  }
}

uint64_t Engine::ops_pushed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return next_op_;
}

uint64_t Engine::ops_completed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return ops_done_;
}

}  // namespace collsim
