#include "collsim/trace.hpp"

#include <fstream>

#include <json.hpp>

namespace collsim {

TraceSink::TraceSink() : start_(std::chrono::steady_clock::now()) {}

void TraceSink::emit(TraceEvent ev) {
  std::lock_guard<std::mutex> lock(mu_);
  ev.t_us = std::chrono::duration_cast<std::chrono::microseconds>(
                std::chrono::steady_clock::now() - start_)
                .count();
  events_.push_back(std::move(ev));
}

std::vector<TraceEvent> TraceSink::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return events_;
}

size_t TraceSink::count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return events_.size();
}

void TraceSink::write_jsonl(const std::string& path) const {
  std::vector<TraceEvent> events = snapshot();
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("trace: cannot open " + path);
  }
  for (const TraceEvent& ev : events) {
    nlohmann::json j;
    j["t_us"] = ev.t_us;
    j["rank"] = ev.rank;
    j["event"] = ev.event;
    if (ev.op >= 0) j["op"] = ev.op;
    if (ev.key >= 0) j["key"] = ev.key;
    if (ev.comm >= 0) j["comm"] = ev.comm;
    if (ev.seq >= 0) j["seq"] = ev.seq;
    if (!ev.kind.empty()) j["kind"] = ev.kind;
    out << j.dump() << '\n';
  }
}

}  // namespace collsim
