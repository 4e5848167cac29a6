#include "collsim/metrics.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "collsim/error.hpp"

namespace collsim {

double Metrics::mean_epoch_time() const {
  if (epoch_times_s.empty()) {
    return 0.0;
  }
  double sum = 0.0;
  for (double t : epoch_times_s) sum += t;
  return sum / static_cast<double>(epoch_times_s.size());
}

std::string metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["schema"] = "collsim-metrics-v1";
  j["mode"] = m.mode;
  j["model"] = m.model;
  j["workers"] = m.workers;
  j["engine_threads"] = m.engine_threads;
  j["outstanding"] = m.outstanding;
  j["epochs"] = m.epochs;
  j["global_batch"] = m.global_batch;
  j["seed"] = m.seed;
  j["epoch_times_s"] = m.epoch_times_s;
  j["final_train_loss"] = m.final_train_loss;
  j["test_accuracy"] = m.test_accuracy;
  j["max_concurrent_collectives"] = m.max_concurrent_collectives;
  j["compute_overlap_observed"] = m.compute_overlap_observed;
  if (m.error.empty()) {
    j["error"] = nullptr;
  } else {
    j["error"] = m.error;
  }
  j["error_classes"] = m.error_classes;
  return j.dump(2);
}

Metrics metrics_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("metrics: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != "collsim-metrics-v1") {
    throw ConfigError("metrics: unrecognized schema");
  }
  Metrics m;
  try {
    m.mode = j.at("mode").get<std::string>();
    m.model = j.at("model").get<std::string>();
    m.workers = j.at("workers").get<int>();
    m.engine_threads = j.at("engine_threads").get<int>();
    m.outstanding = j.at("outstanding").get<int>();
    m.epochs = j.at("epochs").get<int>();
    m.global_batch = j.at("global_batch").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.epoch_times_s = j.at("epoch_times_s").get<std::vector<double>>();
    m.final_train_loss = j.at("final_train_loss").get<double>();
    m.test_accuracy = j.at("test_accuracy").get<double>();
    m.max_concurrent_collectives = j.at("max_concurrent_collectives").get<int>();
    m.compute_overlap_observed = j.at("compute_overlap_observed").get<bool>();
    if (!j.at("error").is_null()) {
      m.error = j.at("error").get<std::string>();
    }
    m.error_classes = j.at("error_classes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("metrics: missing or mistyped field: ") + e.what());
  }
  return m;
}

void write_metrics(const Metrics& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw ConfigError("metrics: cannot open " + path);
  }
  out << metrics_to_json(m) << '\n';
}

Metrics read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("metrics: cannot open " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return metrics_from_json(buf.str());
}

CompareReport compare_metrics(const Metrics& a, const Metrics& b) {
  if (a.model != b.model || a.epochs != b.epochs || a.global_batch != b.global_batch ||
      static_cast<int>(a.epoch_times_s.size()) != static_cast<int>(b.epoch_times_s.size())) {
    throw ConfigError("compare: runs have different scenario shapes");
  }
  CompareReport r;
  r.mean_epoch_a = a.mean_epoch_time();
  r.mean_epoch_b = b.mean_epoch_time();
  r.epoch_time_ratio = r.mean_epoch_a > 0.0 ? r.mean_epoch_b / r.mean_epoch_a : 0.0;
  r.max_concurrent_a = a.max_concurrent_collectives;
  r.max_concurrent_b = b.max_concurrent_collectives;
  r.overlap_a = a.compute_overlap_observed;
  r.overlap_b = b.compute_overlap_observed;

  std::ostringstream os;
  os << "                          A(" << a.mode << ")  B(" << b.mode << ")\n";
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "mean epoch time (s)       " << r.mean_epoch_a << "  " << r.mean_epoch_b << "\n";
  os << "epoch time ratio B/A      ";
  os.precision(4);
  os << r.epoch_time_ratio << "\n";
  os << "max concurrent colls      " << r.max_concurrent_a << "  " << r.max_concurrent_b << "\n";
  os << "compute/comm overlap      " << (r.overlap_a ? "yes" : "no") << "  "
     << (r.overlap_b ? "yes" : "no") << "\n";
  r.text = os.str();
  return r;
}

}  // namespace collsim
