#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "collsim/data.hpp"
#include "collsim/engine.hpp"
#include "collsim/kvstore.hpp"
#include "collsim/model.hpp"

namespace collsim {

struct Hyperparams {
  double learning_rate = 0.1;
  int global_batch = 128;
  int epochs = 1;
  uint64_t seed = 1;
};

struct EpochStats {
  double wall_seconds = 0.0;
  double train_loss = 0.0;  // mean per-sample loss over the epoch
};

/// Engine tags for every schedulable model buffer, created on the worker's
/// engine. Unused tags (mlp has no branches) stay valid but idle.
struct ModelTags {
  std::vector<Tag> w;
  std::vector<Tag> g;
  Tag x, y, z1, act_a, act_b, cat, delta, d_cat, dz1_a, dz1_b, loss;
};

ModelTags make_model_tags(Engine& engine, const Model& model);

int iterations_per_epoch(const Dataset& train, int global_batch);

/// Pushes one iteration's batch load and forward/backward stage ops with
/// their read/mutate tag lists. In the diamond topology the two branch
/// backward stages share no tags, so the engine may run them concurrently.
void push_forward_backward(Engine& engine, Model& model, const ModelTags& tags,
                           const Dataset& train, int64_t row_begin);

/// Pushes `w[key] <- w[key] - lr * rescale * g[key]` as an engine op
/// (reads the gradient tag, mutates the weight tag).
void push_sgd_update(Engine& engine, Model& model, const ModelTags& tags, int key, double lr,
                     double rescale);

struct TrainPlan {
  KvMode mode = KvMode::Funnel;
  Topology topology = Topology::Diamond;
  Hyperparams hp;
  int num_ranks = 1;
  int rank = 0;
  int outstanding = 1;
};

/// Initializes every key on the store (rank 0 broadcast) and waits until
/// all ranks hold the broadcast weights.
void kv_init_model(Engine& engine, KvStore& store, Model& model, const ModelTags& tags);

/// One pass over the training set with the plan's per-mode loop shape:
/// funnel/concom interleave push/pull/update per key (concom adds a barrier
/// every `outstanding` keys); depcha/naive issue all pushes, then all
/// pulls+updates. Ends with wait_all.
EpochStats train_epoch(Engine& engine, KvStore& store, Model& model, const ModelTags& tags,
                       const Dataset& train, const TrainPlan& plan);

/// Plain serial SGD loop over global batches; no engine, no kvstore, no
/// transport. The reference the parallel runs are compared against.
std::vector<EpochStats> train_serial(Model& model, const Dataset& train, const Hyperparams& hp);

struct WorkerOutcome {
  std::vector<EpochStats> epochs;
  double accuracy = 0.0;
  std::vector<Tensor> final_weights;  // per key, filled on success
  bool failed = false;
  std::string first_error_class;
  std::string first_error;
  std::vector<std::string> error_classes;
};

/// Full life of one simulated worker: engine + store setup, weight
/// broadcast, epochs, evaluation. Collective and engine failures are
/// captured in the outcome instead of escaping.
WorkerOutcome run_worker(Transport& transport, const TrainPlan& plan, const DataSplit& data,
                         int engine_threads, TraceSink* trace,
                         const std::vector<CommId>& concom_comms);

}  // namespace collsim
