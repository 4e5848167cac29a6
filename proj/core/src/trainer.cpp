#include "collsim/trainer.hpp"

#include <chrono>

namespace collsim {

ModelTags make_model_tags(Engine& engine, const Model& model) {
  ModelTags tags;
  tags.w.reserve(static_cast<size_t>(model.num_keys()));
  tags.g.reserve(static_cast<size_t>(model.num_keys()));
  for (int k = 0; k < model.num_keys(); ++k) {
    tags.w.push_back(engine.new_variable());
    tags.g.push_back(engine.new_variable());
  }
  tags.x = engine.new_variable();
  tags.y = engine.new_variable();
  tags.z1 = engine.new_variable();
  tags.act_a = engine.new_variable();
  tags.act_b = engine.new_variable();
  tags.cat = engine.new_variable();
  tags.delta = engine.new_variable();
  tags.d_cat = engine.new_variable();
  tags.dz1_a = engine.new_variable();
  tags.dz1_b = engine.new_variable();
  tags.loss = engine.new_variable();
  return tags;
}

int iterations_per_epoch(const Dataset& train, int global_batch) {
  if (global_batch < 1) {
    throw ConfigError("iterations_per_epoch: global batch must be >= 1");
  }
  return static_cast<int>(train.size() / global_batch);
}

void push_forward_backward(Engine& engine, Model& model, const ModelTags& tags,
                           const Dataset& train, int64_t row_begin) {
  Model* m = &model;
  const Dataset* data = &train;
  const int64_t rows = model.batch();

  engine.push([m, data, row_begin, rows] { m->load_rows(*data, row_begin, rows); }, {},
              {tags.x, tags.y}, OpKind::Compute);
  engine.push([m] { m->stage_forward_trunk(); }, {tags.x, tags.w[0], tags.w[1]}, {tags.z1},
              OpKind::Compute, 0);

  if (model.topology() == Topology::Mlp) {
    engine.push([m] { m->stage_forward_out(); }, {tags.z1, tags.w[2], tags.w[3], tags.y},
                {tags.delta, tags.loss}, OpKind::Compute, 2);
    engine.push([m] { m->stage_backward_out(); }, {tags.z1, tags.delta, tags.w[2]},
                {tags.g[2], tags.g[3], tags.d_cat}, OpKind::Compute, 2);
    engine.push([m] { m->stage_backward_trunk(); }, {tags.d_cat, tags.z1, tags.x},
                {tags.g[0], tags.g[1]}, OpKind::Compute, 0);
    return;
  }

  engine.push([m] { m->stage_forward_branch_a(); }, {tags.z1, tags.w[2], tags.w[3]}, {tags.act_a},
              OpKind::Compute, 2);
  engine.push([m] { m->stage_forward_branch_b(); }, {tags.z1, tags.w[4], tags.w[5]}, {tags.act_b},
              OpKind::Compute, 4);
  engine.push([m] { m->stage_forward_out(); },
              {tags.act_a, tags.act_b, tags.w[6], tags.w[7], tags.y},
              {tags.cat, tags.delta, tags.loss}, OpKind::Compute, 6);
  engine.push([m] { m->stage_backward_out(); }, {tags.cat, tags.delta, tags.w[6]},
              {tags.g[6], tags.g[7], tags.d_cat}, OpKind::Compute, 6);
  engine.push([m] { m->stage_backward_branch_a(); }, {tags.d_cat, tags.act_a, tags.z1, tags.w[2]},
              {tags.g[2], tags.g[3], tags.dz1_a}, OpKind::Compute, 2);
  engine.push([m] { m->stage_backward_branch_b(); }, {tags.d_cat, tags.act_b, tags.z1, tags.w[4]},
              {tags.g[4], tags.g[5], tags.dz1_b}, OpKind::Compute, 4);
  engine.push([m] { m->stage_backward_trunk(); }, {tags.dz1_a, tags.dz1_b, tags.z1, tags.x},
              {tags.g[0], tags.g[1]}, OpKind::Compute, 0);
}

void push_sgd_update(Engine& engine, Model& model, const ModelTags& tags, int key, double lr,
                     double rescale) {
  Model* m = &model;
  engine.push([m, key, lr, rescale] { sgd_update(m->weight(key), m->grad(key), lr, rescale); },
              {tags.g[static_cast<size_t>(key)]}, {tags.w[static_cast<size_t>(key)]},
              OpKind::Compute, key);
}

void kv_init_model(Engine& engine, KvStore& store, Model& model, const ModelTags& tags) {
  for (int key = 0; key < model.num_keys(); ++key) {
    store.init(key, TensorSlot{model.weight(key), tags.w[static_cast<size_t>(key)]});
  }
  engine.wait_all();
}

EpochStats train_epoch(Engine& engine, KvStore& store, Model& model, const ModelTags& tags,
                       const Dataset& train, const TrainPlan& plan) {
  const int iters = iterations_per_epoch(train, plan.hp.global_batch);
  if (iters < 1) {
    throw ConfigError("train_epoch: dataset smaller than one global batch");
  }
  const int per_rank = plan.hp.global_batch / plan.num_ranks;
  const double rescale = 1.0 / static_cast<double>(plan.hp.global_batch);
  const double lr = plan.hp.learning_rate;
  const int num_keys = model.num_keys();

  model.reset_loss();
  const auto t0 = std::chrono::steady_clock::now();

  for (int iter = 0; iter < iters; ++iter) {
    const int64_t row_begin = static_cast<int64_t>(iter) * plan.hp.global_batch +
                              static_cast<int64_t>(plan.rank) * per_rank;
    push_forward_backward(engine, model, tags, train, row_begin);

    auto grad_slot = [&](int key) {
      return TensorSlot{model.grad(key), tags.g[static_cast<size_t>(key)]};
    };

    switch (plan.mode) {
      case KvMode::Funnel:
      case KvMode::ConCom: {
        int since_barrier = 0;
        for (int key = 0; key < num_keys; ++key) {
          store.push(key, grad_slot(key));
          store.pull(key, grad_slot(key));
          push_sgd_update(engine, model, tags, key, lr, rescale);
          if (plan.mode == KvMode::ConCom && ++since_barrier == plan.outstanding) {
            store.barrier();
            since_barrier = 0;
          }
        }
        if (plan.mode == KvMode::ConCom && since_barrier > 0) {
          store.barrier();  // flush the trailing window
        }
        break;
      }
      case KvMode::DepCha:
      case KvMode::Naive: {
        for (int key = 0; key < num_keys; ++key) {
          store.push(key, grad_slot(key));
        }
        for (int key = 0; key < num_keys; ++key) {
          store.pull(key, grad_slot(key));
          push_sgd_update(engine, model, tags, key, lr, rescale);
        }
        break;
      }
    }
  }

  engine.wait_all();
  const auto t1 = std::chrono::steady_clock::now();

  EpochStats stats;
  stats.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  stats.train_loss = model.loss_accum() / (static_cast<double>(iters) * per_rank);
  return stats;
}

std::vector<EpochStats> train_serial(Model& model, const Dataset& train, const Hyperparams& hp) {
  const int iters = iterations_per_epoch(train, hp.global_batch);
  if (iters < 1) {
    throw ConfigError("train_serial: dataset smaller than one global batch");
  }
  const double rescale = 1.0 / static_cast<double>(hp.global_batch);

  std::vector<EpochStats> stats;
  stats.reserve(static_cast<size_t>(hp.epochs));
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model.reset_loss();  // same accumulation path as the engine-driven epoch
    for (int iter = 0; iter < iters; ++iter) {
      Batch batch = shard(train, 0, 1, iter, hp.global_batch);
      model.forward_backward(batch.inputs, batch.labels);
      model.apply_sgd(hp.learning_rate, rescale);
    }
    const auto t1 = std::chrono::steady_clock::now();
    stats.push_back(EpochStats{std::chrono::duration<double>(t1 - t0).count(),
                               model.loss_accum() / (static_cast<double>(iters) * hp.global_batch)});
  }
  return stats;
}

WorkerOutcome run_worker(Transport& transport, const TrainPlan& plan, const DataSplit& data,
                         int engine_threads, TraceSink* trace,
                         const std::vector<CommId>& concom_comms) {
  WorkerOutcome outcome;
  auto record_error = [&outcome](const Error& e) {
    if (!outcome.failed) {
      outcome.failed = true;
      outcome.first_error_class = e.kind_name();
      outcome.first_error = e.what();
    }
    for (const std::string& cls : outcome.error_classes) {
      if (cls == e.kind_name()) return;
    }
    outcome.error_classes.push_back(e.kind_name());
  };

  const int per_rank = plan.hp.global_batch / plan.num_ranks;
  Engine engine(engine_threads, plan.rank, trace);
  Model model(plan.topology, data.train.features, data.train.classes, per_rank);
  model.init_weights(plan.hp.seed, plan.rank);
  ModelTags tags = make_model_tags(engine, model);

  KvConfig config{plan.mode, plan.outstanding, model.num_keys()};
  KvStore store(engine, transport, plan.rank, config,
                plan.mode == KvMode::ConCom ? concom_comms : std::vector<CommId>{});

  try {
    kv_init_model(engine, store, model, tags);
    for (int epoch = 0; epoch < plan.hp.epochs; ++epoch) {
      outcome.epochs.push_back(train_epoch(engine, store, model, tags, data.train, plan));
    }
    outcome.accuracy = model.evaluate(data.test);
    outcome.final_weights.reserve(static_cast<size_t>(model.num_keys()));
    for (int key = 0; key < model.num_keys(); ++key) {
      outcome.final_weights.push_back(model.weight(key));
    }
  } catch (const Error& e) {
    record_error(e);
    // Drain whatever is still in flight; transport failures latch, so every
    // blocked body unwinds and wait_all can report.
    try {
      engine.wait_all();
    } catch (const Error& drain_error) {
      record_error(drain_error);
    }
  }
  engine.shutdown();
  return outcome;
}

}  // namespace collsim
