#include "collsim/data.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace collsim {

namespace {

class GaussianStream {
 public:
  explicit GaussianStream(uint64_t seed) : gen_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // Box-Muller on explicitly constructed uniforms keeps the stream
    // bit-reproducible for a given seed.
    double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;          // [0,1)
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace

DataSplit generate_dataset(uint64_t seed, int n_samples, int n_features, int n_classes) {
  if (n_classes < 2 || n_samples < n_classes) {
    throw ConfigError("generate_dataset: need n_samples >= n_classes >= 2");
  }
  if (n_features < 1) {
    throw ConfigError("generate_dataset: need n_features >= 1");
  }

  constexpr double kCenterRadius = 3.0;
  GaussianStream rng(mix_seed(seed, 0x646174ULL));

  // Random unit directions scaled onto a sphere of radius kCenterRadius.
  std::vector<std::vector<double>> centers(static_cast<size_t>(n_classes));
  for (auto& center : centers) {
    center.resize(static_cast<size_t>(n_features));
    double norm_sq = 0.0;
    for (double& v : center) {
      v = rng.next();
      norm_sq += v * v;
    }
    double scale = kCenterRadius / std::sqrt(norm_sq);
    for (double& v : center) {
      v *= scale;
    }
  }

  Tensor inputs(Shape{n_samples, n_features});
  Tensor labels(Shape{n_samples});
  for (int i = 0; i < n_samples; ++i) {
    int cls = i % n_classes;
    labels[i] = static_cast<double>(cls);
    for (int j = 0; j < n_features; ++j) {
      inputs[static_cast<int64_t>(i) * n_features + j] =
          centers[static_cast<size_t>(cls)][static_cast<size_t>(j)] + rng.next();
    }
  }

  const int n_train = (n_samples * 9) / 10;
  const int n_test = n_samples - n_train;

  DataSplit split{
      Dataset{Tensor(Shape{n_train, n_features}), Tensor(Shape{n_train}), n_features, n_classes},
      Dataset{Tensor(Shape{n_test, n_features}), Tensor(Shape{n_test}), n_features, n_classes}};
  for (int i = 0; i < n_train; ++i) {
    split.train.labels[i] = labels[i];
    for (int j = 0; j < n_features; ++j) {
      split.train.inputs[static_cast<int64_t>(i) * n_features + j] =
          inputs[static_cast<int64_t>(i) * n_features + j];
    }
  }
  for (int i = 0; i < n_test; ++i) {
    split.test.labels[i] = labels[n_train + i];
    for (int j = 0; j < n_features; ++j) {
      split.test.inputs[static_cast<int64_t>(i) * n_features + j] =
          inputs[static_cast<int64_t>(n_train + i) * n_features + j];
    }
  }
  return split;
}

Batch shard(const Dataset& train, int rank, int num_ranks, int iteration, int global_batch) {
  if (num_ranks < 1 || global_batch < 1 || global_batch % num_ranks != 0) {
    throw ConfigError("shard: global batch size must divide evenly across ranks");
  }
  if (rank < 0 || rank >= num_ranks) {
    throw UsageError("shard: rank out of range");
  }
  const int per_rank = global_batch / num_ranks;
  const int64_t begin = static_cast<int64_t>(iteration) * global_batch +
                        static_cast<int64_t>(rank) * per_rank;
  if (begin + per_rank > train.size()) {
    throw UsageError("shard: iteration out of range for dataset");
  }

  Batch batch{Tensor(Shape{per_rank, train.features}), Tensor(Shape{per_rank})};
  for (int i = 0; i < per_rank; ++i) {
    batch.labels[i] = train.labels[begin + i];
    for (int j = 0; j < train.features; ++j) {
      batch.inputs[static_cast<int64_t>(i) * train.features + j] =
          train.inputs[(begin + i) * train.features + j];
    }
  }
  return batch;
}

}  // namespace collsim
