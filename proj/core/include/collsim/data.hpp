#pragma once

#include <cstdint>

#include "collsim/tensor.hpp"

namespace collsim {

/// Labeled classification samples, inputs [n x d] row-major, labels [n]
/// holding class indices.
struct Dataset {
  Tensor inputs;
  Tensor labels;
  int features = 0;
  int classes = 0;

  int64_t size() const { return labels.size(); }
};

struct DataSplit {
  Dataset train;
  Dataset test;
};

/// One worker's slice of an iteration's global batch.
struct Batch {
  Tensor inputs;
  Tensor labels;
};

/// Deterministic synthetic classification data: class centers on a sphere
/// plus unit gaussian noise, nearly linearly separable. 90/10 train/test
/// split. Identical output for identical (seed, sizes) everywhere.
DataSplit generate_dataset(uint64_t seed, int n_samples, int n_features, int n_classes);

/// Rows [rank*B, (rank+1)*B) of iteration `iteration`'s global batch, where
/// B = global_batch / num_ranks. The union over ranks is exactly the serial
/// batch.
Batch shard(const Dataset& train, int rank, int num_ranks, int iteration, int global_batch);

}  // namespace collsim
