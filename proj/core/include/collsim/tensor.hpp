#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "collsim/error.hpp"

namespace collsim {

/// Dense row-major extents. Every extent must be >= 1.
class Shape {
 public:
  Shape(std::initializer_list<int64_t> dims) : Shape(std::vector<int64_t>(dims)) {}
  explicit Shape(std::vector<int64_t> dims);

  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t elements() const { return elements_; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }

 private:
  std::vector<int64_t> dims_;
  int64_t elements_;
};

/// Dense 64-bit float array with value semantics. Tensors carry no internal
/// synchronization; exclusive mutation is the engine's job.
class Tensor {
 public:
  explicit Tensor(const Shape& shape, double fill = 0.0);

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor zeros(const Shape& shape);
Tensor ones(const Shape& shape);

/// Deterministic uniform fill over [-1, 1). A (shape, seed) pair always
/// produces the same bits, independent of platform.
Tensor random_uniform(const Shape& shape, uint64_t seed);

void add_inplace(Tensor& dst, const Tensor& src);
void scale_inplace(Tensor& t, double alpha);
void copy(const Tensor& src, Tensor& dst);

/// True iff max_i |a[i] - b[i]| <= tol.
bool approx_eq(const Tensor& a, const Tensor& b, double tol);

/// SplitMix64 step; used to derive per-key/per-rank seeds from a run seed.
uint64_t mix_seed(uint64_t seed, uint64_t salt);

}  // namespace collsim
