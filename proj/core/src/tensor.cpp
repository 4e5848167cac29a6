#include "collsim/tensor.hpp"

#include <cmath>
#include <random>

namespace collsim {

Shape::Shape(std::vector<int64_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) {
    throw UsageError("Shape: at least one extent required");
  }
  elements_ = 1;
  for (int64_t d : dims_) {
    if (d < 1) {
      throw UsageError("Shape: extents must be >= 1");
    }
    elements_ *= d;
  }
}

Tensor::Tensor(const Shape& shape, double fill)
    : shape_(shape), data_(static_cast<size_t>(shape.elements()), fill) {}

Tensor zeros(const Shape& shape) { return Tensor(shape, 0.0); }

Tensor ones(const Shape& shape) { return Tensor(shape, 1.0); }

Tensor random_uniform(const Shape& shape, uint64_t seed) {
  Tensor t(shape);
  std::mt19937_64 gen(seed);
  for (double& v : t.values()) {
    // Top 53 bits -> [0,1), then shift to [-1,1). Bit-exact for a given seed
    // since mt19937_64's output sequence is fixed by the standard.
    double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    v = 2.0 * u - 1.0;
  }
  return t;
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw UsageError(std::string(op) + ": shape mismatch");
  }
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require_same_shape(dst, src, "add_inplace");
  const double* s = src.data();
  double* d = dst.data();
  for (int64_t i = 0; i < dst.size(); ++i) {
    d[i] += s[i];
  }
}

void scale_inplace(Tensor& t, double alpha) {
  for (double& v : t.values()) {
    v *= alpha;
  }
}

void copy(const Tensor& src, Tensor& dst) {
  require_same_shape(src, dst, "copy");
  std::copy(src.values().begin(), src.values().end(), dst.values().begin());
}

bool approx_eq(const Tensor& a, const Tensor& b, double tol) {
  require_same_shape(a, b, "approx_eq");
  for (int64_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > tol) {
      return false;
    }
  }
  return true;
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace collsim
