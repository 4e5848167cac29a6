#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "collsim/data.hpp"
#include "collsim/tensor.hpp"

namespace collsim {

enum class Topology { Mlp, Diamond };

Topology parse_topology(const std::string& name);
const char* topology_name(Topology t);

/// w <- w - lr * rescale * g. The single update expression shared by the
/// serial loop and the engine op so both paths do identical arithmetic.
void sgd_update(Tensor& w, const Tensor& g, double lr, double rescale);

/// Small feed-forward classifier with softmax cross-entropy loss and
/// batch-summed gradients, decomposed into stages so each stage can run as
/// one engine op.
///
/// Keys (dense, weights then bias per layer):
///   mlp:     0 W1[d,h]   1 b1[h]   2 W2[h,c]    3 b2[c]
///   diamond: 0 W1[d,h1]  1 b1[h1]  2 WA[h1,hb]  3 bA[hb]
///            4 WB[h1,hb] 5 bB[hb]  6 W2[2hb,c]  7 b2[c]
/// The diamond's two branches touch disjoint state, so their forward and
/// backward stages carry no mutual dependency.
class Model {
 public:
  Model(Topology topology, int features, int classes, int batch);

  Topology topology() const { return topology_; }
  int num_keys() const { return static_cast<int>(weights_.size()); }
  int batch() const { return batch_; }
  const Shape& key_shape(int key) const { return weights_[check_key(key)].shape(); }

  Tensor& weight(int key) { return weights_[check_key(key)]; }
  const Tensor& weight(int key) const { return weights_[check_key(key)]; }
  Tensor& grad(int key) { return grads_[check_key(key)]; }
  const Tensor& grad(int key) const { return grads_[check_key(key)]; }

  /// Uniform [-1,1) scaled by 1/sqrt(fan_in) for weight matrices, zero for
  /// biases. Deterministic in (seed, rank, key).
  void init_weights(uint64_t seed, int rank);

  // ---- stage API; each method is the body of one engine op ----
  void load_rows(const Dataset& data, int64_t row_begin, int64_t row_count);
  void stage_forward_trunk();     // z1 = tanh(x W1 + b1)
  void stage_forward_branch_a();  // diamond: a = tanh(z1 WA + bA)
  void stage_forward_branch_b();  // diamond: b = tanh(z1 WB + bB)
  void stage_forward_out();       // logits, loss accumulation, delta
  void stage_backward_out();      // grads of the output layer + upstream delta
  void stage_backward_branch_a();
  void stage_backward_branch_b();
  void stage_backward_trunk();    // grads of W1/b1

  /// Serial forward+backward over one batch: runs the stages in canonical
  /// order. Returns the batch-summed loss; grads are overwritten.
  double forward_backward(const Tensor& batch_x, const Tensor& batch_y);

  void apply_sgd(double lr, double rescale);

  /// Loss of a batch without touching gradients; what the finite-difference
  /// check differentiates.
  double forward_loss(const Tensor& batch_x, const Tensor& batch_y) const;

  /// Fraction of argmax-correct predictions.
  double evaluate(const Dataset& data) const;

  double loss_accum() const { return loss_accum_; }
  void reset_loss() { loss_accum_ = 0.0; }

 private:
  size_t check_key(int key) const;

  Topology topology_;
  int features_;
  int classes_;
  int batch_;
  int hidden_;  // trunk width
  int branch_;  // per-branch width (diamond)

  std::vector<Tensor> weights_;
  std::vector<Tensor> grads_;

  // per-iteration buffers; exclusivity across stages is the engine's job
  Tensor x_, y_;
  Tensor z1_, act_a_, act_b_, cat_;
  Tensor delta_, d_cat_, dz1_a_, dz1_b_;
  double loss_accum_ = 0.0;
};

}  // namespace collsim
