#include "collsim/model.hpp"

#include <cmath>

namespace collsim {

Topology parse_topology(const std::string& name) {
  if (name == "mlp") return Topology::Mlp;
  if (name == "diamond") return Topology::Diamond;
  throw ConfigError("unknown model topology: " + name);
}

const char* topology_name(Topology t) {
  return t == Topology::Mlp ? "mlp" : "diamond";
}

void sgd_update(Tensor& w, const Tensor& g, double lr, double rescale) {
  if (!(w.shape() == g.shape())) {
    throw UsageError("sgd_update: shape mismatch");
  }
  const double step = lr * rescale;
  double* wd = w.data();
  const double* gd = g.data();
  for (int64_t i = 0; i < w.size(); ++i) {
    wd[i] -= step * gd[i];
  }
}

namespace {

// Y[B,n] = X[B,m] . W[m,n] + bias[n]
void dense_forward(const Tensor& x, const Tensor& w, const Tensor& bias, Tensor& y, int64_t b,
                   int64_t m, int64_t n) {
  const double* xd = x.data();
  const double* wd = w.data();
  const double* bd = bias.data();
  double* yd = y.data();
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = bd[j];
      for (int64_t k = 0; k < m; ++k) {
        acc += xd[i * m + k] * wd[k * n + j];
      }
      yd[i * n + j] = acc;
    }
  }
}

void tanh_inplace(Tensor& t) {
  for (double& v : t.values()) {
    v = std::tanh(v);
  }
}

// gw[m,n] = X^T . dY ; gb[n] = column sums of dY. Batch-summed, overwriting.
void dense_grad_params(const Tensor& x, const Tensor& dy, Tensor& gw, Tensor& gb, int64_t b,
                       int64_t m, int64_t n) {
  const double* xd = x.data();
  const double* dyd = dy.data();
  double* gwd = gw.data();
  double* gbd = gb.data();
  for (int64_t k = 0; k < m; ++k) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t i = 0; i < b; ++i) {
        acc += xd[i * m + k] * dyd[i * n + j];
      }
      gwd[k * n + j] = acc;
    }
  }
  for (int64_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (int64_t i = 0; i < b; ++i) {
      acc += dyd[i * n + j];
    }
    gbd[j] = acc;
  }
}

// dX[B,m] = dY[B,n] . W^T
void dense_grad_input(const Tensor& dy, const Tensor& w, Tensor& dx, int64_t b, int64_t m,
                      int64_t n) {
  const double* dyd = dy.data();
  const double* wd = w.data();
  double* dxd = dx.data();
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t k = 0; k < m; ++k) {
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        acc += dyd[i * n + j] * wd[k * n + j];
      }
      dxd[i * m + k] = acc;
    }
  }
}

// Row-wise softmax cross-entropy on logits held in `delta`; replaces them
// with d(sum loss)/d(logits) = softmax - onehot and returns the summed loss.
double softmax_ce_backward(Tensor& delta, const Tensor& labels, int64_t b, int64_t c) {
  double* ld = delta.data();
  double loss = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    double* row = ld + i * c;
    double max_logit = row[0];
    for (int64_t j = 1; j < c; ++j) {
      max_logit = std::max(max_logit, row[j]);
    }
    const auto label = static_cast<int64_t>(labels[i]);
    const double centered_label = row[label] - max_logit;
    double sum = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - max_logit);
      sum += row[j];
    }
    loss += std::log(sum) - centered_label;
    for (int64_t j = 0; j < c; ++j) {
      row[j] = row[j] / sum - (j == label ? 1.0 : 0.0);
    }
  }
  return loss;
}

constexpr int kMlpHidden = 64;
constexpr int kDiamondTrunk = 32;
constexpr int kDiamondBranch = 24;

}  // namespace

Model::Model(Topology topology, int features, int classes, int batch)
    : topology_(topology),
      features_(features),
      classes_(classes),
      batch_(batch),
      hidden_(topology == Topology::Mlp ? kMlpHidden : kDiamondTrunk),
      branch_(topology == Topology::Mlp ? 0 : kDiamondBranch),
      x_(Shape{batch, features}),
      y_(Shape{batch}),
      z1_(Shape{batch, hidden_}),
      act_a_(Shape{batch, topology == Topology::Mlp ? 1 : branch_}),
      act_b_(Shape{batch, topology == Topology::Mlp ? 1 : branch_}),
      cat_(Shape{batch, topology == Topology::Mlp ? 1 : 2 * branch_}),
      delta_(Shape{batch, classes}),
      d_cat_(Shape{batch, topology == Topology::Mlp ? hidden_ : 2 * branch_}),
      dz1_a_(Shape{batch, hidden_}),
      dz1_b_(Shape{batch, hidden_}) {
  if (features < 1 || classes < 2 || batch < 1) {
    throw ConfigError("Model: need features >= 1, classes >= 2, batch >= 1");
  }
  auto add_key = [this](const Shape& shape) {
    weights_.emplace_back(shape);
    grads_.emplace_back(shape);
  };
  if (topology_ == Topology::Mlp) {
    add_key(Shape{features_, hidden_});  // 0: W1
    add_key(Shape{hidden_});             // 1: b1
    add_key(Shape{hidden_, classes_});   // 2: W2
    add_key(Shape{classes_});            // 3: b2
  } else {
    add_key(Shape{features_, hidden_});      // 0: W1
    add_key(Shape{hidden_});                 // 1: b1
    add_key(Shape{hidden_, branch_});        // 2: WA
    add_key(Shape{branch_});                 // 3: bA
    add_key(Shape{hidden_, branch_});        // 4: WB
    add_key(Shape{branch_});                 // 5: bB
    add_key(Shape{2 * branch_, classes_});   // 6: W2
    add_key(Shape{classes_});                // 7: b2
  }
}

size_t Model::check_key(int key) const {
  if (key < 0 || static_cast<size_t>(key) >= weights_.size()) {
    throw UsageError("Model: key out of range");
  }
  return static_cast<size_t>(key);
}

void Model::init_weights(uint64_t seed, int rank) {
  for (int key = 0; key < num_keys(); ++key) {
    Tensor& w = weights_[static_cast<size_t>(key)];
    const bool is_bias = w.shape().dims().size() == 1;
    if (is_bias) {
      copy(zeros(w.shape()), w);
      continue;
    }
    const int64_t fan_in = w.shape().dims()[0];
    Tensor r = random_uniform(
        w.shape(), mix_seed(mix_seed(seed, 0x77e1 + static_cast<uint64_t>(key)),
                            static_cast<uint64_t>(rank)));
    scale_inplace(r, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    copy(r, w);
  }
}

void Model::load_rows(const Dataset& data, int64_t row_begin, int64_t row_count) {
  if (row_count != batch_) {
    throw UsageError("Model: row count differs from model batch size");
  }
  if (row_begin < 0 || row_begin + row_count > data.size()) {
    throw UsageError("Model: batch rows out of dataset range");
  }
  for (int64_t i = 0; i < row_count; ++i) {
    y_[i] = data.labels[row_begin + i];
    for (int64_t j = 0; j < features_; ++j) {
      x_[i * features_ + j] = data.inputs[(row_begin + i) * features_ + j];
    }
  }
}

void Model::stage_forward_trunk() {
  dense_forward(x_, weights_[0], weights_[1], z1_, batch_, features_, hidden_);
  tanh_inplace(z1_);
}

void Model::stage_forward_branch_a() {
  dense_forward(z1_, weights_[2], weights_[3], act_a_, batch_, hidden_, branch_);
  tanh_inplace(act_a_);
}

void Model::stage_forward_branch_b() {
  dense_forward(z1_, weights_[4], weights_[5], act_b_, batch_, hidden_, branch_);
  tanh_inplace(act_b_);
}

void Model::stage_forward_out() {
  if (topology_ == Topology::Mlp) {
    dense_forward(z1_, weights_[2], weights_[3], delta_, batch_, hidden_, classes_);
  } else {
    const double* ad = act_a_.data();
    const double* bd = act_b_.data();
    double* cd = cat_.data();
    for (int64_t i = 0; i < batch_; ++i) {
      for (int64_t j = 0; j < branch_; ++j) {
        cd[i * 2 * branch_ + j] = ad[i * branch_ + j];
        cd[i * 2 * branch_ + branch_ + j] = bd[i * branch_ + j];
      }
    }
    dense_forward(cat_, weights_[6], weights_[7], delta_, batch_, 2 * branch_, classes_);
  }
  loss_accum_ += softmax_ce_backward(delta_, y_, batch_, classes_);
}

void Model::stage_backward_out() {
  if (topology_ == Topology::Mlp) {
    dense_grad_params(z1_, delta_, grads_[2], grads_[3], batch_, hidden_, classes_);
    dense_grad_input(delta_, weights_[2], d_cat_, batch_, hidden_, classes_);
  } else {
    dense_grad_params(cat_, delta_, grads_[6], grads_[7], batch_, 2 * branch_, classes_);
    dense_grad_input(delta_, weights_[6], d_cat_, batch_, 2 * branch_, classes_);
  }
}

void Model::stage_backward_branch_a() {
  Tensor dz(Shape{batch_, branch_});
  const double* dcd = d_cat_.data();
  const double* ad = act_a_.data();
  for (int64_t i = 0; i < batch_; ++i) {
    for (int64_t j = 0; j < branch_; ++j) {
      const double a = ad[i * branch_ + j];
      dz[i * branch_ + j] = dcd[i * 2 * branch_ + j] * (1.0 - a * a);
    }
  }
  dense_grad_params(z1_, dz, grads_[2], grads_[3], batch_, hidden_, branch_);
  dense_grad_input(dz, weights_[2], dz1_a_, batch_, hidden_, branch_);
}

void Model::stage_backward_branch_b() {
  Tensor dz(Shape{batch_, branch_});
  const double* dcd = d_cat_.data();
  const double* bd = act_b_.data();
  for (int64_t i = 0; i < batch_; ++i) {
    for (int64_t j = 0; j < branch_; ++j) {
      const double b = bd[i * branch_ + j];
      dz[i * branch_ + j] = dcd[i * 2 * branch_ + branch_ + j] * (1.0 - b * b);
    }
  }
  dense_grad_params(z1_, dz, grads_[4], grads_[5], batch_, hidden_, branch_);
  dense_grad_input(dz, weights_[4], dz1_b_, batch_, hidden_, branch_);
}

void Model::stage_backward_trunk() {
  Tensor dt(Shape{batch_, hidden_});
  const double* z1d = z1_.data();
  for (int64_t i = 0; i < batch_ * hidden_; ++i) {
    const double upstream = topology_ == Topology::Mlp
                                ? d_cat_.data()[i]
                                : dz1_a_.data()[i] + dz1_b_.data()[i];
    dt[i] = upstream * (1.0 - z1d[i] * z1d[i]);
  }
  dense_grad_params(x_, dt, grads_[0], grads_[1], batch_, features_, hidden_);
}

double Model::forward_backward(const Tensor& batch_x, const Tensor& batch_y) {
  if (batch_x.size() != batch_ * features_ || batch_y.size() != batch_) {
    throw UsageError("Model: batch shape mismatch");
  }
  copy(batch_x, x_);
  copy(batch_y, y_);
  const double before = loss_accum_;
  stage_forward_trunk();
  if (topology_ == Topology::Diamond) {
    stage_forward_branch_a();
    stage_forward_branch_b();
  }
  stage_forward_out();
  stage_backward_out();
  if (topology_ == Topology::Diamond) {
    stage_backward_branch_a();
    stage_backward_branch_b();
  }
  stage_backward_trunk();
  return loss_accum_ - before;
}

void Model::apply_sgd(double lr, double rescale) {
  for (int key = 0; key < num_keys(); ++key) {
    sgd_update(weights_[static_cast<size_t>(key)], grads_[static_cast<size_t>(key)], lr, rescale);
  }
}

double Model::forward_loss(const Tensor& batch_x, const Tensor& batch_y) const {
  const int64_t b = batch_y.size();
  if (batch_x.size() != b * features_) {
    throw UsageError("Model: batch shape mismatch");
  }
  Tensor z1(Shape{b, hidden_});
  Tensor logits(Shape{b, classes_});
  dense_forward(batch_x, weights_[0], weights_[1], z1, b, features_, hidden_);
  tanh_inplace(z1);
  if (topology_ == Topology::Mlp) {
    dense_forward(z1, weights_[2], weights_[3], logits, b, hidden_, classes_);
  } else {
    Tensor a(Shape{b, branch_});
    Tensor bb(Shape{b, branch_});
    dense_forward(z1, weights_[2], weights_[3], a, b, hidden_, branch_);
    tanh_inplace(a);
    dense_forward(z1, weights_[4], weights_[5], bb, b, hidden_, branch_);
    tanh_inplace(bb);
    Tensor cat(Shape{b, 2 * branch_});
    for (int64_t i = 0; i < b; ++i) {
      for (int64_t j = 0; j < branch_; ++j) {
        cat[i * 2 * branch_ + j] = a[i * branch_ + j];
        cat[i * 2 * branch_ + branch_ + j] = bb[i * branch_ + j];
      }
    }
    dense_forward(cat, weights_[6], weights_[7], logits, b, 2 * branch_, classes_);
  }
  return softmax_ce_backward(logits, batch_y, b, classes_);
}

double Model::evaluate(const Dataset& data) const {
  const int64_t n = data.size();
  Tensor z1(Shape{n, hidden_});
  Tensor logits(Shape{n, classes_});
  dense_forward(data.inputs, weights_[0], weights_[1], z1, n, features_, hidden_);
  tanh_inplace(z1);
  if (topology_ == Topology::Mlp) {
    dense_forward(z1, weights_[2], weights_[3], logits, n, hidden_, classes_);
  } else {
    Tensor a(Shape{n, branch_});
    Tensor b(Shape{n, branch_});
    dense_forward(z1, weights_[2], weights_[3], a, n, hidden_, branch_);
    tanh_inplace(a);
    dense_forward(z1, weights_[4], weights_[5], b, n, hidden_, branch_);
    tanh_inplace(b);
    Tensor cat(Shape{n, 2 * branch_});
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < branch_; ++j) {
        cat[i * 2 * branch_ + j] = a[i * branch_ + j];
        cat[i * 2 * branch_ + branch_ + j] = b[i * branch_ + j];
      }
    }
    dense_forward(cat, weights_[6], weights_[7], logits, n, 2 * branch_, classes_);
  }
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < classes_; ++j) {
      if (logits[i * classes_ + j] > logits[i * classes_ + best]) {
        best = j;
      }
    }
    if (best == static_cast<int64_t>(data.labels[i])) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace collsim
