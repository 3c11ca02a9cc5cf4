#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ciml/matrix.hpp"

namespace ciml {

// Learnable parameter: value plus gradient accumulator and Adam moments.
struct Param {
  Matrix value;
  Matrix grad;
  Matrix m1, m2;  // Adam moments
  std::string name;

  Param() = default;
  Param(std::size_t rows, std::size_t cols, std::string n = {})
      : value(rows, cols), grad(rows, cols), m1(rows, cols), m2(rows, cols),
        name(std::move(n)) {}

  void zero_grad() { grad.fill(0.0); }
};

// Reverse-mode tape over dense matrices. A fresh Tape is built per training
// step; backward() walks nodes in reverse creation order. Parameters appear
// as leaf nodes whose gradients are flushed into Param::grad, so the
// adversarial schedule can freeze either side by simply not creating leafs
// for it (use constant() instead).
class Tape {
 public:
  using Id = std::int32_t;

  Id constant(Matrix v);
  Id leaf(Param& p);  // gradient flows into p.grad

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);                 // same shape
  Id add_rowvec(Id a, Id bias);       // bias is 1 x cols, broadcast over rows
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);                 // elementwise
  Id scale(Id a, double s);
  Id add_scalar(Id a, double s);
  Id tanh(Id a);
  Id relu(Id a);
  Id softplus(Id a);
  Id exp(Id a);
  Id clamp(Id a, double lo, double hi);  // zero gradient outside [lo, hi]
  Id concat_cols(const std::vector<Id>& parts);
  Id gather_rows(Id a, const std::vector<std::size_t>& idx);
  Id sum_all(Id a);    // 1x1
  Id mean_all(Id a);   // 1x1

  // mean over batch of per-row squared L2 norm: sum(a.^2)/rows, 1x1
  Id mean_sq_norm(Id a);

  // Mean softmax cross-entropy against integer labels; 1x1, >= 0.
  Id softmax_ce(Id logits, const std::vector<int>& labels);

  // ln(mean over rows of exp(scores)) for scores (n x 1). The backward pass
  // divides by `denom` instead of the true batch mean, implementing the
  // bias-corrected moving-average gradient of the MINE log-partition term.
  // Pass denom <= 0 to use the exact batch mean.
  Id log_mean_exp(Id scores, double denom = 0.0);

  const Matrix& value(Id id) const { return nodes_[id].value; }
  const Matrix& grad(Id id) const { return nodes_[id].grad; }
  double scalar(Id id) const;

  // Seeds d(root)=1 (root must be 1x1) and accumulates into Param::grad.
  void backward(Id root);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, Node&)> back;  // pull own grad, push to inputs
  };

  Id push(Matrix value, bool needs_grad, std::function<void(Tape&, Node&)> back);
  Node& at(Id id) { return nodes_[id]; }
  void accumulate(Id id, const Matrix& g);

  std::vector<Node> nodes_;
};

// Adam with bias correction; decoupled instances for main vs MINE parameters.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Param*>& params);
  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace ciml
