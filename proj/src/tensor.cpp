#include "ciml/tensor.hpp"

#include "ciml/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace ciml {

Tape::Id Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, Node&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::accumulate(Id id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  kernels::active().axpy(1.0, g.data(), n.grad.data(), n.grad.size());
}

double Tape::scalar(Id id) const {
  const Matrix& v = nodes_[id].value;
  if (v.rows() != 1 || v.cols() != 1) throw std::logic_error("scalar() on non-1x1 node");
  return v(0, 0);
}

Tape::Id Tape::constant(Matrix v) { return push(std::move(v), false, {}); }

Tape::Id Tape::leaf(Param& p) {
  Param* pp = &p;
  return push(p.value, true, [pp](Tape&, Node& n) {
    kernels::active().axpy(1.0, n.grad.data(), pp->grad.data(), pp->grad.size());
  });
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Matrix& A = nodes_[a].value;
  const Matrix& B = nodes_[b].value;
  if (A.cols() != B.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix C(A.rows(), B.cols());
  kernels::active().gemm_nn(A.data(), B.data(), C.data(), A.rows(), A.cols(), B.cols());
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(C), ng, [a, b](Tape& t, Node& n) {
    const Matrix& A = t.nodes_[a].value;
    const Matrix& B = t.nodes_[b].value;
    if (t.nodes_[a].needs_grad) {
      Matrix da(A.rows(), A.cols());
      kernels::active().gemm_nt(n.grad.data(), B.data(), da.data(), A.rows(), B.cols(), A.cols());
      t.accumulate(a, da);
    }
    if (t.nodes_[b].needs_grad) {
      Matrix db(B.rows(), B.cols());
      kernels::active().gemm_tn(A.data(), n.grad.data(), db.data(), B.rows(), A.rows(), B.cols());
      t.accumulate(b, db);
    }
  });
}

Tape::Id Tape::add(Id a, Id b) {
  Matrix c = ciml::add(nodes_[a].value, nodes_[b].value);
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(c), ng, [a, b](Tape& t, Node& n) {
    t.accumulate(a, n.grad);
    t.accumulate(b, n.grad);
  });
}

Tape::Id Tape::add_rowvec(Id a, Id bias) {
  const Matrix& A = nodes_[a].value;
  const Matrix& B = nodes_[bias].value;
  if (B.rows() != 1 || B.cols() != A.cols())
    throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
  Matrix C = A;
  for (std::size_t i = 0; i < C.rows(); ++i)
    kernels::active().axpy(1.0, B.data(), C.row(i), C.cols());
  bool ng = nodes_[a].needs_grad || nodes_[bias].needs_grad;
  return push(std::move(C), ng, [a, bias](Tape& t, Node& n) {
    t.accumulate(a, n.grad);
    if (t.nodes_[bias].needs_grad) {
      Matrix db(1, n.grad.cols());
      for (std::size_t i = 0; i < n.grad.rows(); ++i)
        kernels::active().axpy(1.0, n.grad.row(i), db.data(), db.cols());
      t.accumulate(bias, db);
    }
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  Matrix c = ciml::sub(nodes_[a].value, nodes_[b].value);
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(c), ng, [a, b](Tape& t, Node& n) {
    t.accumulate(a, n.grad);
    if (t.nodes_[b].needs_grad) t.accumulate(b, scaled(n.grad, -1.0));
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  Matrix c = ciml::hadamard(nodes_[a].value, nodes_[b].value);
  bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(c), ng, [a, b](Tape& t, Node& n) {
    if (t.nodes_[a].needs_grad) t.accumulate(a, ciml::hadamard(n.grad, t.nodes_[b].value));
    if (t.nodes_[b].needs_grad) t.accumulate(b, ciml::hadamard(n.grad, t.nodes_[a].value));
  });
}

Tape::Id Tape::scale(Id a, double s) {
  Matrix c = scaled(nodes_[a].value, s);
  return push(std::move(c), nodes_[a].needs_grad, [a, s](Tape& t, Node& n) {
    t.accumulate(a, scaled(n.grad, s));
  });
}

Tape::Id Tape::add_scalar(Id a, double s) {
  Matrix c = nodes_[a].value;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += s;
  return push(std::move(c), nodes_[a].needs_grad, [a](Tape& t, Node& n) {
    t.accumulate(a, n.grad);
  });
}

Tape::Id Tape::tanh(Id a) {
  Matrix c = nodes_[a].value;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = std::tanh(c.data()[i]);
  return push(std::move(c), nodes_[a].needs_grad, [a](Tape& t, Node& n) {
    Matrix d(n.value.rows(), n.value.cols());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double y = n.value.data()[i];
      d.data()[i] = n.grad.data()[i] * (1.0 - y * y);
    }
    t.accumulate(a, d);
  });
}

Tape::Id Tape::relu(Id a) {
  Matrix c = nodes_[a].value;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = c.data()[i] > 0.0 ? c.data()[i] : 0.0;
  return push(std::move(c), nodes_[a].needs_grad, [a](Tape& t, Node& n) {
    Matrix d(n.value.rows(), n.value.cols());
    const Matrix& x = t.nodes_[a].value;
    for (std::size_t i = 0; i < d.size(); ++i)
      d.data()[i] = x.data()[i] > 0.0 ? n.grad.data()[i] : 0.0;
    t.accumulate(a, d);
  });
}

Tape::Id Tape::softplus(Id a) {
  Matrix c = nodes_[a].value;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double x = c.data()[i];
    // numerically stable log(1+e^x)
    c.data()[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return push(std::move(c), nodes_[a].needs_grad, [a](Tape& t, Node& n) {
    Matrix d(n.value.rows(), n.value.cols());
    const Matrix& x = t.nodes_[a].value;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-x.data()[i]));
      d.data()[i] = n.grad.data()[i] * s;
    }
    t.accumulate(a, d);
  });
}

Tape::Id Tape::exp(Id a) {
  Matrix c = nodes_[a].value;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = std::exp(c.data()[i]);
  return push(std::move(c), nodes_[a].needs_grad, [a](Tape& t, Node& n) {
    t.accumulate(a, ciml::hadamard(n.grad, n.value));
  });
}

Tape::Id Tape::clamp(Id a, double lo, double hi) {
  Matrix c = nodes_[a].value;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.data()[i] < lo) c.data()[i] = lo;
    if (c.data()[i] > hi) c.data()[i] = hi;
  }
  return push(std::move(c), nodes_[a].needs_grad, [a, lo, hi](Tape& t, Node& n) {
    Matrix d(n.value.rows(), n.value.cols());
    const Matrix& x = t.nodes_[a].value;
    for (std::size_t i = 0; i < d.size(); ++i)
      d.data()[i] = (x.data()[i] >= lo && x.data()[i] <= hi) ? n.grad.data()[i] : 0.0;
    t.accumulate(a, d);
  });
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
  const std::size_t rows = nodes_[parts[0]].value.rows();
  std::size_t cols = 0;
  bool ng = false;
  for (Id p : parts) {
    if (nodes_[p].value.rows() != rows)
      throw std::invalid_argument("concat_cols: row count mismatch");
    cols += nodes_[p].value.cols();
    ng = ng || nodes_[p].needs_grad;
  }
  Matrix c(rows, cols);
  std::size_t off = 0;
  for (Id p : parts) {
    const Matrix& v = nodes_[p].value;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) c(i, off + j) = v(i, j);
    off += v.cols();
  }
  std::vector<Id> ps = parts;
  return push(std::move(c), ng, [ps](Tape& t, Node& n) {
    std::size_t off = 0;
    for (Id p : ps) {
      const std::size_t pc = t.nodes_[p].value.cols();
      if (t.nodes_[p].needs_grad) {
        Matrix d(n.grad.rows(), pc);
        for (std::size_t i = 0; i < d.rows(); ++i)
          for (std::size_t j = 0; j < pc; ++j) d(i, j) = n.grad(i, off + j);
        t.accumulate(p, d);
      }
      off += pc;
    }
  });
}

Tape::Id Tape::gather_rows(Id a, const std::vector<std::size_t>& idx) {
  const Matrix& A = nodes_[a].value;
  Matrix c(idx.size(), A.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= A.rows()) throw std::out_of_range("gather_rows: index out of range");
    for (std::size_t j = 0; j < A.cols(); ++j) c(i, j) = A(idx[i], j);
  }
  std::vector<std::size_t> ix = idx;
  return push(std::move(c), nodes_[a].needs_grad, [a, ix](Tape& t, Node& n) {
    Matrix d(t.nodes_[a].value.rows(), t.nodes_[a].value.cols());
    for (std::size_t i = 0; i < ix.size(); ++i)
      kernels::active().axpy(1.0, n.grad.row(i), d.row(ix[i]), d.cols());
    t.accumulate(a, d);
  });
}

Tape::Id Tape::sum_all(Id a) {
  Matrix c(1, 1);
  c(0, 0) = ciml::sum_all(nodes_[a].value);
  return push(std::move(c), nodes_[a].needs_grad, [a](Tape& t, Node& n) {
    const double g = n.grad(0, 0);
    Matrix d(t.nodes_[a].value.rows(), t.nodes_[a].value.cols(), g);
    t.accumulate(a, d);
  });
}

Tape::Id Tape::mean_all(Id a) {
  const double inv = 1.0 / static_cast<double>(nodes_[a].value.size());
  return scale(sum_all(a), inv);
}

Tape::Id Tape::mean_sq_norm(Id a) {
  const Matrix& A = nodes_[a].value;
  Matrix c(1, 1);
  c(0, 0) = sq_frobenius(A) / static_cast<double>(A.rows());
  return push(std::move(c), nodes_[a].needs_grad, [a](Tape& t, Node& n) {
    const Matrix& A = t.nodes_[a].value;
    const double g = 2.0 * n.grad(0, 0) / static_cast<double>(A.rows());
    t.accumulate(a, scaled(A, g));
  });
}

Tape::Id Tape::softmax_ce(Id logits, const std::vector<int>& labels) {
  const Matrix& L = nodes_[logits].value;
  if (L.rows() != labels.size()) throw DataError("softmax_ce: batch size mismatch");
  const std::size_t m = L.cols();
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= m)
      throw DataError("softmax_ce: label out of range");
  // cache softmax for backward
  Matrix probs(L.rows(), m);
  double ce = 0.0;
  for (std::size_t i = 0; i < L.rows(); ++i) {
    double mx = L(i, 0);
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, L(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      probs(i, j) = std::exp(L(i, j) - mx);
      z += probs(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) probs(i, j) /= z;
    ce -= std::log(std::max(probs(i, static_cast<std::size_t>(labels[i])), 1e-300));
  }
  ce /= static_cast<double>(L.rows());
  Matrix c(1, 1);
  c(0, 0) = ce;
  std::vector<int> ys = labels;
  auto pr = std::make_shared<Matrix>(std::move(probs));
  return push(std::move(c), nodes_[logits].needs_grad, [logits, ys, pr](Tape& t, Node& n) {
    const double g = n.grad(0, 0) / static_cast<double>(pr->rows());
    Matrix d = *pr;
    for (std::size_t i = 0; i < d.rows(); ++i)
      d(i, static_cast<std::size_t>(ys[i])) -= 1.0;
    kernels::active().scale(g, d.data(), d.size());
    t.accumulate(logits, d);
  });
}

Tape::Id Tape::log_mean_exp(Id scores, double denom) {
  const Matrix& S = nodes_[scores].value;
  if (S.cols() != 1) throw std::invalid_argument("log_mean_exp: scores must be n x 1");
  const std::size_t n = S.rows();
  double mx = S(0, 0);
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, S(i, 0));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(S(i, 0) - mx);
  const double mean_exp = acc / static_cast<double>(n) * std::exp(mx);
  Matrix c(1, 1);
  c(0, 0) = std::log(acc / static_cast<double>(n)) + mx;
  const double d = denom > 0.0 ? denom : mean_exp;
  return push(std::move(c), nodes_[scores].needs_grad, [scores, d](Tape& t, Node& n) {
    const Matrix& S = t.nodes_[scores].value;
    const double g = n.grad(0, 0) / (static_cast<double>(S.rows()) * d);
    Matrix ds(S.rows(), 1);
    for (std::size_t i = 0; i < S.rows(); ++i) ds(i, 0) = g * std::exp(S(i, 0));
    t.accumulate(scores, ds);
  });
}

void Tape::backward(Id root) {
  Node& r = nodes_[root];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::logic_error("backward: root must be 1x1");
  if (!r.needs_grad) return;
  r.grad = Matrix(1, 1, 1.0);
  for (Id i = static_cast<Id>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && !n.grad.empty() && n.back) n.back(*this, n);
  }
}

void Adam::step(std::vector<Param*>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data()[i];
      double& m = p->m1.data()[i];
      double& v = p->m2.data()[i];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p->value.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace ciml
