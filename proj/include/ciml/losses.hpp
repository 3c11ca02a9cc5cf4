#pragma once

#include <map>
#include <string>
#include <vector>

#include "ciml/matrix.hpp"

namespace ciml {

struct Hyperparams {
  double beta1 = 1e-4;
  double beta2 = 1e-4;
  double beta3 = 1.0;
  double beta4 = 0.1;

  void validate() const;
};

// Every scalar term of the composed objective, for logging and gradient
// tests. `terms` holds each MI / entropy / alignment component by name.
struct LossBreakdown {
  double ce = 0.0;
  double l_common = 0.0;
  double l_unique = 0.0;
  double total = 0.0;
  double beta3 = 0.0, beta4 = 0.0;  // weights the total was composed with
  std::map<std::string, double> terms;

  void check() const;  // finiteness + total composition within 1e-9 relative
};

struct UniqueViewTerms {
  double i_zu_y = 0.0;   // lower bound, <= 0 in practice
  double i_zu_x = 0.0;   // KL upper bound, >= 0
  double i_zu_zc = 0.0;  // MINE
};

// -H(C) + alignment - (I(Zc;Y) - beta1 * I(Zc;C))
double common_loss(double h_c, double alignment, double i_zc_y, double i_zc_c, double beta1);

// -sum_i [I(Zu;Y) - beta2*I(Zu;X) - I(Zu;Zc)] + sum_{i!=j} pairwise[i][j].
// `pairwise` is v x v with zero diagonal.
double unique_loss(const std::vector<UniqueViewTerms>& per_view,
                   const std::vector<std::vector<double>>& pairwise, double beta2);

// Batch-mean softmax cross-entropy; >= 0.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels);

LossBreakdown total_loss(double ce, double l_common, double l_unique, double beta3,
                         double beta4);

}  // namespace ciml
