#include "ciml/losses.hpp"

#include <cmath>

#include "ciml/errors.hpp"
#include "ciml/tensor.hpp"

namespace ciml {

void Hyperparams::validate() const {
  if (beta1 < 0 || beta2 < 0 || beta3 < 0 || beta4 < 0)
    throw ConfigError("hyperparameters beta1..beta4 must be nonnegative");
}

void LossBreakdown::check() const {
  for (double x : {ce, l_common, l_unique, total})
    if (!std::isfinite(x)) throw NumericError("loss breakdown contains non-finite value");
  for (const auto& [k, x] : terms)
    if (!std::isfinite(x)) throw NumericError("loss term '" + k + "' is non-finite");
  const double composed = ce + beta3 * l_common + beta4 * l_unique;
  if (std::fabs(total - composed) > 1e-9 * std::max(1.0, std::fabs(total)))
    throw NumericError("loss breakdown total does not recompose from its parts");
}

double common_loss(double h_c, double alignment, double i_zc_y, double i_zc_c, double beta1) {
  for (double x : {h_c, alignment, i_zc_y, i_zc_c})
    if (!std::isfinite(x)) throw NumericError("common_loss: non-finite input");
  return -h_c + alignment - (i_zc_y - beta1 * i_zc_c);
}

double unique_loss(const std::vector<UniqueViewTerms>& per_view,
                   const std::vector<std::vector<double>>& pairwise, double beta2) {
  const std::size_t v = per_view.size();
  if (pairwise.size() != v)
    throw DataError("unique_loss: pairwise matrix must be v x v");
  double loss = 0.0;
  for (const auto& t : per_view)
    loss -= t.i_zu_y - beta2 * t.i_zu_x - t.i_zu_zc;
  for (std::size_t i = 0; i < v; ++i) {
    if (pairwise[i].size() != v)
      throw DataError("unique_loss: pairwise matrix must be v x v");
    for (std::size_t j = 0; j < v; ++j) {
      if (i == j) continue;
      loss += pairwise[i][j];
    }
  }
  if (!std::isfinite(loss)) throw NumericError("unique_loss: non-finite result");
  return loss;
}

double cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  Tape t;
  return t.scalar(t.softmax_ce(t.constant(logits), labels));
}

LossBreakdown total_loss(double ce, double l_common, double l_unique, double beta3,
                         double beta4) {
  LossBreakdown b;
  b.ce = ce;
  b.l_common = l_common;
  b.l_unique = l_unique;
  b.beta3 = beta3;
  b.beta4 = beta4;
  b.total = ce + beta3 * l_common + beta4 * l_unique;
  b.check();
  return b;
}

}  // namespace ciml
