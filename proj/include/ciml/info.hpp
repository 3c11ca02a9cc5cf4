#pragma once

#include <vector>

#include "ciml/nn.hpp"
#include "ciml/tensor.hpp"

namespace ciml {

// All mutual-information and entropy quantities, in nats. Each estimator has
// a plain evaluation form and a tape-node form used inside the training loss;
// both share the same arithmetic.
enum class MIKind { LowerBoundY, KlUpperBound, Mine };

struct MIEstimate {
  double value = 0.0;
  MIKind kind = MIKind::Mine;
};

// Sum over views of mean-over-batch squared distance to the common variable.
double gk_alignment(const std::vector<Matrix>& view_encodings, const Matrix& c_batch);
Tape::Id gk_alignment_node(Tape& t, const std::vector<Tape::Id>& view_encodings,
                           Tape::Id c_batch);

// Mean over batch of the diagonal-Gaussian differential entropy
// 0.5 * sum_j ln(2*pi*e*sigma_j^2).
double gaussian_entropy(const Matrix& std_batch);
// Node form works on the clamped log-variance: 0.5 * sum_j (ln(2*pi*e) + logvar_j).
Tape::Id gaussian_entropy_node(Tape& t, Tape::Id logvar, std::size_t batch);

// Mean over batch of KL(N(mu, diag(sigma^2)) || N(0, I)).
double kl_to_standard_normal(const StochasticEncoding& enc);
Tape::Id kl_to_standard_normal_node(Tape& t, Tape::Id mean, Tape::Id logvar, std::size_t batch);

// Mean over batch of log q(y_k | z_k); <= 0. Equals minus the softmax
// cross-entropy of the variational decoder.
double predictive_lower_bound(const Matrix& logits_from_z, const std::vector<int>& labels);
Tape::Id predictive_lower_bound_node(Tape& t, Tape::Id logits, const std::vector<int>& labels);

// Donsker-Varadhan bound: mean_joint T(a,b) - ln mean_marginal e^{T(a, b_perm)}.
// `perm` supplies the in-batch shuffle forming marginal pairs. When
// `use_moving_average` is set, the log-partition gradient is divided by the
// network's bias-corrected moving average instead of the batch mean, and the
// moving average is updated in place.
struct MineBoundNodes {
  Tape::Id estimate;   // 1x1
  Tape::Id joint_mean; // 1x1
  Tape::Id log_part;   // 1x1
};
MineBoundNodes mine_bound_node(Tape& t, MineNetwork& net, Tape::Id a, Tape::Id b,
                               const std::vector<std::size_t>& perm,
                               bool train_net_params, bool use_moving_average);

// Plain estimate with a seeded shuffle (averaged over `n_perms` permutations
// to reduce single-shuffle variance).
MIEstimate mine_estimate(MineNetwork& net, const Matrix& a, const Matrix& b,
                         Rng& rng, std::size_t n_perms = 1);

// One adversarial ascent step on the statistics network; returns the bound
// value seen by the step.
double mine_train_step(MineNetwork& net, const Matrix& a, const Matrix& b,
                       const std::vector<std::size_t>& perm, Adam& opt);

}  // namespace ciml
