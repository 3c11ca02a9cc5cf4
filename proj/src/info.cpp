#include "ciml/info.hpp"

#include <cmath>
#include <stdexcept>

#include "ciml/errors.hpp"

namespace ciml {

namespace {
constexpr double kLn2PiE = 2.837877066409345483560659472811;  // ln(2*pi*e)
}

double gk_alignment(const std::vector<Matrix>& view_encodings, const Matrix& c_batch) {
  double total = 0.0;
  for (const Matrix& f : view_encodings) {
    check_same_shape(f, c_batch, "gk_alignment");
    const Matrix d = sub(f, c_batch);
    total += sq_frobenius(d) / static_cast<double>(c_batch.rows());
  }
  return total;
}

Tape::Id gk_alignment_node(Tape& t, const std::vector<Tape::Id>& view_encodings,
                           Tape::Id c_batch) {
  Tape::Id total = -1;
  for (Tape::Id f : view_encodings) {
    Tape::Id term = t.mean_sq_norm(t.sub(f, c_batch));
    total = (total < 0) ? term : t.add(total, term);
  }
  if (total < 0) throw DataError("gk_alignment: no views");
  return total;
}

double gaussian_entropy(const Matrix& std_batch) {
  for (std::size_t i = 0; i < std_batch.size(); ++i)
    if (!(std_batch.data()[i] > 0.0)) throw NumericError("gaussian_entropy: non-positive std");
  double acc = 0.0;
  for (std::size_t i = 0; i < std_batch.size(); ++i)
    acc += 0.5 * (kLn2PiE + 2.0 * std::log(std_batch.data()[i]));
  return acc / static_cast<double>(std_batch.rows());
}

Tape::Id gaussian_entropy_node(Tape& t, Tape::Id logvar, std::size_t batch) {
  const std::size_t d = t.value(logvar).cols();
  Tape::Id s = t.sum_all(t.add_scalar(logvar, kLn2PiE));
  (void)d;
  return t.scale(s, 0.5 / static_cast<double>(batch));
}

double kl_to_standard_normal(const StochasticEncoding& enc) {
  check_same_shape(enc.mean, enc.std, "kl_to_standard_normal");
  double acc = 0.0;
  for (std::size_t i = 0; i < enc.mean.size(); ++i) {
    const double mu = enc.mean.data()[i];
    const double sd = enc.std.data()[i];
    if (!(sd > 0.0)) throw NumericError("kl_to_standard_normal: non-positive std");
    acc += 0.5 * (sd * sd + mu * mu - 1.0 - 2.0 * std::log(sd));
  }
  return acc / static_cast<double>(enc.mean.rows());
}

Tape::Id kl_to_standard_normal_node(Tape& t, Tape::Id mean, Tape::Id logvar,
                                    std::size_t batch) {
  Tape::Id var = t.exp(logvar);
  Tape::Id mu2 = t.mul(mean, mean);
  Tape::Id inner = t.add_scalar(t.sub(t.add(var, mu2), logvar), -1.0);
  return t.scale(t.sum_all(inner), 0.5 / static_cast<double>(batch));
}

double predictive_lower_bound(const Matrix& logits_from_z, const std::vector<int>& labels) {
  Tape t;
  return -t.scalar(t.softmax_ce(t.constant(logits_from_z), labels));
}

Tape::Id predictive_lower_bound_node(Tape& t, Tape::Id logits, const std::vector<int>& labels) {
  return t.scale(t.softmax_ce(logits, labels), -1.0);
}

MineBoundNodes mine_bound_node(Tape& t, MineNetwork& net, Tape::Id a, Tape::Id b,
                               const std::vector<std::size_t>& perm,
                               bool train_net_params, bool use_moving_average) {
  const std::size_t batch = t.value(a).rows();
  if (batch < 2) throw DataError("mine: batch size must be >= 2");
  if (t.value(b).rows() != batch) throw DataError("mine: batch size mismatch");
  Tape::Id joint_scores = net.net.forward(t, t.concat_cols({a, b}), train_net_params);
  Tape::Id b_shuf = t.gather_rows(b, perm);
  Tape::Id marg_scores = net.net.forward(t, t.concat_cols({a, b_shuf}), train_net_params);

  MineBoundNodes out;
  out.joint_mean = t.mean_all(joint_scores);
  double denom = 0.0;
  if (use_moving_average) {
    // update running mean of exp(T) on marginal pairs before taking the step
    const Matrix& s = t.value(marg_scores);
    double batch_mean_exp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) batch_mean_exp += std::exp(s.data()[i]);
    batch_mean_exp /= static_cast<double>(s.size());
    net.ma = net.ma < 0.0 ? batch_mean_exp
                          : net.ma_decay * net.ma + (1.0 - net.ma_decay) * batch_mean_exp;
    denom = net.ma;
  }
  out.log_part = t.log_mean_exp(marg_scores, denom);
  out.estimate = t.sub(out.joint_mean, out.log_part);
  return out;
}

MIEstimate mine_estimate(MineNetwork& net, const Matrix& a, const Matrix& b,
                         Rng& rng, std::size_t n_perms) {
  if (a.rows() < 2) throw DataError("mine_estimate: batch size must be >= 2");
  double acc = 0.0;
  for (std::size_t p = 0; p < n_perms; ++p) {
    std::vector<std::size_t> perm(a.rows());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    Tape t;
    auto nodes = mine_bound_node(t, net, t.constant(a), t.constant(b), perm,
                                 /*train_net_params=*/false, /*use_moving_average=*/false);
    acc += t.scalar(nodes.estimate);
  }
  return {acc / static_cast<double>(n_perms), MIKind::Mine};
}

double mine_train_step(MineNetwork& net, const Matrix& a, const Matrix& b,
                       const std::vector<std::size_t>& perm, Adam& opt) {
  std::vector<Param*> params;
  net.collect(params);
  for (Param* p : params) p->zero_grad();
  Tape t;
  auto nodes = mine_bound_node(t, net, t.constant(a), t.constant(b), perm,
                               /*train_net_params=*/true, /*use_moving_average=*/true);
  // ascend the bound
  Tape::Id neg = t.scale(nodes.estimate, -1.0);
  t.backward(neg);
  opt.step(params);
  return t.scalar(nodes.estimate);
}

}  // namespace ciml
