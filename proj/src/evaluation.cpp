#include "ciml/evaluation.hpp"

#include <cmath>
#include <fstream>

#include "ciml/errors.hpp"
#include "ciml/info.hpp"

namespace ciml {

ClassMetrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                             std::size_t m) {
  if (y_true.size() != y_pred.size())
    throw DataError("compute_metrics: label vectors differ in length");
  if (y_true.empty()) throw DataError("compute_metrics: empty label vectors");
  std::vector<std::vector<std::size_t>> conf(m, std::vector<std::size_t>(m, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= m || static_cast<std::size_t>(p) >= m)
      throw DataError("compute_metrics: label out of range");
    ++conf[t][p];
  }
  const double n = static_cast<double>(y_true.size());
  double correct = 0.0;
  for (std::size_t k = 0; k < m; ++k) correct += static_cast<double>(conf[k][k]);

  // per-class precision/recall/F1; a class never predicted gets precision 0,
  // a class absent from the truth gets recall 0
  double prec_sum = 0.0, f1_sum = 0.0, prec_wsum = 0.0, f1_wsum = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t tp = conf[k][k], pred_k = 0, true_k = 0;
    for (std::size_t j = 0; j < m; ++j) {
      pred_k += conf[j][k];
      true_k += conf[k][j];
    }
    const double prec = pred_k ? static_cast<double>(tp) / static_cast<double>(pred_k) : 0.0;
    const double rec = true_k ? static_cast<double>(tp) / static_cast<double>(true_k) : 0.0;
    const double f1 = (prec + rec > 0.0) ? 2.0 * prec * rec / (prec + rec) : 0.0;
    const double w = static_cast<double>(true_k) / n;
    prec_sum += prec;
    f1_sum += f1;
    prec_wsum += w * prec;
    f1_wsum += w * f1;
  }
  ClassMetrics r;
  r.acc = 100.0 * correct / n;
  r.precision_macro = 100.0 * prec_sum / static_cast<double>(m);
  r.f1_macro = 100.0 * f1_sum / static_cast<double>(m);
  r.precision_weighted = 100.0 * prec_wsum;
  r.f1_weighted = 100.0 * f1_wsum;
  return r;
}

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

namespace {
Summary field_summary(const std::vector<ClassMetrics>& ms, double ClassMetrics::* f) {
  std::vector<double> xs;
  for (const auto& m : ms) xs.push_back(m.*f);
  return summarize(xs);
}
}  // namespace

Summary MetricsReport::acc() const { return field_summary(per_trial, &ClassMetrics::acc); }
Summary MetricsReport::precision_macro() const {
  return field_summary(per_trial, &ClassMetrics::precision_macro);
}
Summary MetricsReport::f1_macro() const {
  return field_summary(per_trial, &ClassMetrics::f1_macro);
}
Summary MetricsReport::precision_weighted() const {
  return field_summary(per_trial, &ClassMetrics::precision_weighted);
}
Summary MetricsReport::f1_weighted() const {
  return field_summary(per_trial, &ClassMetrics::f1_weighted);
}

ClassMetrics run_trial(const TrainConfig& config, const MultiViewDataset& ds,
                       std::uint64_t trial_seed) {
  TrainConfig c = config;
  c.seed = trial_seed;
  SplitIndices splits = make_splits(ds, c.train_fraction, trial_seed);
  auto [state, hist] = fit(c, ds, splits);
  std::vector<int> pred = predict(state, state.x_test);
  return compute_metrics(state.y_test, pred, ds.m);
}

MetricsReport run_trials(const TrainConfig& config, const MultiViewDataset& ds,
                         std::size_t n_trials) {
  if (n_trials < 1) throw ConfigError("run_trials: n_trials must be >= 1");
  MetricsReport r;
  for (std::size_t k = 0; k < n_trials; ++k) {
    const std::uint64_t trial_seed = mix64(config.seed + 0x9e3779b97f4a7c15ULL * (k + 1));
    r.trial_seeds.push_back(trial_seed);
    r.per_trial.push_back(run_trial(config, ds, trial_seed));
  }
  return r;
}

std::vector<AblationResult> run_ablation(const TrainConfig& config, const MultiViewDataset& ds,
                                         std::size_t n_trials) {
  TrainConfig v1 = config;
  v1.hp.beta3 = 0.0;
  TrainConfig v2 = config;
  v2.hp.beta4 = 0.0;
  std::vector<AblationResult> out;
  out.push_back({"CIML", run_trials(config, ds, n_trials)});
  out.push_back({"CIML-v1", run_trials(v1, ds, n_trials)});
  out.push_back({"CIML-v2", run_trials(v2, ds, n_trials)});
  return out;
}

TrainConfig apply_override(TrainConfig base, const std::string& key, double value) {
  if (key == "beta1") base.hp.beta1 = value;
  else if (key == "beta2") base.hp.beta2 = value;
  else if (key == "beta3") base.hp.beta3 = value;
  else if (key == "beta4") base.hp.beta4 = value;
  else if (key == "d_c" || key == "d_u") {
    if (value < 1.0 || value != std::floor(value))
      throw ConfigError("sweep: " + key + " must be a positive integer");
    (key == "d_c" ? base.d_c : base.d_u) = static_cast<std::size_t>(value);
  } else {
    throw ConfigError("sweep: unknown parameter " + key);
  }
  return base;
}

std::vector<SweepCell> sweep(const TrainConfig& config, const MultiViewDataset& ds,
                             const std::vector<std::map<std::string, double>>& grid,
                             std::size_t n_trials) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  std::vector<SweepCell> out;
  for (const auto& cell : grid) {
    TrainConfig c = config;
    for (const auto& [k, v] : cell) c = apply_override(c, k, v);
    // trial seeds derive from config.seed only, so cells are paired
    out.push_back({cell, run_trials(c, ds, n_trials)});
  }
  return out;
}

namespace {

// Full-batch Adam probe; returns test cross-entropy in nats.
double train_probe(const Matrix& x_train, const std::vector<int>& y_train,
                   const Matrix& x_test, const std::vector<int>& y_test, std::size_t m,
                   const ProbeConfig& pc, const std::string& name) {
  Rng rng = substream(pc.seed, "probe." + name);
  EncoderSpec spec{x_train.cols(), pc.hidden, m, Activation::Tanh, false};
  Mlp probe = Mlp::make(spec, rng, name);
  Adam opt(pc.lr);
  std::vector<Param*> params;
  probe.collect(params);
  for (std::size_t step = 0; step < pc.steps; ++step) {
    Tape t;
    Tape::Id ce = t.softmax_ce(probe.forward(t, t.constant(x_train), true), y_train);
    for (Param* p : params) p->zero_grad();
    t.backward(ce);
    opt.step(params);
  }
  return cross_entropy(probe.forward_value(x_test), y_test);
}

Matrix concat_views(const std::vector<Matrix>& views) {
  std::size_t width = 0;
  for (const auto& v : views) width += v.cols();
  Matrix out(views[0].rows(), width);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    std::size_t off = 0;
    for (const auto& v : views)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off++) = v(i, j);
  }
  return out;
}

}  // namespace

SufficiencyReport sufficiency_check(TrainState& state, const ProbeConfig& probe) {
  RepresentationBundle z_tr = infer_representation(state, state.x_train);
  RepresentationBundle z_te = infer_representation(state, state.x_test);
  SufficiencyReport r;
  r.ce_z = train_probe(z_tr.joint, state.y_train, z_te.joint, state.y_test, state.m, probe,
                       "on_z");
  r.ce_x = train_probe(concat_views(state.x_train), state.y_train, concat_views(state.x_test),
                       state.y_test, state.m, probe, "on_x");
  r.gap = r.ce_z - r.ce_x;
  return r;
}

namespace {

double mine_probe(const Matrix& a, const Matrix& b, const AuditConfig& cfg, Rng& rng,
                  const std::string& name) {
  MineNetwork net = MineNetwork::make(a.cols(), b.cols(), cfg.hidden, rng, name);
  Adam opt(cfg.lr);
  std::vector<std::size_t> perm(a.rows());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm.begin(), perm.end());
    mine_train_step(net, a, b, perm, opt);
  }
  return mine_estimate(net, a, b, rng, cfg.eval_perms).value;
}

}  // namespace

std::vector<AuditEntry> independence_audit(TrainState& state, const AuditConfig& cfg) {
  RepresentationBundle r = infer_representation(state, state.x_test);
  Rng rng = substream(cfg.seed, "audit");
  std::vector<AuditEntry> out;
  for (std::size_t vi = 0; vi < state.v; ++vi) {
    const std::string label = "I(Zu" + std::to_string(vi) + ";Zc)";
    out.push_back({label, mine_probe(r.z_u[vi], r.z_c, cfg, rng, label)});
  }
  for (std::size_t i = 0; i < state.v; ++i)
    for (std::size_t j = i + 1; j < state.v; ++j) {
      const std::string label = "I(Zu" + std::to_string(i) + ";Zu" + std::to_string(j) + ")";
      out.push_back({label, mine_probe(r.z_u[i], r.z_u[j], cfg, rng, label)});
    }
  return out;
}

void export_embeddings(TrainState& state, const MultiViewDataset& ds,
                       const std::filesystem::path& path) {
  ds.validate();
  if (ds.v() != state.v) throw DataError("export_embeddings: view count mismatch");
  std::vector<Matrix> views_std;
  for (std::size_t vi = 0; vi < state.v; ++vi)
    views_std.push_back(state.standardizer.apply(ds.views[vi], vi));
  RepresentationBundle r = infer_representation(state, views_std);
  save_matrix_text(r.joint, path);
  std::ofstream f(path.string() + ".labels");
  if (!f) throw DataError("cannot write labels next to " + path.string());
  for (int y : ds.labels) f << y << '\n';
}

}  // namespace ciml
