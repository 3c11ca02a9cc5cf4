#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ciml/trainer.hpp"

namespace ciml {

// Classification metrics in percent. Precision/F1 come in macro and weighted
// flavors; acceptance gates use macro, reports show both.
struct ClassMetrics {
  double acc = 0.0;
  double precision_macro = 0.0;
  double f1_macro = 0.0;
  double precision_weighted = 0.0;
  double f1_weighted = 0.0;
};

ClassMetrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                             std::size_t m);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // population std; 0 for a single trial
};

Summary summarize(const std::vector<double>& xs);

struct MetricsReport {
  std::vector<std::uint64_t> trial_seeds;
  std::vector<ClassMetrics> per_trial;

  Summary acc() const;
  Summary precision_macro() const;
  Summary f1_macro() const;
  Summary precision_weighted() const;
  Summary f1_weighted() const;
};

// One trial: stratified split + training run, both derived from trial_seed so
// variants / sweep cells sharing seeds are paired.
ClassMetrics run_trial(const TrainConfig& config, const MultiViewDataset& ds,
                       std::uint64_t trial_seed);
MetricsReport run_trials(const TrainConfig& config, const MultiViewDataset& ds,
                         std::size_t n_trials);

struct AblationResult {
  std::string variant;  // "CIML", "CIML-v1", "CIML-v2"
  MetricsReport report;
};

// Full model plus the beta3-term-removed (v1) and beta4-term-removed (v2)
// variants, trained on identical split/seed sequences.
std::vector<AblationResult> run_ablation(const TrainConfig& config, const MultiViewDataset& ds,
                                         std::size_t n_trials);

// One sweep cell: named config overrides applied on top of the base config.
// Valid keys: beta1..beta4, d_c, d_u.
struct SweepCell {
  std::map<std::string, double> overrides;
  MetricsReport report;
};

TrainConfig apply_override(TrainConfig base, const std::string& key, double value);
std::vector<SweepCell> sweep(const TrainConfig& config, const MultiViewDataset& ds,
                             const std::vector<std::map<std::string, double>>& grid,
                             std::size_t n_trials);

// Test cross-entropies (nats) of two identically budgeted probe classifiers:
// one on the learned joint representation Z, one on the concatenated
// standardized raw views. Proxies for H(Y|Z) and H(Y|X).
struct SufficiencyReport {
  double ce_z = 0.0;
  double ce_x = 0.0;
  double gap = 0.0;  // ce_z - ce_x
};

struct ProbeConfig {
  std::vector<std::size_t> hidden = {32};
  std::size_t steps = 300;
  double lr = 1e-2;
  std::uint64_t seed = 7;
};

SufficiencyReport sufficiency_check(TrainState& state, const ProbeConfig& probe = {});

// Post-hoc MINE probes on the held-out representation: I(Z_u^i; Z_c) per view
// and I(Z_u^i; Z_u^j) per unordered pair, in nats.
struct AuditEntry {
  std::string label;
  double mi = 0.0;
};

struct AuditConfig {
  std::vector<std::size_t> hidden = {32, 32};
  std::size_t steps = 300;
  double lr = 1e-3;
  std::size_t eval_perms = 20;
  std::uint64_t seed = 11;
};

std::vector<AuditEntry> independence_audit(TrainState& state, const AuditConfig& cfg = {});

// Writes the joint representation of every sample (text matrix format) to
// `path` and the labels to `path` + ".labels".
void export_embeddings(TrainState& state, const MultiViewDataset& ds,
                       const std::filesystem::path& path);

}  // namespace ciml
