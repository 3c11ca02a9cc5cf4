#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ciml/dataset.hpp"
#include "ciml/info.hpp"
#include "ciml/losses.hpp"
#include "ciml/nn.hpp"

namespace ciml {

struct TrainConfig {
  Hyperparams hp;
  std::size_t d_c = 4;
  std::size_t d_u = 4;
  std::vector<std::size_t> hidden = {64, 64};
  std::vector<std::size_t> mine_hidden = {64, 64};
  std::string activation = "tanh";
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr_main = 1e-3;
  double lr_mine = 5e-4;
  std::uint64_t seed = 1;
  std::size_t mc_samples = 1;
  double logvar_min = -10.0;
  double logvar_max = 10.0;
  std::size_t mine_steps_per_main = 1;
  double train_fraction = 0.8;

  void validate() const;
};

// JSON round-trip for config files and checkpoint headers. Parsing rejects
// unknown keys; absent keys keep their defaults.
std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

// Z = (Z_c, Z_u^(1), ..., Z_u^(v)) plus the concatenation fed to the
// classifier.
struct RepresentationBundle {
  Matrix z_c;
  std::vector<Matrix> z_u;
  Matrix joint;  // width d_c + v * d_u
};

struct TrainState {
  TrainConfig config;
  std::size_t v = 0, m = 0;
  std::vector<std::size_t> view_dims;
  Standardizer standardizer;
  std::vector<std::size_t> train_idx, test_idx;
  std::vector<Matrix> x_train;  // standardized per view, n_train x d_i
  std::vector<Matrix> x_test;
  std::vector<int> y_train, y_test;

  std::vector<Mlp> view_encoders;         // f_i: d_i -> d_c (common branch)
  GaussianHead common_head;               // d_c -> d_c
  std::vector<GaussianHead> unique_heads; // d_i -> d_u
  Param c_var;                            // n_train x d_c, free per-sample variable
  Linear classifier;                      // (d_c + v*d_u) -> m
  Linear decoder_c;                       // q(y | z_c)
  std::vector<Linear> decoders_u;         // q(y | z_u^i)
  std::vector<MineNetwork> mine_zu_zc;    // one per view
  std::vector<MineNetwork> mine_zu_zu;    // one per unordered view pair i<j
  Adam opt_main{1e-3};
  Adam opt_mine{5e-4};
  std::size_t epoch = 0;

  std::size_t pair_index(std::size_t i, std::size_t j) const;  // i < j
  std::vector<Param*> main_params();
  std::vector<Param*> all_params();  // main + all MINE nets (serialization order)
};

struct TrainHistory {
  std::vector<LossBreakdown> epochs;
  std::vector<double> train_acc, test_acc;  // fractions in [0, 1]
  std::vector<double> wall_sec;
};

// Frozen per-step noise so gradient checks can replay a step exactly.
struct StepNoise {
  std::vector<Matrix> eta_c;               // mc_samples matrices, batch x d_c
  std::vector<std::vector<Matrix>> eta_u;  // [view][sample], batch x d_u
  std::vector<std::size_t> perm;           // in-batch shuffle for MINE marginals
};

StepNoise draw_step_noise(const TrainState& s, std::size_t batch, Rng& rng);

TrainState init_state(const TrainConfig& config, const MultiViewDataset& ds,
                      const SplitIndices& splits);

// Forward pass of the total objective on one batch (positions into the
// training split). When `backward` is set, gradients are accumulated into the
// main parameters (MINE statistics networks stay frozen).
LossBreakdown forward_loss(TrainState& s, const std::vector<std::size_t>& batch_pos,
                           const StepNoise& noise, bool backward);

LossBreakdown train_epoch(TrainState& s);

std::pair<TrainState, TrainHistory> fit(const TrainConfig& config, const MultiViewDataset& ds,
                                        const SplitIndices& splits,
                                        const std::filesystem::path& log_path = {});
// Continue training an existing state up to config.epochs (used for resume).
TrainHistory fit_continue(TrainState& s, const std::filesystem::path& log_path = {});

// Inference-time representation: Z_u from posterior means; Z_c from the
// common head applied to the cross-view mean of the f_i encodings (the
// minimizer of the alignment penalty for an unseen sample).
RepresentationBundle infer_representation(TrainState& s, const std::vector<Matrix>& views_std);
std::vector<int> predict(TrainState& s, const std::vector<Matrix>& views_std);
double accuracy(TrainState& s, const std::vector<Matrix>& views_std,
                const std::vector<int>& labels);

// Versioned binary checkpoint: config + shapes + every parameter collection +
// optimizer state + epoch counter.
void save_checkpoint(TrainState& s, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

void append_history_record(const std::filesystem::path& log_path, std::size_t epoch,
                           const LossBreakdown& b, double train_acc, double test_acc,
                           double wall_sec);

}  // namespace ciml
