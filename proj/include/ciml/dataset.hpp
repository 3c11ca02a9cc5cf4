#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ciml/matrix.hpp"
#include "ciml/rng.hpp"

namespace ciml {

// v per-view feature matrices plus integer labels. Views are stored
// row-per-sample (n x d_i); all views share the same sample count.
struct MultiViewDataset {
  std::string name;
  std::vector<Matrix> views;   // each n x d_i
  std::vector<int> labels;     // length n, values in [0, m)
  std::size_t m = 0;

  std::size_t n() const { return labels.size(); }
  std::size_t v() const { return views.size(); }
  std::vector<std::size_t> view_dims() const;
  void validate() const;  // throws with the offending view index
};

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t v = 2;
  std::size_t m = 4;
  std::size_t dim_common = 4;
  std::size_t dim_unique = 4;
  double noise_std = 0.1;
  // weights per information source: (common, unique_1 ... unique_v)
  std::vector<double> label_mix;
  std::uint64_t seed = 1;

  void validate() const;
};

// Ground truth kept alongside a synthetic dataset: the latents that generated
// it and Monte-Carlo Bayes accuracies of the common-only / unique-only / joint
// predictors over the known generative model.
struct OracleInfo {
  Matrix common_latent;                // n x dim_common
  std::vector<Matrix> unique_latents;  // v of n x dim_unique
  double bayes_acc_common = 0.0;
  double bayes_acc_unique = 0.0;
  double bayes_acc_joint = 0.0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint64_t trial_seed = 0;
};

// Matrix container I/O. Text files are whitespace/comma delimited, one sample
// per row. Binary files carry the magic "CIMLMAT1" followed by little-endian
// int64 rows, cols and float64 payload.
Matrix load_matrix(const std::filesystem::path& path);
void save_matrix_text(const Matrix& m, const std::filesystem::path& path, int precision = 17);
void save_matrix_binary(const Matrix& m, const std::filesystem::path& path);

// Manifest (JSON): {"name", "m", "labels": file, "views": [files...]}.
MultiViewDataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir,
                  bool binary = true);

std::pair<MultiViewDataset, OracleInfo> generate_synthetic(const SyntheticSpec& spec);

// Stratified split, deterministic per trial_seed. Throws if any class has a
// single sample.
SplitIndices make_splits(const MultiViewDataset& ds, double train_fraction,
                         std::uint64_t trial_seed);

// Per-dimension standardization fitted on the training split.
struct Standardizer {
  std::vector<Matrix> mean;  // v of 1 x d_i
  std::vector<Matrix> std;   // v of 1 x d_i

  static Standardizer fit(const MultiViewDataset& ds, const std::vector<std::size_t>& train);
  Matrix apply(const Matrix& x, std::size_t view) const;
  std::vector<Matrix> apply_rows(const MultiViewDataset& ds,
                                 const std::vector<std::size_t>& idx) const;
};

std::vector<int> gather_labels(const MultiViewDataset& ds, const std::vector<std::size_t>& idx);

}  // namespace ciml
