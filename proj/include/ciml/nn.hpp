#pragma once

#include <string>
#include <vector>

#include "ciml/rng.hpp"
#include "ciml/tensor.hpp"

namespace ciml {

enum class Activation { Identity, Tanh, Relu, Softplus };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a);

struct EncoderSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;
  Activation activation = Activation::Tanh;
  bool stochastic = false;

  void validate() const;
};

// Gaussian posterior parameters for a batch; std is strictly positive.
struct StochasticEncoding {
  Matrix mean;
  Matrix std;
};

struct Linear {
  Param W;  // in x out
  Param b;  // 1 x out
  Linear() = default;
  Linear(std::size_t in, std::size_t out, const std::string& name)
      : W(in, out, name + ".W"), b(1, out, name + ".b") {}
};

// Plain feed-forward stack; the last layer is linear (no activation).
struct Mlp {
  std::vector<Linear> layers;
  Activation act = Activation::Tanh;

  static Mlp make(const EncoderSpec& spec, Rng& rng, const std::string& name);
  Tape::Id forward(Tape& t, Tape::Id x, bool train_params);
  Matrix forward_value(const Matrix& x);
  void collect(std::vector<Param*>& out);
};

// Deterministic trunk plus mean / log-variance heads. Log-variance is
// clamped before exponentiation so std stays in a sane range.
struct GaussianHead {
  Mlp trunk;  // input -> hidden (empty layer list means heads act on input)
  Linear mean_head;
  Linear logvar_head;
  double logvar_min = -10.0;
  double logvar_max = 10.0;

  static GaussianHead make(const EncoderSpec& spec, Rng& rng, const std::string& name,
                           double lv_min, double lv_max);

  struct Nodes {
    Tape::Id mean;
    Tape::Id logvar;  // clamped
    Tape::Id std;     // exp(0.5 * logvar)
  };
  Nodes forward(Tape& t, Tape::Id x, bool train_params);
  StochasticEncoding encode_value(const Matrix& x);
  void collect(std::vector<Param*>& out);
};

// z = mean + std .* eta, eta ~ N(0, I) drawn from `rng`. Gradients flow
// through mean and std only.
Tape::Id sample_node(Tape& t, const GaussianHead::Nodes& enc, Rng& rng);
Tape::Id sample_node_with_eta(Tape& t, const GaussianHead::Nodes& enc, const Matrix& eta);
Matrix sample_value(const StochasticEncoding& enc, Rng& rng);

// MINE statistics network T(a, b) -> scalar per row, with the moving-average
// state used to bias-correct the log-partition gradient.
struct MineNetwork {
  Mlp net;        // (dim_a + dim_b) -> hidden -> 1
  double ma = -1.0;      // running mean of exp(T) on shuffled pairs; <0 means unset
  double ma_decay = 0.99;
  std::size_t dim_a = 0, dim_b = 0;

  static MineNetwork make(std::size_t dim_a, std::size_t dim_b,
                          const std::vector<std::size_t>& hidden, Rng& rng,
                          const std::string& name);
  void collect(std::vector<Param*>& out);
};

// Validated entry points per the encoder contracts.
Matrix encode_view(Mlp& enc, const Matrix& x_batch, std::size_t input_dim);
StochasticEncoding encode_stochastic(GaussianHead& head, const Matrix& x_batch);

}  // namespace ciml
