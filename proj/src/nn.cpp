#include "ciml/nn.hpp"

#include "ciml/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace ciml {
namespace {

void init_linear(Linear& l, Rng& rng) {
  // Xavier-style scaling keeps tanh trunks in their linear range at init.
  const double s = std::sqrt(2.0 / static_cast<double>(l.W.value.rows() + l.W.value.cols()));
  for (std::size_t i = 0; i < l.W.value.size(); ++i) l.W.value.data()[i] = s * rng.normal();
  l.b.value.fill(0.0);
}

Tape::Id apply_activation(Tape& t, Tape::Id x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return t.tanh(x);
    case Activation::Relu: return t.relu(x);
    case Activation::Softplus: return t.softplus(x);
  }
  throw std::logic_error("unknown activation");
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "softplus") return Activation::Softplus;
  throw ConfigError("unknown activation: " + name);
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
  }
  return "?";
}

void EncoderSpec::validate() const {
  if (input_dim == 0 || output_dim == 0)
    throw ConfigError("EncoderSpec: dims must be positive");
  for (std::size_t h : hidden_dims)
    if (h == 0) throw ConfigError("EncoderSpec: hidden dims must be positive");
}

Mlp Mlp::make(const EncoderSpec& spec, Rng& rng, const std::string& name) {
  spec.validate();
  Mlp m;
  m.act = spec.activation;
  std::size_t in = spec.input_dim;
  for (std::size_t li = 0; li < spec.hidden_dims.size(); ++li) {
    m.layers.emplace_back(in, spec.hidden_dims[li], name + ".h" + std::to_string(li));
    init_linear(m.layers.back(), rng);
    in = spec.hidden_dims[li];
  }
  m.layers.emplace_back(in, spec.output_dim, name + ".out");
  init_linear(m.layers.back(), rng);
  return m;
}

Tape::Id Mlp::forward(Tape& t, Tape::Id x, bool train_params) {
  Tape::Id h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Linear& l = layers[i];
    Tape::Id w = train_params ? t.leaf(l.W) : t.constant(l.W.value);
    Tape::Id b = train_params ? t.leaf(l.b) : t.constant(l.b.value);
    h = t.add_rowvec(t.matmul(h, w), b);
    if (i + 1 < layers.size()) h = apply_activation(t, h, act);
  }
  return h;
}

Matrix Mlp::forward_value(const Matrix& x) {
  Tape t;
  return t.value(forward(t, t.constant(x), false));
}

void Mlp::collect(std::vector<Param*>& out) {
  for (auto& l : layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
}

GaussianHead GaussianHead::make(const EncoderSpec& spec, Rng& rng, const std::string& name,
                                double lv_min, double lv_max) {
  spec.validate();
  GaussianHead g;
  g.logvar_min = lv_min;
  g.logvar_max = lv_max;
  std::size_t trunk_out = spec.input_dim;
  if (!spec.hidden_dims.empty()) {
    EncoderSpec ts = spec;
    ts.output_dim = spec.hidden_dims.back();
    ts.hidden_dims.pop_back();
    g.trunk = Mlp::make(ts, rng, name + ".trunk");
    trunk_out = ts.output_dim;
  }
  g.mean_head = Linear(trunk_out, spec.output_dim, name + ".mu");
  init_linear(g.mean_head, rng);
  g.logvar_head = Linear(trunk_out, spec.output_dim, name + ".logvar");
  init_linear(g.logvar_head, rng);
  return g;
}

GaussianHead::Nodes GaussianHead::forward(Tape& t, Tape::Id x, bool train_params) {
  Tape::Id h = x;
  if (!trunk.layers.empty()) {
    h = trunk.forward(t, x, train_params);
    h = apply_activation(t, h, trunk.act);
  }
  Tape::Id wm = train_params ? t.leaf(mean_head.W) : t.constant(mean_head.W.value);
  Tape::Id bm = train_params ? t.leaf(mean_head.b) : t.constant(mean_head.b.value);
  Tape::Id wl = train_params ? t.leaf(logvar_head.W) : t.constant(logvar_head.W.value);
  Tape::Id bl = train_params ? t.leaf(logvar_head.b) : t.constant(logvar_head.b.value);
  Nodes n;
  n.mean = t.add_rowvec(t.matmul(h, wm), bm);
  n.logvar = t.clamp(t.add_rowvec(t.matmul(h, wl), bl), logvar_min, logvar_max);
  n.std = t.exp(t.scale(n.logvar, 0.5));
  return n;
}

StochasticEncoding GaussianHead::encode_value(const Matrix& x) {
  Tape t;
  Nodes n = forward(t, t.constant(x), false);
  StochasticEncoding e{t.value(n.mean), t.value(n.std)};
  if (!e.mean.all_finite() || !e.std.all_finite())
    throw NumericError("encode_stochastic: non-finite output");
  return e;
}

void GaussianHead::collect(std::vector<Param*>& out) {
  trunk.collect(out);
  out.push_back(&mean_head.W);
  out.push_back(&mean_head.b);
  out.push_back(&logvar_head.W);
  out.push_back(&logvar_head.b);
}

Tape::Id sample_node_with_eta(Tape& t, const GaussianHead::Nodes& enc, const Matrix& eta) {
  Tape::Id e = t.constant(eta);
  return t.add(enc.mean, t.mul(enc.std, e));
}

Tape::Id sample_node(Tape& t, const GaussianHead::Nodes& enc, Rng& rng) {
  const Matrix& mu = t.value(enc.mean);
  Matrix eta(mu.rows(), mu.cols());
  for (std::size_t i = 0; i < eta.size(); ++i) eta.data()[i] = rng.normal();
  return sample_node_with_eta(t, enc, eta);
}

Matrix sample_value(const StochasticEncoding& enc, Rng& rng) {
  Matrix z = enc.mean;
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += enc.std.data()[i] * rng.normal();
  return z;
}

MineNetwork MineNetwork::make(std::size_t dim_a, std::size_t dim_b,
                              const std::vector<std::size_t>& hidden, Rng& rng,
                              const std::string& name) {
  MineNetwork m;
  m.dim_a = dim_a;
  m.dim_b = dim_b;
  EncoderSpec spec;
  spec.input_dim = dim_a + dim_b;
  spec.hidden_dims = hidden;
  spec.output_dim = 1;
  spec.activation = Activation::Softplus;
  m.net = Mlp::make(spec, rng, name);
  return m;
}

void MineNetwork::collect(std::vector<Param*>& out) { net.collect(out); }

Matrix encode_view(Mlp& enc, const Matrix& x_batch, std::size_t input_dim) {
  if (x_batch.cols() != input_dim)
    throw DataError("encode_view: input width does not match encoder input_dim");
  if (x_batch.rows() == 0) return Matrix(0, enc.layers.back().W.value.cols());
  return enc.forward_value(x_batch);
}

StochasticEncoding encode_stochastic(GaussianHead& head, const Matrix& x_batch) {
  return head.encode_value(x_batch);
}

}  // namespace ciml
