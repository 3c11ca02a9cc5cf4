#include "ciml/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ciml/errors.hpp"

namespace ciml {
namespace {

Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& pos) {
  Matrix out(pos.size(), x.cols());
  for (std::size_t i = 0; i < pos.size(); ++i)
    std::memcpy(out.row(i), x.row(pos[i]), x.cols() * sizeof(double));
  return out;
}

Tape::Id linear_node(Tape& t, Linear& l, Tape::Id x, bool train) {
  Tape::Id w = train ? t.leaf(l.W) : t.constant(l.W.value);
  Tape::Id b = train ? t.leaf(l.b) : t.constant(l.b.value);
  return t.add_rowvec(t.matmul(x, w), b);
}

Tape::Id mean_of(Tape& t, const std::vector<Tape::Id>& terms) {
  Tape::Id acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = t.add(acc, terms[i]);
  return terms.size() > 1 ? t.scale(acc, 1.0 / static_cast<double>(terms.size())) : acc;
}

void require_finite(double x, const std::string& term) {
  if (!std::isfinite(x)) throw NumericError("non-finite loss term: " + term);
}

}  // namespace

void TrainConfig::validate() const {
  hp.validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (MINE needs a shuffle)");
  if (d_c < 1 || d_u < 1) throw ConfigError("representation dims must be >= 1");
  if (mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0, 1)");
  if (logvar_min > logvar_max) throw ConfigError("logvar clamp bounds inverted");
  if (mine_steps_per_main < 1) throw ConfigError("mine_steps_per_main must be >= 1");
  activation_from_name(activation);
}

std::size_t TrainState::pair_index(std::size_t i, std::size_t j) const {
  // index of unordered pair (i, j), i < j, in row-major upper-triangle order
  return i * v - i * (i + 1) / 2 + (j - i - 1);
}

std::vector<Param*> TrainState::main_params() {
  std::vector<Param*> p;
  for (auto& e : view_encoders) e.collect(p);
  common_head.collect(p);
  for (auto& u : unique_heads) u.collect(p);
  p.push_back(&c_var);
  p.push_back(&classifier.W);
  p.push_back(&classifier.b);
  p.push_back(&decoder_c.W);
  p.push_back(&decoder_c.b);
  for (auto& d : decoders_u) {
    p.push_back(&d.W);
    p.push_back(&d.b);
  }
  return p;
}

std::vector<Param*> TrainState::all_params() {
  std::vector<Param*> p = main_params();
  for (auto& n : mine_zu_zc) n.collect(p);
  for (auto& n : mine_zu_zu) n.collect(p);
  return p;
}

StepNoise draw_step_noise(const TrainState& s, std::size_t batch, Rng& rng) {
  StepNoise n;
  for (std::size_t k = 0; k < s.config.mc_samples; ++k) {
    Matrix e(batch, s.config.d_c);
    for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
    n.eta_c.push_back(std::move(e));
  }
  n.eta_u.resize(s.v);
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    for (std::size_t k = 0; k < s.config.mc_samples; ++k) {
      Matrix e(batch, s.config.d_u);
      for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = rng.normal();
      n.eta_u[vi].push_back(std::move(e));
    }
  }
  n.perm.resize(batch);
  for (std::size_t i = 0; i < batch; ++i) n.perm[i] = i;
  rng.shuffle(n.perm.begin(), n.perm.end());
  return n;
}

// Builds every network and optimizer from config + shapes; parameter values
// are seeded from substreams of config.seed, so construction is deterministic
// and checkpoint loading can overwrite them in a fixed order.
static void build_networks(TrainState& s) {
  const TrainConfig& config = s.config;
  const Activation act = activation_from_name(config.activation);
  Rng init_rng = substream(config.seed, "init");

  for (std::size_t vi = 0; vi < s.v; ++vi) {
    EncoderSpec es{s.view_dims[vi], config.hidden, config.d_c, act, false};
    s.view_encoders.push_back(Mlp::make(es, init_rng, "f" + std::to_string(vi)));
  }
  {
    EncoderSpec es{config.d_c, config.hidden, config.d_c, act, true};
    s.common_head = GaussianHead::make(es, init_rng, "common", config.logvar_min,
                                       config.logvar_max);
  }
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    EncoderSpec es{s.view_dims[vi], config.hidden, config.d_u, act, true};
    s.unique_heads.push_back(GaussianHead::make(es, init_rng, "u" + std::to_string(vi),
                                                config.logvar_min, config.logvar_max));
  }

  const std::size_t joint_dim = config.d_c + s.v * config.d_u;
  s.classifier = Linear(joint_dim, s.m, "classifier");
  s.decoder_c = Linear(config.d_c, s.m, "dec_c");
  for (std::size_t vi = 0; vi < s.v; ++vi)
    s.decoders_u.emplace_back(config.d_u, s.m, "dec_u" + std::to_string(vi));
  {
    // reuse the Xavier scheme for the linear heads
    Rng head_rng = substream(config.seed, "init.heads");
    auto xav = [&head_rng](Linear& l) {
      const double sc =
          std::sqrt(2.0 / static_cast<double>(l.W.value.rows() + l.W.value.cols()));
      for (std::size_t i = 0; i < l.W.value.size(); ++i)
        l.W.value.data()[i] = sc * head_rng.normal();
      l.b.value.fill(0.0);
    };
    xav(s.classifier);
    xav(s.decoder_c);
    for (auto& d : s.decoders_u) xav(d);
  }

  Rng mine_rng = substream(config.seed, "init.mine");
  for (std::size_t vi = 0; vi < s.v; ++vi)
    s.mine_zu_zc.push_back(MineNetwork::make(config.d_u, config.d_c, config.mine_hidden,
                                             mine_rng, "mine_zc" + std::to_string(vi)));
  for (std::size_t i = 0; i < s.v; ++i)
    for (std::size_t j = i + 1; j < s.v; ++j)
      s.mine_zu_zu.push_back(MineNetwork::make(config.d_u, config.d_u, config.mine_hidden,
                                               mine_rng,
                                               "mine_uu" + std::to_string(i) + "_" +
                                                   std::to_string(j)));

  s.c_var = Param(s.train_idx.size(), config.d_c, "C");
  s.opt_main = Adam(config.lr_main);
  s.opt_mine = Adam(config.lr_mine);
}

TrainState init_state(const TrainConfig& config, const MultiViewDataset& ds,
                      const SplitIndices& splits) {
  config.validate();
  ds.validate();
  TrainState s;
  s.config = config;
  s.v = ds.v();
  s.m = ds.m;
  s.view_dims = ds.view_dims();
  s.train_idx = splits.train;
  s.test_idx = splits.test;
  s.standardizer = Standardizer::fit(ds, splits.train);
  s.x_train = s.standardizer.apply_rows(ds, splits.train);
  s.x_test = s.standardizer.apply_rows(ds, splits.test);
  s.y_train = gather_labels(ds, splits.train);
  s.y_test = gather_labels(ds, splits.test);
  build_networks(s);

  // C starts at the per-sample mean of the initial view encodings
  Matrix acc(s.train_idx.size(), config.d_c);
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    Matrix f = s.view_encoders[vi].forward_value(s.x_train[vi]);
    kernels::active().axpy(1.0, f.data(), acc.data(), acc.size());
  }
  kernels::active().scale(1.0 / static_cast<double>(s.v), acc.data(), acc.size());
  s.c_var.value = acc;
  if (!s.c_var.value.all_finite()) throw NumericError("C initialization is non-finite");
  return s;
}

LossBreakdown forward_loss(TrainState& s, const std::vector<std::size_t>& batch_pos,
                           const StepNoise& noise, bool backward) {
  const std::size_t B = batch_pos.size();
  const Hyperparams& hp = s.config.hp;
  const bool train = backward;
  Tape t;

  std::vector<Tape::Id> x(s.v), fenc(s.v);
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    x[vi] = t.constant(take_rows(s.x_train[vi], batch_pos));
    fenc[vi] = s.view_encoders[vi].forward(t, x[vi], train);
  }
  std::vector<int> y;
  y.reserve(B);
  for (std::size_t p : batch_pos) y.push_back(s.y_train[p]);

  Tape::Id c_leaf = train ? t.leaf(s.c_var) : t.constant(s.c_var.value);
  Tape::Id c_batch = t.gather_rows(c_leaf, batch_pos);
  Tape::Id align = gk_alignment_node(t, fenc, c_batch);

  auto ch = s.common_head.forward(t, c_batch, train);
  Tape::Id h_c = gaussian_entropy_node(t, ch.logvar, B);
  Tape::Id kl_c = kl_to_standard_normal_node(t, ch.mean, ch.logvar, B);

  std::vector<GaussianHead::Nodes> uh(s.v);
  std::vector<Tape::Id> kl_u(s.v);
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    uh[vi] = s.unique_heads[vi].forward(t, x[vi], train);
    kl_u[vi] = kl_to_standard_normal_node(t, uh[vi].mean, uh[vi].logvar, B);
  }

  const std::size_t S = s.config.mc_samples;
  std::vector<Tape::Id> ce_s, i_zc_y_s;
  std::vector<std::vector<Tape::Id>> i_zu_y_s(s.v), mi_zc_s(s.v);
  std::vector<std::vector<Tape::Id>> mi_uu_s(s.mine_zu_zu.size());
  for (std::size_t k = 0; k < S; ++k) {
    Tape::Id z_c = sample_node_with_eta(t, ch, noise.eta_c[k]);
    std::vector<Tape::Id> z_u(s.v);
    for (std::size_t vi = 0; vi < s.v; ++vi)
      z_u[vi] = sample_node_with_eta(t, uh[vi], noise.eta_u[vi][k]);

    i_zc_y_s.push_back(
        predictive_lower_bound_node(t, linear_node(t, s.decoder_c, z_c, train), y));
    for (std::size_t vi = 0; vi < s.v; ++vi)
      i_zu_y_s[vi].push_back(
          predictive_lower_bound_node(t, linear_node(t, s.decoders_u[vi], z_u[vi], train), y));

    for (std::size_t vi = 0; vi < s.v; ++vi) {
      auto mb = mine_bound_node(t, s.mine_zu_zc[vi], z_u[vi], z_c, noise.perm,
                                /*train_net_params=*/false, /*use_moving_average=*/backward);
      mi_zc_s[vi].push_back(mb.estimate);
    }
    for (std::size_t i = 0; i < s.v; ++i)
      for (std::size_t j = i + 1; j < s.v; ++j) {
        const std::size_t pi = s.pair_index(i, j);
        auto mb = mine_bound_node(t, s.mine_zu_zu[pi], z_u[i], z_u[j], noise.perm,
                                  /*train_net_params=*/false, /*use_moving_average=*/backward);
        mi_uu_s[pi].push_back(mb.estimate);
      }

    std::vector<Tape::Id> parts = {z_c};
    for (std::size_t vi = 0; vi < s.v; ++vi) parts.push_back(z_u[vi]);
    Tape::Id logits = linear_node(t, s.classifier, t.concat_cols(parts), train);
    ce_s.push_back(t.softmax_ce(logits, y));
  }

  Tape::Id ce = mean_of(t, ce_s);
  Tape::Id i_zc_y = mean_of(t, i_zc_y_s);
  std::vector<Tape::Id> i_zu_y(s.v), mi_zc(s.v), mi_uu(s.mine_zu_zu.size());
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    i_zu_y[vi] = mean_of(t, i_zu_y_s[vi]);
    mi_zc[vi] = mean_of(t, mi_zc_s[vi]);
  }
  for (std::size_t pi = 0; pi < s.mine_zu_zu.size(); ++pi) mi_uu[pi] = mean_of(t, mi_uu_s[pi]);

  // L_c = -H(C) + alignment - (I(Zc;Y) - beta1 * I(Zc;C))
  Tape::Id l_c = t.add(t.sub(align, h_c), t.sub(t.scale(kl_c, hp.beta1), i_zc_y));
  // L_u = -sum_i [I(Zu;Y) - beta2*I(Zu;X) - I(Zu;Zc)] + sum_{i!=j} I(Zu_i;Zu_j)
  Tape::Id l_u = -1;
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    Tape::Id term = t.add(t.sub(t.scale(kl_u[vi], hp.beta2), i_zu_y[vi]), mi_zc[vi]);
    l_u = l_u < 0 ? term : t.add(l_u, term);
  }
  for (std::size_t pi = 0; pi < s.mine_zu_zu.size(); ++pi)
    l_u = t.add(l_u, t.scale(mi_uu[pi], 2.0));  // each unordered pair appears twice

  Tape::Id total =
      t.add(ce, t.add(t.scale(l_c, hp.beta3), t.scale(l_u, hp.beta4)));

  LossBreakdown b;
  b.ce = t.scalar(ce);
  b.l_common = t.scalar(l_c);
  b.l_unique = t.scalar(l_u);
  b.beta3 = hp.beta3;
  b.beta4 = hp.beta4;
  b.total = t.scalar(total);
  b.terms["H_C"] = t.scalar(h_c);
  b.terms["alignment"] = t.scalar(align);
  b.terms["I_Zc_Y"] = t.scalar(i_zc_y);
  b.terms["I_Zc_C"] = t.scalar(kl_c);
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    const std::string sv = std::to_string(vi);
    b.terms["I_Zu_Y." + sv] = t.scalar(i_zu_y[vi]);
    b.terms["I_Zu_X." + sv] = t.scalar(kl_u[vi]);
    b.terms["I_Zu_Zc." + sv] = t.scalar(mi_zc[vi]);
  }
  for (std::size_t i = 0; i < s.v; ++i)
    for (std::size_t j = i + 1; j < s.v; ++j)
      b.terms["I_Zu_Zu." + std::to_string(i) + "." + std::to_string(j)] =
          t.scalar(mi_uu[s.pair_index(i, j)]);
  for (const auto& [k, x] : b.terms) require_finite(x, k);
  require_finite(b.total, "total");

  if (backward) t.backward(total);
  return b;
}

LossBreakdown train_epoch(TrainState& s) {
  const std::size_t n_train = s.train_idx.size();
  Rng batch_rng = substream(s.config.seed, "batching", s.epoch);
  Rng eta_rng = substream(s.config.seed, "eta", s.epoch);
  Rng mine_rng = substream(s.config.seed, "mine", s.epoch);

  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  batch_rng.shuffle(order.begin(), order.end());

  std::vector<Param*> mains = s.main_params();
  LossBreakdown acc;
  std::size_t n_batches = 0;

  for (std::size_t start = 0; start < n_train; start += s.config.batch_size) {
    const std::size_t end = std::min(start + s.config.batch_size, n_train);
    if (end - start < 2) break;  // MINE needs at least two rows to shuffle
    std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
    StepNoise noise = draw_step_noise(s, batch.size(), eta_rng);

    for (Param* p : mains) p->zero_grad();
    LossBreakdown b = forward_loss(s, batch, noise, /*backward=*/true);
    s.opt_main.step(mains);

    // adversarial step(s): refresh samples from the updated encoders, then
    // ascend each statistics network on detached values
    for (std::size_t rep = 0; rep < s.config.mine_steps_per_main; ++rep) {
      Matrix c_batch = take_rows(s.c_var.value, batch);
      StochasticEncoding ec = s.common_head.encode_value(c_batch);
      Matrix z_c = sample_value(ec, mine_rng);
      std::vector<Matrix> z_u;
      for (std::size_t vi = 0; vi < s.v; ++vi) {
        StochasticEncoding eu =
            s.unique_heads[vi].encode_value(take_rows(s.x_train[vi], batch));
        z_u.push_back(sample_value(eu, mine_rng));
      }
      std::vector<std::size_t> perm(batch.size());
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
      mine_rng.shuffle(perm.begin(), perm.end());
      for (std::size_t vi = 0; vi < s.v; ++vi)
        mine_train_step(s.mine_zu_zc[vi], z_u[vi], z_c, perm, s.opt_mine);
      for (std::size_t i = 0; i < s.v; ++i)
        for (std::size_t j = i + 1; j < s.v; ++j)
          mine_train_step(s.mine_zu_zu[s.pair_index(i, j)], z_u[i], z_u[j], perm, s.opt_mine);
    }

    // running epoch means
    acc.ce += b.ce;
    acc.l_common += b.l_common;
    acc.l_unique += b.l_unique;
    acc.total += b.total;
    for (const auto& [k, x] : b.terms) acc.terms[k] += x;
    ++n_batches;
  }
  if (n_batches == 0) throw DataError("training split too small for one batch");
  acc.beta3 = s.config.hp.beta3;
  acc.beta4 = s.config.hp.beta4;
  const double inv = 1.0 / static_cast<double>(n_batches);
  acc.ce *= inv;
  acc.l_common *= inv;
  acc.l_unique *= inv;
  acc.total *= inv;
  for (auto& [k, x] : acc.terms) x *= inv;
  ++s.epoch;
  return acc;
}

RepresentationBundle infer_representation(TrainState& s, const std::vector<Matrix>& views_std) {
  if (views_std.size() != s.v)
    throw DataError("infer_representation: expected " + std::to_string(s.v) + " views, got " +
                    std::to_string(views_std.size()));
  RepresentationBundle r;
  Matrix mean_f;
  for (std::size_t vi = 0; vi < s.v; ++vi) {
    Matrix f = encode_view(s.view_encoders[vi], views_std[vi], s.view_dims[vi]);
    if (vi == 0)
      mean_f = std::move(f);
    else
      kernels::active().axpy(1.0, f.data(), mean_f.data(), mean_f.size());
  }
  kernels::active().scale(1.0 / static_cast<double>(s.v), mean_f.data(), mean_f.size());
  r.z_c = s.common_head.encode_value(mean_f).mean;
  for (std::size_t vi = 0; vi < s.v; ++vi)
    r.z_u.push_back(s.unique_heads[vi].encode_value(views_std[vi]).mean);

  const std::size_t n = r.z_c.rows();
  r.joint = Matrix(n, s.config.d_c + s.v * s.config.d_u);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (std::size_t j = 0; j < r.z_c.cols(); ++j) r.joint(i, off++) = r.z_c(i, j);
    for (std::size_t vi = 0; vi < s.v; ++vi)
      for (std::size_t j = 0; j < r.z_u[vi].cols(); ++j) r.joint(i, off++) = r.z_u[vi](i, j);
  }
  return r;
}

std::vector<int> predict(TrainState& s, const std::vector<Matrix>& views_std) {
  RepresentationBundle r = infer_representation(s, views_std);
  Tape t;
  Matrix logits = t.value(linear_node(t, s.classifier, t.constant(r.joint), false));
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(TrainState& s, const std::vector<Matrix>& views_std,
                const std::vector<int>& labels) {
  std::vector<int> pred = predict(s, views_std);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++ok;
  return labels.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(labels.size());
}

void append_history_record(const std::filesystem::path& log_path, std::size_t epoch,
                           const LossBreakdown& b, double train_acc, double test_acc,
                           double wall_sec) {
  std::ofstream f(log_path, std::ios::app);
  if (!f) throw DataError("cannot append to history log " + log_path.string());
  nlohmann::json j;
  j["epoch"] = epoch;
  j["ce"] = b.ce;
  j["l_common"] = b.l_common;
  j["l_unique"] = b.l_unique;
  j["total"] = b.total;
  j["train_acc"] = train_acc;
  j["test_acc"] = test_acc;
  j["wall_sec"] = wall_sec;
  j["terms"] = b.terms;
  f << j.dump() << '\n';
}

TrainHistory fit_continue(TrainState& s, const std::filesystem::path& log_path) {
  TrainHistory h;
  while (s.epoch < s.config.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    LossBreakdown b = train_epoch(s);
    const double tr = accuracy(s, s.x_train, s.y_train);
    const double te = accuracy(s, s.x_test, s.y_test);
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    h.epochs.push_back(b);
    h.train_acc.push_back(tr);
    h.test_acc.push_back(te);
    h.wall_sec.push_back(dt);
    if (!log_path.empty()) append_history_record(log_path, s.epoch, b, tr, te, dt);
  }
  return h;
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["beta1"] = c.hp.beta1;
  j["beta2"] = c.hp.beta2;
  j["beta3"] = c.hp.beta3;
  j["beta4"] = c.hp.beta4;
  j["d_c"] = c.d_c;
  j["d_u"] = c.d_u;
  j["hidden"] = c.hidden;
  j["mine_hidden"] = c.mine_hidden;
  j["activation"] = c.activation;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr_main"] = c.lr_main;
  j["lr_mine"] = c.lr_mine;
  j["seed"] = c.seed;
  j["mc_samples"] = c.mc_samples;
  j["logvar_min"] = c.logvar_min;
  j["logvar_max"] = c.logvar_max;
  j["mine_steps_per_main"] = c.mine_steps_per_main;
  j["train_fraction"] = c.train_fraction;
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, val] : j.items()) {
      if (key == "beta1") c.hp.beta1 = val.get<double>();
      else if (key == "beta2") c.hp.beta2 = val.get<double>();
      else if (key == "beta3") c.hp.beta3 = val.get<double>();
      else if (key == "beta4") c.hp.beta4 = val.get<double>();
      else if (key == "d_c") c.d_c = val.get<std::size_t>();
      else if (key == "d_u") c.d_u = val.get<std::size_t>();
      else if (key == "hidden") c.hidden = val.get<std::vector<std::size_t>>();
      else if (key == "mine_hidden") c.mine_hidden = val.get<std::vector<std::size_t>>();
      else if (key == "activation") c.activation = val.get<std::string>();
      else if (key == "epochs") c.epochs = val.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = val.get<std::size_t>();
      else if (key == "lr_main") c.lr_main = val.get<double>();
      else if (key == "lr_mine") c.lr_mine = val.get<double>();
      else if (key == "seed") c.seed = val.get<std::uint64_t>();
      else if (key == "mc_samples") c.mc_samples = val.get<std::size_t>();
      else if (key == "logvar_min") c.logvar_min = val.get<double>();
      else if (key == "logvar_max") c.logvar_max = val.get<double>();
      else if (key == "mine_steps_per_main") c.mine_steps_per_main = val.get<std::size_t>();
      else if (key == "train_fraction") c.train_fraction = val.get<double>();
      else throw ConfigError("unknown config key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value type: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'I', 'M', 'L', 'C', 'K', 'P', '1'};

void write_u64(std::ostream& f, std::uint64_t x) {
  f.write(reinterpret_cast<const char*>(&x), sizeof(x));
}

std::uint64_t read_u64(std::istream& f) {
  std::uint64_t x = 0;
  f.read(reinterpret_cast<char*>(&x), sizeof(x));
  return x;
}

void write_mat(std::ostream& f, const Matrix& m) {
  write_u64(f, m.rows());
  write_u64(f, m.cols());
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix read_mat(std::istream& f) {
  const std::uint64_t r = read_u64(f), c = read_u64(f);
  Matrix m(r, c);
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(m.size() * sizeof(double)));
  return m;
}

}  // namespace

void save_checkpoint(TrainState& s, const std::filesystem::path& path) {
  nlohmann::json h;
  h["config"] = nlohmann::json::parse(train_config_to_json(s.config));
  h["v"] = s.v;
  h["m"] = s.m;
  h["view_dims"] = s.view_dims;
  h["train_idx"] = s.train_idx;
  h["test_idx"] = s.test_idx;
  h["y_train"] = s.y_train;
  h["y_test"] = s.y_test;
  h["epoch"] = s.epoch;
  h["t_main"] = s.opt_main.t();
  h["t_mine"] = s.opt_mine.t();
  std::vector<double> mas;
  for (const auto& n : s.mine_zu_zc) mas.push_back(n.ma);
  for (const auto& n : s.mine_zu_zu) mas.push_back(n.ma);
  h["mine_ma"] = mas;
  std::vector<std::string> names;
  for (Param* p : s.all_params()) names.push_back(p->name);
  h["params"] = names;
  const std::string header = h.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u64(f, header.size());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (std::size_t vi = 0; vi < s.v; ++vi) write_mat(f, s.standardizer.mean[vi]);
  for (std::size_t vi = 0; vi < s.v; ++vi) write_mat(f, s.standardizer.std[vi]);
  for (std::size_t vi = 0; vi < s.v; ++vi) write_mat(f, s.x_train[vi]);
  for (std::size_t vi = 0; vi < s.v; ++vi) write_mat(f, s.x_test[vi]);
  for (Param* p : s.all_params()) {
    write_mat(f, p->value);
    write_mat(f, p->m1);
    write_mat(f, p->m2);
  }
  if (!f) throw DataError("short write on checkpoint " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("not a checkpoint file (bad magic): " + path.string());
  const std::uint64_t hlen = read_u64(f);
  std::string header(hlen, '\0');
  f.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw DataError("truncated checkpoint header in " + path.string());

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }

  TrainState s;
  s.config = train_config_from_json(h.at("config").dump());
  s.v = h.at("v").get<std::size_t>();
  s.m = h.at("m").get<std::size_t>();
  s.view_dims = h.at("view_dims").get<std::vector<std::size_t>>();
  s.train_idx = h.at("train_idx").get<std::vector<std::size_t>>();
  s.test_idx = h.at("test_idx").get<std::vector<std::size_t>>();
  s.y_train = h.at("y_train").get<std::vector<int>>();
  s.y_test = h.at("y_test").get<std::vector<int>>();
  s.epoch = h.at("epoch").get<std::size_t>();

  s.standardizer.mean.resize(s.v);
  s.standardizer.std.resize(s.v);
  for (std::size_t vi = 0; vi < s.v; ++vi) s.standardizer.mean[vi] = read_mat(f);
  for (std::size_t vi = 0; vi < s.v; ++vi) s.standardizer.std[vi] = read_mat(f);
  s.x_train.resize(s.v);
  s.x_test.resize(s.v);
  for (std::size_t vi = 0; vi < s.v; ++vi) s.x_train[vi] = read_mat(f);
  for (std::size_t vi = 0; vi < s.v; ++vi) s.x_test[vi] = read_mat(f);

  build_networks(s);
  std::vector<Param*> params = s.all_params();
  const auto names = h.at("params").get<std::vector<std::string>>();
  if (names.size() != params.size())
    throw DataError("checkpoint parameter count mismatch in " + path.string());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != names[i])
      throw DataError("checkpoint parameter order mismatch at " + names[i]);
    Matrix val = read_mat(f), m1 = read_mat(f), m2 = read_mat(f);
    if (!val.same_shape(params[i]->value))
      throw DataError("checkpoint shape mismatch at " + names[i]);
    params[i]->value = std::move(val);
    params[i]->m1 = std::move(m1);
    params[i]->m2 = std::move(m2);
  }
  if (!f) throw DataError("truncated checkpoint payload in " + path.string());

  s.opt_main.set_t(h.at("t_main").get<std::int64_t>());
  s.opt_mine.set_t(h.at("t_mine").get<std::int64_t>());
  const auto mas = h.at("mine_ma").get<std::vector<double>>();
  std::size_t k = 0;
  for (auto& n : s.mine_zu_zc) n.ma = mas.at(k++);
  for (auto& n : s.mine_zu_zu) n.ma = mas.at(k++);
  return s;
}

std::pair<TrainState, TrainHistory> fit(const TrainConfig& config, const MultiViewDataset& ds,
                                        const SplitIndices& splits,
                                        const std::filesystem::path& log_path) {
  TrainState s = init_state(config, ds, splits);
  TrainHistory h = fit_continue(s, log_path);
  return {std::move(s), std::move(h)};
}

}  // namespace ciml
