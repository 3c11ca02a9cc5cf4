#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ciml/errors.hpp"
#include "ciml/trainer.hpp"

using namespace ciml;
namespace fs = std::filesystem;

namespace {

MultiViewDataset small_dataset(std::uint64_t seed = 2, std::size_t n = 80) {
  SyntheticSpec spec;
  spec.n = n;
  spec.v = 2;
  spec.m = 2;
  spec.dim_common = 3;
  spec.dim_unique = 3;
  spec.noise_std = 0.3;
  spec.seed = seed;
  return generate_synthetic(spec).first;
}

TrainConfig small_config() {
  TrainConfig c;
  c.d_c = 3;
  c.d_u = 3;
  c.hidden = {16};
  c.mine_hidden = {16};
  c.epochs = 3;
  c.batch_size = 32;
  c.seed = 5;
  return c;
}

bool params_equal(std::vector<Param*> a, std::vector<Param*> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k]->value.rows() != b[k]->value.rows() ||
        a[k]->value.cols() != b[k]->value.cols())
      return false;
    for (std::size_t i = 0; i < a[k]->value.size(); ++i)
      if (a[k]->value.data()[i] != b[k]->value.data()[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c = small_config();
  REQUIRE_NOTHROW(c.validate());
  c.batch_size = 1;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.train_fraction = 1.0;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.activation = "swish";
  REQUIRE_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config JSON round trip and unknown-key rejection") {
  TrainConfig c = small_config();
  c.hp.beta1 = 3e-5;
  c.hp.beta4 = 0.25;
  c.hidden = {32, 8};
  c.activation = "relu";
  c.lr_main = 2e-3;

  TrainConfig back = train_config_from_json(train_config_to_json(c));
  REQUIRE(back.hp.beta1 == c.hp.beta1);
  REQUIRE(back.hp.beta2 == c.hp.beta2);
  REQUIRE(back.hp.beta3 == c.hp.beta3);
  REQUIRE(back.hp.beta4 == c.hp.beta4);
  REQUIRE(back.d_c == c.d_c);
  REQUIRE(back.d_u == c.d_u);
  REQUIRE(back.hidden == c.hidden);
  REQUIRE(back.mine_hidden == c.mine_hidden);
  REQUIRE(back.activation == c.activation);
  REQUIRE(back.epochs == c.epochs);
  REQUIRE(back.batch_size == c.batch_size);
  REQUIRE(back.lr_main == c.lr_main);
  REQUIRE(back.lr_mine == c.lr_mine);
  REQUIRE(back.seed == c.seed);
  REQUIRE(back.train_fraction == c.train_fraction);

  // absent keys keep defaults
  TrainConfig sparse = train_config_from_json(R"({"epochs": 7})");
  REQUIRE(sparse.epochs == 7);
  REQUIRE(sparse.d_c == 4);

  REQUIRE_THROWS_AS(train_config_from_json(R"({"epochz": 7})"), ConfigError);
  REQUIRE_THROWS_AS(train_config_from_json("not json"), ConfigError);
}

TEST_CASE("init_state wires up shapes and is deterministic per seed") {
  MultiViewDataset ds = small_dataset();
  TrainConfig c = small_config();
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);

  TrainState s1 = init_state(c, ds, splits);
  TrainState s2 = init_state(c, ds, splits);

  REQUIRE(s1.v == 2);
  REQUIRE(s1.m == 2);
  REQUIRE(s1.view_encoders.size() == 2);
  REQUIRE(s1.unique_heads.size() == 2);
  REQUIRE(s1.decoders_u.size() == 2);
  REQUIRE(s1.mine_zu_zc.size() == 2);
  REQUIRE(s1.mine_zu_zu.size() == 1);  // one unordered pair for v=2
  REQUIRE(s1.c_var.value.rows() == splits.train.size());
  REQUIRE(s1.c_var.value.cols() == c.d_c);
  REQUIRE(s1.classifier.W.value.rows() == c.d_c + 2 * c.d_u);
  REQUIRE(s1.classifier.W.value.cols() == 2);

  REQUIRE(params_equal(s1.all_params(), s2.all_params()));

  // C starts at the per-sample mean of the initial view encodings
  Matrix mean_enc(splits.train.size(), c.d_c);
  mean_enc.fill(0.0);
  std::vector<Matrix> x_train = s1.standardizer.apply_rows(ds, splits.train);
  for (std::size_t view = 0; view < 2; ++view) {
    Matrix e = s1.view_encoders[view].forward_value(x_train[view]);
    for (std::size_t i = 0; i < e.size(); ++i) mean_enc.data()[i] += e.data()[i] / 2.0;
  }
  for (std::size_t i = 0; i < mean_enc.size(); ++i)
    REQUIRE(s1.c_var.value.data()[i] == doctest::Approx(mean_enc.data()[i]));

  TrainConfig c3 = c;
  c3.seed = 6;
  TrainState s3 = init_state(c3, ds, splits);
  REQUIRE(!params_equal(s1.all_params(), s3.all_params()));
}

TEST_CASE("pair_index enumerates unordered pairs") {
  MultiViewDataset ds = small_dataset();
  TrainConfig c = small_config();
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);
  TrainState s = init_state(c, ds, splits);
  REQUIRE(s.pair_index(0, 1) == 0);
}

TEST_CASE("main/all parameter partition separates MINE nets") {
  MultiViewDataset ds = small_dataset();
  TrainConfig c = small_config();
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);
  TrainState s = init_state(c, ds, splits);

  std::vector<Param*> main = s.main_params();
  std::vector<Param*> all = s.all_params();
  REQUIRE(all.size() > main.size());
  std::size_t mine_count = 0;
  for (auto& net : s.mine_zu_zc) {
    std::vector<Param*> ps;
    net.collect(ps);
    mine_count += ps.size();
  }
  for (auto& net : s.mine_zu_zu) {
    std::vector<Param*> ps;
    net.collect(ps);
    mine_count += ps.size();
  }
  REQUIRE(all.size() == main.size() + mine_count);
}

TEST_CASE("forward_loss with backward touches main params but not MINE params") {
  MultiViewDataset ds = small_dataset();
  TrainConfig c = small_config();
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);
  TrainState s = init_state(c, ds, splits);

  std::vector<std::size_t> batch(16);
  std::iota(batch.begin(), batch.end(), 0);
  Rng noise_rng(9);
  StepNoise noise = draw_step_noise(s, batch.size(), noise_rng);

  for (Param* p : s.all_params()) p->zero_grad();
  LossBreakdown b = forward_loss(s, batch, noise, /*backward=*/true);
  REQUIRE_NOTHROW(b.check());
  REQUIRE(b.terms.count("H_C") == 1);
  REQUIRE(b.terms.count("alignment") == 1);
  REQUIRE(b.terms.count("I_Zc_Y") == 1);
  REQUIRE(b.terms.count("I_Zc_C") == 1);
  REQUIRE(b.terms.count("I_Zu_Y.0") == 1);
  REQUIRE(b.terms.count("I_Zu_Zu.0.1") == 1);

  std::size_t main_nonzero = 0;
  for (Param* p : s.main_params())
    for (std::size_t i = 0; i < p->grad.size(); ++i) main_nonzero += (p->grad.data()[i] != 0.0);
  REQUIRE(main_nonzero > 0);

  for (auto* nets : {&s.mine_zu_zc, &s.mine_zu_zu})
    for (auto& net : *nets) {
      std::vector<Param*> ps;
      net.collect(ps);
      for (Param* p : ps)
        for (std::size_t i = 0; i < p->grad.size(); ++i) REQUIRE(p->grad.data()[i] == 0.0);
    }
}

TEST_CASE("forward_loss gradients match central finite differences") {
  MultiViewDataset ds = small_dataset(3, 60);
  TrainConfig c = small_config();
  c.hidden = {8};
  c.mine_hidden = {8};
  c.d_c = 2;
  c.d_u = 2;
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);
  TrainState s = init_state(c, ds, splits);

  std::vector<std::size_t> batch(12);
  std::iota(batch.begin(), batch.end(), 0);
  Rng noise_rng(3);
  StepNoise noise = draw_step_noise(s, batch.size(), noise_rng);

  for (Param* p : s.all_params()) p->zero_grad();
  forward_loss(s, batch, noise, true);

  // spot-check a handful of coordinates in every main parameter
  const double h = 1e-6;
  std::size_t checked = 0;
  for (Param* p : s.main_params()) {
    const std::size_t stride = std::max<std::size_t>(1, p->value.size() / 3);
    for (std::size_t i = 0; i < p->value.size(); i += stride) {
      const double save = p->value.data()[i];
      p->value.data()[i] = save + h;
      const double up = forward_loss(s, batch, noise, false).total;
      p->value.data()[i] = save - h;
      const double down = forward_loss(s, batch, noise, false).total;
      p->value.data()[i] = save;
      const double fd = (up - down) / (2 * h);
      const double an = p->grad.data()[i];
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
      REQUIRE(std::fabs(fd - an) / denom < 1e-4);
      ++checked;
    }
  }
  REQUIRE(checked > 20);
}

TEST_CASE("fit is deterministic and logs one record per epoch") {
  MultiViewDataset ds = small_dataset();
  TrainConfig c = small_config();
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);

  auto [s1, h1] = fit(c, ds, splits);
  auto [s2, h2] = fit(c, ds, splits);
  REQUIRE(h1.epochs.size() == c.epochs);
  REQUIRE(h1.train_acc.size() == c.epochs);
  for (std::size_t e = 0; e < c.epochs; ++e) {
    REQUIRE(h1.epochs[e].total == h2.epochs[e].total);
    REQUIRE(h1.test_acc[e] == h2.test_acc[e]);
  }
  REQUIRE(params_equal(s1.all_params(), s2.all_params()));
  REQUIRE(s1.epoch == c.epochs);
}

TEST_CASE("with beta3 = beta4 = 0 training reduces cross-entropy") {
  MultiViewDataset ds = small_dataset(4, 120);
  TrainConfig c = small_config();
  c.hp.beta3 = 0.0;
  c.hp.beta4 = 0.0;
  c.epochs = 20;
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);
  auto [s, hist] = fit(c, ds, splits);
  (void)s;
  REQUIRE(hist.epochs.back().ce < hist.epochs.front().ce);
  REQUIRE(hist.train_acc.back() > 0.6);
}

TEST_CASE("checkpoint round trip restores everything, resuming is exact") {
  MultiViewDataset ds = small_dataset();
  TrainConfig c = small_config();
  c.epochs = 4;
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);

  // straight 4-epoch run
  auto [s_full, h_full] = fit(c, ds, splits);

  // 2 epochs, checkpoint, reload, 2 more
  TrainConfig c2 = c;
  c2.epochs = 2;
  auto [s_half, h_half] = fit(c2, ds, splits);
  fs::path ckpt = fs::temp_directory_path() / "ciml_test_trainer.ckpt";
  save_checkpoint(s_half, ckpt);
  TrainState s_resumed = load_checkpoint(ckpt);
  REQUIRE(s_resumed.epoch == 2);
  REQUIRE(s_resumed.config.seed == c.seed);
  REQUIRE(params_equal(s_half.all_params(), s_resumed.all_params()));
  REQUIRE(s_resumed.train_idx == s_half.train_idx);
  REQUIRE(s_resumed.y_test == s_half.y_test);

  s_resumed.config.epochs = 4;
  fit_continue(s_resumed);
  REQUIRE(params_equal(s_resumed.all_params(), s_full.all_params()));

  // corrupted magic is rejected
  {
    std::ofstream bad(ckpt, std::ios::binary);
    bad << "NOTACKPT";
  }
  REQUIRE_THROWS_AS(load_checkpoint(ckpt), DataError);
  fs::remove(ckpt);
}

TEST_CASE("inference shapes and accuracy bounds") {
  MultiViewDataset ds = small_dataset();
  TrainConfig c = small_config();
  SplitIndices splits = make_splits(ds, c.train_fraction, c.seed);
  auto [s, hist] = fit(c, ds, splits);
  (void)hist;

  RepresentationBundle rep = infer_representation(s, s.x_test);
  REQUIRE(rep.z_c.rows() == s.x_test[0].rows());
  REQUIRE(rep.z_c.cols() == c.d_c);
  REQUIRE(rep.z_u.size() == 2);
  REQUIRE(rep.joint.cols() == c.d_c + 2 * c.d_u);

  std::vector<int> preds = predict(s, s.x_test);
  REQUIRE(preds.size() == s.y_test.size());
  for (int p : preds) {
    REQUIRE(p >= 0);
    REQUIRE(p < (int)s.m);
  }
  const double acc = accuracy(s, s.x_test, s.y_test);
  REQUIRE(acc >= 0.0);
  REQUIRE(acc <= 1.0);
}
