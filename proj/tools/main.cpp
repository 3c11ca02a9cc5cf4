#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ciml/dataset.hpp"
#include "ciml/errors.hpp"
#include "ciml/evaluation.hpp"
#include "ciml/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Relative output paths are resolved against CIML_OUTPUT_ROOT when it is set.
fs::path resolve_out(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("CIML_OUTPUT_ROOT")) return fs::path(root) / p;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ciml::ConfigError("cannot read file " + p.string());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw ciml::DataError("cannot write file " + p.string());
  f << text;
}

// Every run echoes the fully resolved config so it can be re-created from its
// artifacts alone.
void echo_config(const ciml::TrainConfig& c, const fs::path& dir) {
  spit(dir / "config.json", ciml::train_config_to_json(c) + "\n");
}

json metrics_json(const ciml::MetricsReport& r) {
  json j;
  j["trial_seeds"] = r.trial_seeds;
  json trials = json::array();
  for (const auto& m : r.per_trial)
    trials.push_back({{"acc", m.acc},
                      {"precision_macro", m.precision_macro},
                      {"f1_macro", m.f1_macro},
                      {"precision_weighted", m.precision_weighted},
                      {"f1_weighted", m.f1_weighted}});
  j["per_trial"] = trials;
  auto put = [&j](const char* k, ciml::Summary s) {
    j[k] = {{"mean", s.mean}, {"std", s.stddev}};
  };
  put("acc", r.acc());
  put("precision_macro", r.precision_macro());
  put("f1_macro", r.f1_macro());
  put("precision_weighted", r.precision_weighted());
  put("f1_weighted", r.f1_weighted());
  return j;
}

void print_metrics(const std::string& tag, const ciml::MetricsReport& r) {
  auto a = r.acc(), p = r.precision_macro(), f = r.f1_macro();
  std::printf("%-10s acc %6.2f ± %5.2f   precision %6.2f ± %5.2f   f1 %6.2f ± %5.2f\n",
              tag.c_str(), a.mean, a.stddev, p.mean, p.stddev, f.mean, f.stddev);
}

// Shared config/flag plumbing: flags override config-file values.
struct ConfigArgs {
  std::string config_path;
  CLI::App* sub = nullptr;

  double beta1 = 0, beta2 = 0, beta3 = 0, beta4 = 0;
  std::size_t epochs = 0, batch_size = 0, d_c = 0, d_u = 0, mc_samples = 0;
  double lr_main = 0, lr_mine = 0, train_fraction = 0;
  std::uint64_t seed = 0;
  std::string activation;

  void attach(CLI::App* s) {
    sub = s;
    ciml::TrainConfig d;  // defaults for --help
    s->add_option("--config", config_path, "JSON config file mirroring TrainConfig");
    s->add_option("--beta1", beta1, "I(Zc;C) compression weight")->default_val(d.hp.beta1);
    s->add_option("--beta2", beta2, "I(Zu;X) compression weight")->default_val(d.hp.beta2);
    s->add_option("--beta3", beta3, "common-loss weight")->default_val(d.hp.beta3);
    s->add_option("--beta4", beta4, "unique-loss weight")->default_val(d.hp.beta4);
    s->add_option("--epochs", epochs, "training epochs")->default_val(d.epochs);
    s->add_option("--batch-size", batch_size, "minibatch size")->default_val(d.batch_size);
    s->add_option("--d-c", d_c, "common representation dim")->default_val(d.d_c);
    s->add_option("--d-u", d_u, "unique representation dim")->default_val(d.d_u);
    s->add_option("--mc-samples", mc_samples, "posterior samples per step")
        ->default_val(d.mc_samples);
    s->add_option("--lr-main", lr_main, "main Adam learning rate")->default_val(d.lr_main);
    s->add_option("--lr-mine", lr_mine, "MINE Adam learning rate")->default_val(d.lr_mine);
    s->add_option("--train-fraction", train_fraction, "train split fraction")
        ->default_val(d.train_fraction);
    s->add_option("--seed", seed, "root rng seed")->default_val(d.seed);
    s->add_option("--activation", activation, "tanh|relu|softplus|identity")
        ->default_val(d.activation);
  }

  ciml::TrainConfig resolve() const {
    ciml::TrainConfig c;
    if (!config_path.empty()) c = ciml::train_config_from_json(slurp(config_path));
    auto set = [this](const char* flag) { return sub->count(flag) > 0; };
    if (set("--beta1")) c.hp.beta1 = beta1;
    if (set("--beta2")) c.hp.beta2 = beta2;
    if (set("--beta3")) c.hp.beta3 = beta3;
    if (set("--beta4")) c.hp.beta4 = beta4;
    if (set("--epochs")) c.epochs = epochs;
    if (set("--batch-size")) c.batch_size = batch_size;
    if (set("--d-c")) c.d_c = d_c;
    if (set("--d-u")) c.d_u = d_u;
    if (set("--mc-samples")) c.mc_samples = mc_samples;
    if (set("--lr-main")) c.lr_main = lr_main;
    if (set("--lr-mine")) c.lr_mine = lr_mine;
    if (set("--train-fraction")) c.train_fraction = train_fraction;
    if (set("--seed")) c.seed = seed;
    if (set("--activation")) c.activation = activation;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ciml: information-theoretic multi-view representation learning"};
  app.require_subcommand(1);
  std::function<void()> action;

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-view dataset");
  {
    auto spec = std::make_shared<ciml::SyntheticSpec>();
    auto out = std::make_shared<std::string>("synth_out");
    auto mix = std::make_shared<std::vector<double>>();
    synth->add_option("--out", *out, "output directory")->capture_default_str();
    synth->add_option("--n", spec->n, "samples")->capture_default_str();
    synth->add_option("--views", spec->v, "view count")->capture_default_str();
    synth->add_option("--classes", spec->m, "class count")->capture_default_str();
    synth->add_option("--dim-common", spec->dim_common, "common latent dim")
        ->capture_default_str();
    synth->add_option("--dim-unique", spec->dim_unique, "unique latent dim per view")
        ->capture_default_str();
    synth->add_option("--noise-std", spec->noise_std, "observation noise std")
        ->capture_default_str();
    synth->add_option("--label-mix", *mix,
                      "v+1 weights (common, unique_1..unique_v) for label logits")
        ->delimiter(',');
    synth->add_option("--seed", spec->seed, "generator seed")->capture_default_str();
    synth->callback([&action, spec, out, mix] {
      action = [spec, out, mix] {
        spec->label_mix = *mix;
        auto [ds, oracle] = ciml::generate_synthetic(*spec);
        const fs::path dir = resolve_out(*out);
        fs::create_directories(dir);
        ciml::save_dataset(ds, dir);
        json j;
        j["bayes_acc_common"] = oracle.bayes_acc_common;
        j["bayes_acc_unique"] = oracle.bayes_acc_unique;
        j["bayes_acc_joint"] = oracle.bayes_acc_joint;
        spit(dir / "oracle.json", j.dump(2) + "\n");
        std::printf("wrote %s (n=%zu v=%zu m=%zu)\n", dir.string().c_str(), ds.n(), ds.v(),
                    ds.m);
        std::printf("bayes acc: common %.4f  unique %.4f  joint %.4f\n",
                    oracle.bayes_acc_common, oracle.bayes_acc_unique, oracle.bayes_acc_joint);
      };
    });
  }

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a CIML model");
  {
    auto ca = std::make_shared<ConfigArgs>();
    ca->attach(train);
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("train_out");
    auto resume = std::make_shared<std::string>();
    train->add_option("--data", *data, "dataset manifest JSON")->required();
    train->add_option("--out", *out, "output directory")->capture_default_str();
    train->add_option("--resume", *resume, "checkpoint to continue from");
    train->callback([&action, ca, data, out, resume] {
      action = [ca, data, out, resume] {
        const fs::path dir = resolve_out(*out);
        fs::create_directories(dir);
        ciml::TrainState state = [&] {
          if (!resume->empty()) {
            ciml::TrainState st = ciml::load_checkpoint(*resume);
            // only the epoch budget may change on resume; everything else is
            // baked into the checkpoint
            if (ca->sub->count("--epochs")) st.config.epochs = ca->epochs;
            return st;
          }
          ciml::TrainConfig c = ca->resolve();
          ciml::MultiViewDataset ds = ciml::load_dataset(*data);
          return ciml::init_state(c, ds, ciml::make_splits(ds, c.train_fraction, c.seed));
        }();
        echo_config(state.config, dir);
        ciml::fit_continue(state, dir / "history.jsonl");
        ciml::save_checkpoint(state, dir / "checkpoint.bin");
        const double acc = ciml::accuracy(state, state.x_test, state.y_test);
        std::printf("trained %zu epochs; test acc %.4f; checkpoint at %s\n", state.epoch, acc,
                    (dir / "checkpoint.bin").string().c_str());
      };
    });
  }

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or run fresh trials");
  {
    auto ca = std::make_shared<ConfigArgs>();
    ca->attach(eval);
    auto ckpt = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("eval_out");
    auto trials = std::make_shared<std::size_t>(1);
    eval->add_option("--checkpoint", *ckpt, "trained checkpoint (uses its stored test split)");
    eval->add_option("--data", *data, "dataset manifest (for --trials mode)");
    eval->add_option("--trials", *trials, "fresh train/eval trials")->capture_default_str();
    eval->add_option("--out", *out, "output directory")->capture_default_str();
    eval->callback([&action, ca, ckpt, data, out, trials] {
      action = [ca, ckpt, data, out, trials] {
        const fs::path dir = resolve_out(*out);
        fs::create_directories(dir);
        ciml::MetricsReport report;
        if (!ckpt->empty()) {
          ciml::TrainState state = ciml::load_checkpoint(*ckpt);
          echo_config(state.config, dir);
          std::vector<int> pred = ciml::predict(state, state.x_test);
          report.trial_seeds.push_back(state.config.seed);
          report.per_trial.push_back(ciml::compute_metrics(state.y_test, pred, state.m));
        } else if (!data->empty()) {
          ciml::TrainConfig c = ca->resolve();
          echo_config(c, dir);
          report = ciml::run_trials(c, ciml::load_dataset(*data), *trials);
        } else {
          throw ciml::ConfigError("eval: provide --checkpoint or --data");
        }
        spit(dir / "metrics.json", metrics_json(report).dump(2) + "\n");
        print_metrics("eval", report);
      };
    });
  }

  // ---- ablate ----
  auto* ablate = app.add_subcommand("ablate", "full model vs CIML-v1 / CIML-v2");
  {
    auto ca = std::make_shared<ConfigArgs>();
    ca->attach(ablate);
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("ablate_out");
    auto trials = std::make_shared<std::size_t>(5);
    ablate->add_option("--data", *data, "dataset manifest JSON")->required();
    ablate->add_option("--trials", *trials, "trials per variant")->capture_default_str();
    ablate->add_option("--out", *out, "output directory")->capture_default_str();
    ablate->callback([&action, ca, data, out, trials] {
      action = [ca, data, out, trials] {
        ciml::TrainConfig c = ca->resolve();
        const fs::path dir = resolve_out(*out);
        fs::create_directories(dir);
        echo_config(c, dir);
        auto results = ciml::run_ablation(c, ciml::load_dataset(*data), *trials);
        json j = json::array();
        for (const auto& r : results) {
          json row = metrics_json(r.report);
          row["variant"] = r.variant;
          j.push_back(row);
          print_metrics(r.variant, r.report);
        }
        spit(dir / "ablation.json", j.dump(2) + "\n");
      };
    });
  }

  // ---- sweep ----
  auto* sw = app.add_subcommand("sweep", "grid sweep over beta1..4 / d_c / d_u");
  {
    auto ca = std::make_shared<ConfigArgs>();
    ca->attach(sw);
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("sweep_out");
    auto trials = std::make_shared<std::size_t>(3);
    auto params = std::make_shared<std::vector<std::string>>();
    auto values = std::make_shared<std::vector<std::string>>();
    sw->add_option("--data", *data, "dataset manifest JSON")->required();
    sw->add_option("--param", *params, "parameter to sweep (repeatable)")->required();
    sw->add_option("--values", *values,
                   "comma-separated values, one list per --param (repeatable)")
        ->required();
    sw->add_option("--trials", *trials, "trials per cell")->capture_default_str();
    sw->add_option("--out", *out, "output directory")->capture_default_str();
    sw->callback([&action, ca, data, out, trials, params, values] {
      action = [ca, data, out, trials, params, values] {
        if (params->size() != values->size())
          throw ciml::ConfigError("sweep: need one --values list per --param");
        std::vector<std::vector<double>> axes;
        for (const auto& list : *values) {
          std::vector<double> axis;
          std::stringstream ss(list);
          std::string tok;
          while (std::getline(ss, tok, ',')) {
            try {
              axis.push_back(std::stod(tok));
            } catch (const std::exception&) {
              throw ciml::ConfigError("sweep: bad value '" + tok + "'");
            }
          }
          if (axis.empty()) throw ciml::ConfigError("sweep: empty value list");
          axes.push_back(std::move(axis));
        }
        // cartesian product over the parameter axes
        std::vector<std::map<std::string, double>> grid(1);
        for (std::size_t p = 0; p < params->size(); ++p) {
          std::vector<std::map<std::string, double>> next;
          for (const auto& cell : grid)
            for (double v : axes[p]) {
              auto c = cell;
              c[(*params)[p]] = v;
              next.push_back(std::move(c));
            }
          grid = std::move(next);
        }
        ciml::TrainConfig c = ca->resolve();
        const fs::path dir = resolve_out(*out);
        fs::create_directories(dir);
        echo_config(c, dir);
        auto cells = ciml::sweep(c, ciml::load_dataset(*data), grid, *trials);
        json j = json::array();
        for (const auto& cell : cells) {
          json row = metrics_json(cell.report);
          row["overrides"] = cell.overrides;
          j.push_back(row);
          std::string tag;
          for (const auto& [k, v] : cell.overrides)
            tag += (tag.empty() ? "" : ",") + k + "=" + std::to_string(v);
          print_metrics(tag, cell.report);
        }
        spit(dir / "sweep.json", j.dump(2) + "\n");
      };
    });
  }

  // ---- audit ----
  auto* audit = app.add_subcommand("audit", "independence audit + sufficiency check");
  {
    auto ckpt = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("audit_out");
    audit->add_option("--checkpoint", *ckpt, "trained checkpoint")->required();
    audit->add_option("--out", *out, "output directory")->capture_default_str();
    audit->callback([&action, ckpt, out] {
      action = [ckpt, out] {
        ciml::TrainState state = ciml::load_checkpoint(*ckpt);
        const fs::path dir = resolve_out(*out);
        fs::create_directories(dir);
        echo_config(state.config, dir);
        auto entries = ciml::independence_audit(state);
        ciml::SufficiencyReport suff = ciml::sufficiency_check(state);
        json j;
        j["independence"] = json::array();
        for (const auto& e : entries) {
          j["independence"].push_back({{"pair", e.label}, {"mi_nats", e.mi}});
          std::printf("%-16s %8.4f nats\n", e.label.c_str(), e.mi);
        }
        j["sufficiency"] = {{"ce_z", suff.ce_z}, {"ce_x", suff.ce_x}, {"gap", suff.gap}};
        spit(dir / "audit.json", j.dump(2) + "\n");
        std::printf("sufficiency: CE(probe|Z) %.4f  CE(probe|X) %.4f  gap %+.4f nats\n",
                    suff.ce_z, suff.ce_x, suff.gap);
      };
    });
  }

  // ---- export-embeddings ----
  auto* exp = app.add_subcommand("export-embeddings", "write the joint representation Z");
  {
    auto ckpt = std::make_shared<std::string>();
    auto data = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("embeddings.txt");
    exp->add_option("--checkpoint", *ckpt, "trained checkpoint")->required();
    exp->add_option("--data", *data, "dataset manifest JSON")->required();
    exp->add_option("--out", *out, "output matrix file")->capture_default_str();
    exp->callback([&action, ckpt, data, out] {
      action = [ckpt, data, out] {
        ciml::TrainState state = ciml::load_checkpoint(*ckpt);
        ciml::MultiViewDataset ds = ciml::load_dataset(*data);
        const fs::path path = resolve_out(*out);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        ciml::export_embeddings(state, ds, path);
        std::printf("wrote %s (%zu x %zu) and %s\n", path.string().c_str(), ds.n(),
                    state.config.d_c + state.v * state.config.d_u,
                    (path.string() + ".labels").c_str());
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int r = app.exit(e);
    return r == 0 ? 0 : kExitConfig;
  }

  try {
    action();
  } catch (const ciml::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ciml::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const ciml::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  }
  return 0;
}
