#include "ciml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ciml/errors.hpp"

namespace ciml {
namespace {

constexpr char kMatrixMagic[8] = {'C', 'I', 'M', 'L', 'M', 'A', 'T', '1'};

// View dimensionality used by the synthetic generator: a redundant linear
// image of the stacked [common | unique] latent.
std::size_t synth_view_dim(const SyntheticSpec& s) {
  return 2 * (s.dim_common + s.dim_unique);
}

// Gain applied to label logits before label_mix weighting; large enough that
// a full-weight source makes the label nearly deterministic.
constexpr double kLogitGain = 20.0;

}  // namespace

std::vector<std::size_t> MultiViewDataset::view_dims() const {
  std::vector<std::size_t> d;
  d.reserve(views.size());
  for (const auto& x : views) d.push_back(x.cols());
  return d;
}

void MultiViewDataset::validate() const {
  if (m == 0) throw DataError("dataset: class count m must be positive");
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].rows() != labels.size())
      throw DataError("dataset: view " + std::to_string(i) + " has " +
                      std::to_string(views[i].rows()) + " samples, labels have " +
                      std::to_string(labels.size()));
    if (!views[i].all_finite())
      throw DataError("dataset: view " + std::to_string(i) + " contains non-finite values");
  }
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] < 0 || static_cast<std::size_t>(labels[k]) >= m)
      throw DataError("dataset: label " + std::to_string(labels[k]) + " at sample " +
                      std::to_string(k) + " outside [0, " + std::to_string(m) + ")");
}

void SyntheticSpec::validate() const {
  if (dim_common < 1) throw ConfigError("synthetic spec: dim_common must be >= 1");
  if (dim_unique < 1) throw ConfigError("synthetic spec: dim_unique must be >= 1");
  if (v < 1) throw ConfigError("synthetic spec: v must be >= 1");
  if (m < 2) throw ConfigError("synthetic spec: m must be >= 2");
  if (n < m) throw ConfigError("synthetic spec: n must be >= m");
  if (noise_std < 0) throw ConfigError("synthetic spec: noise_std must be >= 0");
  if (!label_mix.empty() && label_mix.size() != v + 1)
    throw ConfigError("synthetic spec: label_mix must have v+1 entries");
  for (double w : label_mix)
    if (w < 0.0 || w > 1.0) throw ConfigError("synthetic spec: label_mix weights must be in [0,1]");
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("missing file: " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (f.gcount() == 8 && std::memcmp(magic, kMatrixMagic, 8) == 0) {
    std::int64_t rows = 0, cols = 0;
    f.read(reinterpret_cast<char*>(&rows), 8);
    f.read(reinterpret_cast<char*>(&cols), 8);
    if (!f || rows < 0 || cols < 0)
      throw DataError("corrupt binary matrix header: " + path.string());
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
    if (static_cast<std::size_t>(f.gcount()) != m.size() * 8)
      throw DataError("truncated binary matrix: " + path.string());
    return m;
  }
  // text: one row per sample, whitespace or comma delimited
  f.clear();
  f.seekg(0);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (!ls.eof())
      throw DataError("unparseable row " + std::to_string(rows.size()) + " in " + path.string());
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) return Matrix();
  const std::size_t cols = rows[0].size();
  Matrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols)
      throw DataError("ragged row " + std::to_string(i) + " in " + path.string());
    std::copy(rows[i].begin(), rows[i].end(), m.row(i));
  }
  return m;
}

void save_matrix_text(const Matrix& m, const std::filesystem::path& path, int precision) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f.precision(precision);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) f << ' ';
      f << m(i, j);
    }
    f << '\n';
  }
}

void save_matrix_binary(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(kMatrixMagic, 8);
  const std::int64_t rows = static_cast<std::int64_t>(m.rows());
  const std::int64_t cols = static_cast<std::int64_t>(m.cols());
  f.write(reinterpret_cast<const char*>(&rows), 8);
  f.write(reinterpret_cast<const char*>(&cols), 8);
  f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
}

MultiViewDataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw DataError("missing manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  MultiViewDataset ds;
  try {
    ds.name = j.value("name", std::string("dataset"));
    ds.m = j.at("m").get<std::size_t>();
    const Matrix lab = load_matrix(dir / j.at("labels").get<std::string>());
    if (lab.cols() != 1 && lab.rows() != 1)
      throw DataError("labels file must be a vector");
    for (std::size_t i = 0; i < lab.size(); ++i) {
      const double x = lab.data()[i];
      if (x != std::floor(x)) throw DataError("non-integer label at position " + std::to_string(i));
      ds.labels.push_back(static_cast<int>(x));
    }
    for (const auto& vf : j.at("views")) {
      ds.views.push_back(load_matrix(dir / vf.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  // optional declared shapes
  if (j.contains("n") && j["n"].get<std::size_t>() != ds.n())
    throw DataError("manifest declares n=" + j["n"].dump() + " but labels have " +
                    std::to_string(ds.n()) + " entries");
  if (j.contains("view_dims")) {
    const auto dims = j["view_dims"].get<std::vector<std::size_t>>();
    if (dims.size() != ds.views.size())
      throw DataError("manifest view_dims count does not match views");
    for (std::size_t i = 0; i < dims.size(); ++i)
      if (dims[i] != ds.views[i].cols())
        throw DataError("view " + std::to_string(i) + ": declared dim " +
                        std::to_string(dims[i]) + " but file has " +
                        std::to_string(ds.views[i].cols()));
  }
  ds.validate();
  return ds;
}

void save_dataset(const MultiViewDataset& ds, const std::filesystem::path& dir, bool binary) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["name"] = ds.name;
  j["m"] = ds.m;
  j["n"] = ds.n();
  j["labels"] = "labels.txt";
  Matrix lab(ds.n(), 1);
  for (std::size_t i = 0; i < ds.n(); ++i) lab(i, 0) = ds.labels[i];
  save_matrix_text(lab, dir / "labels.txt", 0);
  std::vector<std::string> files;
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < ds.v(); ++i) {
    const std::string fn = "view" + std::to_string(i) + (binary ? ".bin" : ".txt");
    if (binary)
      save_matrix_binary(ds.views[i], dir / fn);
    else
      save_matrix_text(ds.views[i], dir / fn);
    files.push_back(fn);
    dims.push_back(ds.views[i].cols());
  }
  j["views"] = files;
  j["view_dims"] = dims;
  std::ofstream f(dir / "manifest.json");
  f << j.dump(2) << '\n';
}

namespace {

// softmax of a small vector in place
void softmax_inplace(std::vector<double>& l) {
  double mx = l[0];
  for (double x : l) mx = std::max(mx, x);
  double z = 0.0;
  for (double& x : l) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : l) x /= z;
}

}  // namespace

std::pair<MultiViewDataset, OracleInfo> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<double> mix = spec.label_mix;
  if (mix.empty()) mix.assign(spec.v + 1, 1.0);

  Rng latent_rng = substream(spec.seed, "synth.latents");
  Rng map_rng = substream(spec.seed, "synth.maps");
  Rng label_rng = substream(spec.seed, "synth.labels");
  Rng noise_rng = substream(spec.seed, "synth.noise");
  Rng oracle_rng = substream(spec.seed, "synth.oracle");

  OracleInfo oracle;
  oracle.common_latent = Matrix(spec.n, spec.dim_common);
  for (std::size_t i = 0; i < oracle.common_latent.size(); ++i)
    oracle.common_latent.data()[i] = latent_rng.normal();
  for (std::size_t vi = 0; vi < spec.v; ++vi) {
    Matrix u(spec.n, spec.dim_unique);
    for (std::size_t i = 0; i < u.size(); ++i) u.data()[i] = latent_rng.normal();
    oracle.unique_latents.push_back(std::move(u));
  }

  // label logit maps, one per information source
  const double gc = kLogitGain / std::sqrt(static_cast<double>(spec.dim_common));
  const double gu = kLogitGain / std::sqrt(static_cast<double>(spec.dim_unique));
  Matrix Wc(spec.dim_common, spec.m);
  for (std::size_t i = 0; i < Wc.size(); ++i) Wc.data()[i] = gc * map_rng.normal();
  std::vector<Matrix> Wu;
  for (std::size_t vi = 0; vi < spec.v; ++vi) {
    Matrix w(spec.dim_unique, spec.m);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = gu * map_rng.normal();
    Wu.push_back(std::move(w));
  }

  // view maps: X_i = [c | u_i] * A_i + noise
  const std::size_t lat_dim = spec.dim_common + spec.dim_unique;
  const std::size_t view_dim = synth_view_dim(spec);
  const double ga = 1.0 / std::sqrt(static_cast<double>(lat_dim));
  std::vector<Matrix> A;
  for (std::size_t vi = 0; vi < spec.v; ++vi) {
    Matrix a(lat_dim, view_dim);
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = ga * map_rng.normal();
    A.push_back(std::move(a));
  }

  MultiViewDataset ds;
  ds.name = "synthetic";
  ds.m = spec.m;
  auto logits_common = [&](const double* c, std::vector<double>& out) {
    for (std::size_t j = 0; j < spec.m; ++j) out[j] = 0.0;
    for (std::size_t d = 0; d < spec.dim_common; ++d)
      for (std::size_t j = 0; j < spec.m; ++j) out[j] += mix[0] * c[d] * Wc(d, j);
  };
  auto logits_unique = [&](const std::vector<const double*>& us, std::vector<double>& out) {
    for (std::size_t j = 0; j < spec.m; ++j) out[j] = 0.0;
    for (std::size_t vi = 0; vi < spec.v; ++vi)
      for (std::size_t d = 0; d < spec.dim_unique; ++d)
        for (std::size_t j = 0; j < spec.m; ++j)
          out[j] += mix[vi + 1] * us[vi][d] * Wu[vi](d, j);
  };

  // observations
  for (std::size_t vi = 0; vi < spec.v; ++vi) {
    Matrix x(spec.n, view_dim);
    for (std::size_t k = 0; k < spec.n; ++k) {
      const double* c = oracle.common_latent.row(k);
      const double* u = oracle.unique_latents[vi].row(k);
      for (std::size_t j = 0; j < view_dim; ++j) {
        double acc = 0.0;
        for (std::size_t d = 0; d < spec.dim_common; ++d) acc += c[d] * A[vi](d, j);
        for (std::size_t d = 0; d < spec.dim_unique; ++d)
          acc += u[d] * A[vi](spec.dim_common + d, j);
        x(k, j) = acc + spec.noise_std * noise_rng.normal();
      }
    }
    ds.views.push_back(std::move(x));
  }

  // labels drawn from softmax over mixed logits
  std::vector<double> lc(spec.m), lu(spec.m), probs(spec.m);
  for (std::size_t k = 0; k < spec.n; ++k) {
    std::vector<const double*> us;
    for (std::size_t vi = 0; vi < spec.v; ++vi) us.push_back(oracle.unique_latents[vi].row(k));
    logits_common(oracle.common_latent.row(k), lc);
    logits_unique(us, lu);
    for (std::size_t j = 0; j < spec.m; ++j) probs[j] = lc[j] + lu[j];
    softmax_inplace(probs);
    double r = label_rng.uniform();
    int y = static_cast<int>(spec.m) - 1;
    double cum = 0.0;
    for (std::size_t j = 0; j < spec.m; ++j) {
      cum += probs[j];
      if (r < cum) {
        y = static_cast<int>(j);
        break;
      }
    }
    ds.labels.push_back(y);
  }
  ds.validate();

  // Monte-Carlo Bayes accuracies. For the partial-information predictors the
  // unobserved sources are integrated out against a pre-drawn pool, which is
  // valid because latents are independent across sources.
  const std::size_t outer = 100000;
  const std::size_t pool_size = 512;
  std::vector<std::vector<double>> pool_lu(pool_size, std::vector<double>(spec.m));
  std::vector<std::vector<double>> pool_lc(pool_size, std::vector<double>(spec.m));
  {
    std::vector<double> cbuf(spec.dim_common);
    std::vector<std::vector<double>> ubuf(spec.v, std::vector<double>(spec.dim_unique));
    for (std::size_t p = 0; p < pool_size; ++p) {
      std::vector<const double*> us;
      for (std::size_t vi = 0; vi < spec.v; ++vi) {
        for (double& x : ubuf[vi]) x = oracle_rng.normal();
        us.push_back(ubuf[vi].data());
      }
      logits_unique(us, pool_lu[p]);
      for (double& x : cbuf) x = oracle_rng.normal();
      logits_common(cbuf.data(), pool_lc[p]);
    }
  }

  double acc_joint = 0.0, acc_common = 0.0, acc_unique = 0.0;
  std::vector<double> cbuf(spec.dim_common);
  std::vector<std::vector<double>> ubuf(spec.v, std::vector<double>(spec.dim_unique));
  std::vector<double> post(spec.m), tmp(spec.m);
  for (std::size_t s = 0; s < outer; ++s) {
    for (double& x : cbuf) x = oracle_rng.normal();
    std::vector<const double*> us;
    for (std::size_t vi = 0; vi < spec.v; ++vi) {
      for (double& x : ubuf[vi]) x = oracle_rng.normal();
      us.push_back(ubuf[vi].data());
    }
    logits_common(cbuf.data(), lc);
    logits_unique(us, lu);
    for (std::size_t j = 0; j < spec.m; ++j) probs[j] = lc[j] + lu[j];
    softmax_inplace(probs);

    // joint: sees all latents
    std::size_t yj = 0;
    for (std::size_t j = 1; j < spec.m; ++j)
      if (probs[j] > probs[yj]) yj = j;
    acc_joint += probs[yj];

    // common-only: posterior over y given c, unique pool averaged
    std::fill(post.begin(), post.end(), 0.0);
    for (std::size_t p = 0; p < pool_size; ++p) {
      for (std::size_t j = 0; j < spec.m; ++j) tmp[j] = lc[j] + pool_lu[p][j];
      softmax_inplace(tmp);
      for (std::size_t j = 0; j < spec.m; ++j) post[j] += tmp[j];
    }
    std::size_t yc = 0;
    for (std::size_t j = 1; j < spec.m; ++j)
      if (post[j] > post[yc]) yc = j;
    acc_common += probs[yc];

    // unique-only: posterior over y given all u_i, common pool averaged
    std::fill(post.begin(), post.end(), 0.0);
    for (std::size_t p = 0; p < pool_size; ++p) {
      for (std::size_t j = 0; j < spec.m; ++j) tmp[j] = lu[j] + pool_lc[p][j];
      softmax_inplace(tmp);
      for (std::size_t j = 0; j < spec.m; ++j) post[j] += tmp[j];
    }
    std::size_t yu = 0;
    for (std::size_t j = 1; j < spec.m; ++j)
      if (post[j] > post[yu]) yu = j;
    acc_unique += probs[yu];
  }
  oracle.bayes_acc_joint = acc_joint / static_cast<double>(outer);
  oracle.bayes_acc_common = acc_common / static_cast<double>(outer);
  oracle.bayes_acc_unique = acc_unique / static_cast<double>(outer);

  return {std::move(ds), std::move(oracle)};
}

SplitIndices make_splits(const MultiViewDataset& ds, double train_fraction,
                         std::uint64_t trial_seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0, 1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.n(); ++i) by_class[ds.labels[i]].push_back(i);
  SplitIndices s;
  s.trial_seed = trial_seed;
  Rng rng = substream(trial_seed, "split");
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 2)
      throw DataError("class " + std::to_string(cls) + " has a single sample; cannot stratify");
    rng.shuffle(idx.begin(), idx.end());
    std::size_t ntr = static_cast<std::size_t>(std::floor(train_fraction * idx.size()));
    ntr = std::min(std::max<std::size_t>(ntr, 1), idx.size() - 1);
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < ntr ? s.train : s.test).push_back(idx[i]);
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Standardizer Standardizer::fit(const MultiViewDataset& ds, const std::vector<std::size_t>& train) {
  Standardizer st;
  for (const auto& x : ds.views) {
    Matrix mu(1, x.cols()), sd(1, x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i : train) s += x(i, j);
      const double mean = s / static_cast<double>(train.size());
      double s2 = 0.0;
      for (std::size_t i : train) {
        const double d = x(i, j) - mean;
        s2 += d * d;
      }
      double var = s2 / static_cast<double>(train.size());
      mu(0, j) = mean;
      sd(0, j) = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    st.mean.push_back(std::move(mu));
    st.std.push_back(std::move(sd));
  }
  return st;
}

Matrix Standardizer::apply(const Matrix& x, std::size_t view) const {
  Matrix out = x;
  const Matrix& mu = mean[view];
  const Matrix& sd = std[view];
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = (out(i, j) - mu(0, j)) / sd(0, j);
  return out;
}

std::vector<Matrix> Standardizer::apply_rows(const MultiViewDataset& ds,
                                             const std::vector<std::size_t>& idx) const {
  std::vector<Matrix> out;
  for (std::size_t vi = 0; vi < ds.v(); ++vi) {
    const Matrix& x = ds.views[vi];
    Matrix sub(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j)
        sub(i, j) = (x(idx[i], j) - mean[vi](0, j)) / std[vi](0, j);
    out.push_back(std::move(sub));
  }
  return out;
}

std::vector<int> gather_labels(const MultiViewDataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (std::size_t i : idx) y.push_back(ds.labels[i]);
  return y;
}

}  // namespace ciml
