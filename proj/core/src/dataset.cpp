// SPDX-License-Identifier: Apache-2.0
#include "lnnfama/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "binary_io.hpp"
#include "lnnfama/fama.hpp"
#include "lnnfama/selection.hpp"

namespace lnnfama::dataset {

namespace {

constexpr double kStdFloor = 1e-12;

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

double sinr_db(double linear) { return 10.0 * std::log10(std::max(linear, 1e-30)); }

/// Standardized, step-major flattened features.
Eigen::VectorXd standardized_flat(const Normalizer& n, std::span<const double> raw) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::size_t c = i % kFeatureDim;
    out(static_cast<Eigen::Index>(i)) = (raw[i] - n.mean[c]) / n.stddev[c];
  }
  return out;
}

nlohmann::json normalizer_json(const Normalizer& n) {
  nlohmann::json j;
  j["fitted"] = n.fitted;
  j["mean"] = n.mean;
  j["stddev"] = n.stddev;
  j["pca"] = n.pca;
  j["variance_threshold"] = n.variance_threshold;
  if (n.pca) {
    j["pca_mean"] = std::vector<double>(n.pca_mean.data(), n.pca_mean.data() + n.pca_mean.size());
    nlohmann::json cols = nlohmann::json::array();
    for (Eigen::Index c = 0; c < n.components.cols(); ++c) {
      const Eigen::VectorXd col = n.components.col(c);
      cols.push_back(std::vector<double>(col.data(), col.data() + col.size()));
    }
    j["components"] = std::move(cols);
  }
  return j;
}

Normalizer normalizer_parse(const nlohmann::json& j) {
  Normalizer n;
  n.fitted = j.at("fitted").get<bool>();
  n.mean = j.at("mean").get<std::vector<double>>();
  n.stddev = j.at("stddev").get<std::vector<double>>();
  n.pca = j.at("pca").get<bool>();
  n.variance_threshold = j.at("variance_threshold").get<double>();
  if (n.pca) {
    const auto mean = j.at("pca_mean").get<std::vector<double>>();
    n.pca_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    const auto cols = j.at("components").get<std::vector<std::vector<double>>>();
    n.components.resize(n.pca_mean.size(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (static_cast<Eigen::Index>(cols[c].size()) != n.pca_mean.size())
        throw IntegrityError("PCA component has wrong length");
      n.components.col(static_cast<Eigen::Index>(c)) =
          Eigen::Map<const Eigen::VectorXd>(cols[c].data(), static_cast<Eigen::Index>(cols[c].size()));
    }
  }
  return n;
}

}  // namespace

void Normalizer::fit(std::span<const Sample> train, int m_observed, bool enable_pca) {
  if (train.empty()) throw ConfigError("cannot fit a normalizer on an empty training split");
  const std::size_t flat = static_cast<std::size_t>(m_observed) * kFeatureDim;
  mean.assign(kFeatureDim, 0.0);
  stddev.assign(kFeatureDim, 0.0);
  std::array<double, kFeatureDim> sum{}, sum_sq{};
  for (const auto& s : train) {
    if (s.features.size() != flat) throw ShapeError("sample feature length does not match m_observed");
    for (std::size_t i = 0; i < flat; ++i) sum[i % kFeatureDim] += s.features[i];
  }
  const double count = static_cast<double>(train.size()) * m_observed;
  for (int c = 0; c < kFeatureDim; ++c) mean[c] = sum[c] / count;
  for (const auto& s : train)
    for (std::size_t i = 0; i < flat; ++i) {
      const double d = s.features[i] - mean[i % kFeatureDim];
      sum_sq[i % kFeatureDim] += d * d;
    }
  for (int c = 0; c < kFeatureDim; ++c) stddev[c] = std::max(std::sqrt(sum_sq[c] / count), kStdFloor);
  fitted = true;
  pca = enable_pca;
  components.resize(0, 0);
  pca_mean.resize(0);
  if (!enable_pca) return;

  Eigen::MatrixXd x(static_cast<Eigen::Index>(train.size()), static_cast<Eigen::Index>(flat));
  for (std::size_t r = 0; r < train.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = standardized_flat(*this, train[r].features).transpose();
  pca_mean = x.colwise().mean().transpose();
  x.rowwise() -= pca_mean.transpose();
  const double denom = std::max<double>(1.0, static_cast<double>(train.size()) - 1.0);
  const Eigen::MatrixXd cov = (x.transpose() * x) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
  // Eigenvalues ascend; take from the top until the variance target is met.
  const Eigen::VectorXd values = eig.eigenvalues().cwiseMax(0.0);
  const double total = values.sum();
  Eigen::Index k = 0;
  double kept = 0.0;
  const Eigen::Index dim = values.size();
  while (k < dim) {
    kept += values(dim - 1 - k);
    ++k;
    if (total <= 0.0 || kept >= variance_threshold * total) break;
  }
  components.resize(dim, k);
  for (Eigen::Index c = 0; c < k; ++c) components.col(c) = eig.eigenvectors().col(dim - 1 - c);
}

int Normalizer::step_dim() const { return pca ? static_cast<int>(components.cols()) : kFeatureDim; }

int Normalizer::steps(int m_observed) const { return pca ? 1 : m_observed; }

Eigen::MatrixXd Normalizer::transform(std::span<const double> raw, int m_observed) const {
  if (!fitted) throw std::logic_error("normalizer applied before fit");
  if (raw.size() != static_cast<std::size_t>(m_observed) * kFeatureDim)
    throw ShapeError("feature length does not match m_observed");
  const Eigen::VectorXd flat = standardized_flat(*this, raw);
  if (pca) {
    if (flat.size() != pca_mean.size()) throw ShapeError("PCA basis fit for a different sequence length");
    return components.transpose() * (flat - pca_mean);
  }
  return flat.reshaped(kFeatureDim, m_observed);
}

bool Normalizer::operator==(const Normalizer& o) const {
  return fitted == o.fitted && pca == o.pca && mean == o.mean && stddev == o.stddev &&
         variance_threshold == o.variance_threshold && pca_mean == o.pca_mean &&
         components.rows() == o.components.rows() && components.cols() == o.components.cols() &&
         components == o.components;
}

std::vector<std::uint8_t> top_m_labels(std::span<const double> sinr, int m_labels) {
  if (m_labels < 1 || static_cast<std::size_t>(m_labels) > sinr.size())
    throw std::invalid_argument("label count " + std::to_string(m_labels) + " outside [1, " +
                                std::to_string(sinr.size()) + "]");
  std::vector<std::uint8_t> out(sinr.size(), 0);
  for (int idx : top_indices(sinr, m_labels)) out[static_cast<std::size_t>(idx)] = 1;
  return out;
}

std::vector<double> raw_features(std::span<const int> ports, std::span<const double> observed_sinr, int n_ports) {
  if (ports.size() != observed_sinr.size()) throw ShapeError("port and SINR sequences differ in length");
  std::vector<double> out;
  out.reserve(ports.size() * kFeatureDim);
  const double scale = 1.0 / static_cast<double>(n_ports - 1);
  for (std::size_t i = 0; i < ports.size(); ++i) {
    out.push_back(to_f32(sinr_db(observed_sinr[i])));
    out.push_back(to_f32(ports[i] * scale));
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t count) {
  const auto train = static_cast<std::size_t>(std::llround(0.70 * static_cast<double>(count)));
  const auto val = static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(count)));
  return {train, val, count - train - val};
}

DatasetSplit build_dataset(const SystemConfig& system, const channel::AntennaConfig& antenna,
                           const channel::FadingParams& params, int m_observed, int m_labels, std::size_t count,
                           std::uint64_t seed, int workers) {
  if (count < 10) throw ConfigError("dataset.count must be >= 10");
  antenna.validate();
  if (m_labels < 1 || m_labels > antenna.n_ports) throw ConfigError("dataset.m_labels must be in [1, N]");
  const auto observed = selection::observed_indices(antenna.n_ports, m_observed);
  const auto factor = channel::factorize_correlation(channel::build_correlation_matrix(antenna));

  std::vector<Sample> samples(count);
  parallel_chunks(count, workers, [&](std::size_t begin, std::size_t end) {
    channel::ChannelGenerator gen(system, antenna, params, factor);
    channel::ChannelRealization realization;
    fama::SinrVector sinr;
    std::vector<double> observed_sinr(observed.size());
    for (std::size_t i = begin; i < end; ++i) {
      gen.generate(derive_seed(seed, streams::kDataset, i), realization);
      fama::sinr_per_port(realization, system, sinr);
      Sample& s = samples[i];
      s.sinr.resize(sinr.values.size());
      std::transform(sinr.values.begin(), sinr.values.end(), s.sinr.begin(), to_f32);
      for (std::size_t k = 0; k < observed.size(); ++k) observed_sinr[k] = s.sinr[static_cast<std::size_t>(observed[k])];
      s.features = raw_features(observed, observed_sinr, antenna.n_ports);
      s.labels = top_m_labels(s.sinr, m_labels);
    }
  });

  std::vector<std::size_t> perm(count);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, streams::kSplit, 0));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto sizes = split_sizes(count);

  DatasetSplit split;
  split.meta = {antenna.n_ports,      m_observed,          m_labels, params.alpha, params.mu, antenna.aperture,
                system.n_users,       system.signal_power, system.noise_power, seed, observed};
  for (std::size_t i = 0; i < count; ++i) {
    auto& dest = i < sizes[0] ? split.train : (i < sizes[0] + sizes[1] ? split.validation : split.test);
    dest.push_back(std::move(samples[perm[i]]));
  }
  split.normalizer.fit(split.train, m_observed, false);
  return split;
}

void relabel(DatasetSplit& split, int m_labels) {
  if (m_labels < 1 || m_labels > split.meta.n_ports) throw ConfigError("m_labels must be in [1, N]");
  for (auto* part : {&split.train, &split.validation, &split.test})
    for (auto& s : *part) s.labels = top_m_labels(s.sinr, m_labels);
  split.meta.m_labels = m_labels;
}

std::vector<Eigen::MatrixXd> fit_transform(Normalizer& normalizer, std::span<const Sample> train, int m_observed,
                                           bool enable_pca) {
  normalizer.fit(train, m_observed, enable_pca);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(train.size());
  for (const auto& s : train) out.push_back(normalizer.transform(s.features, m_observed));
  return out;
}

nn::TensorSet to_tensors(std::span<const Sample> samples, const Normalizer& normalizer, int m_observed) {
  nn::TensorSet set;
  set.steps = normalizer.steps(m_observed);
  set.step_dim = normalizer.step_dim();
  const Eigen::Index rows = static_cast<Eigen::Index>(set.steps) * set.step_dim;
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  set.inputs.resize(rows, n);
  set.labels.resize(samples.empty() ? 0 : static_cast<Eigen::Index>(samples.front().labels.size()), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Sample& s = samples[static_cast<std::size_t>(i)];
    set.inputs.col(i) = normalizer.transform(s.features, m_observed).reshaped();
    if (static_cast<Eigen::Index>(s.labels.size()) != set.labels.rows()) throw ShapeError("label widths differ");
    for (Eigen::Index j = 0; j < set.labels.rows(); ++j) set.labels(j, i) = s.labels[static_cast<std::size_t>(j)];
  }
  return set;
}

void save_dataset(const DatasetSplit& split, const std::string& path) {
  const auto& m = split.meta;
  nlohmann::json header;
  header["format"] = "lnnfama.dataset";
  header["version"] = 1;
  header["n_ports"] = m.n_ports;
  header["m_observed"] = m.m_observed;
  header["m_labels"] = m.m_labels;
  header["alpha"] = m.alpha;
  header["mu"] = m.mu;
  header["aperture"] = m.aperture;
  header["n_users"] = m.n_users;
  header["signal_power"] = m.signal_power;
  header["noise_power"] = m.noise_power;
  header["seed"] = m.seed;
  header["observed_ports"] = m.observed_ports;
  header["feature_dim"] = kFeatureDim;
  header["blocks"] = {"features:f32", "labels:u8", "sinr:f32"};
  header["counts"] = {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}};
  header["normalizer"] = normalizer_json(split.normalizer);

  const std::size_t flat = static_cast<std::size_t>(m.m_observed) * kFeatureDim;
  detail::BlobWriter blob;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& s : *part) {
      if (s.features.size() != flat) throw ShapeError("sample feature length does not match header");
      for (double v : s.features) blob.put_f32(v);
    }
    for (const auto& s : *part) {
      if (s.labels.size() != static_cast<std::size_t>(m.n_ports)) throw ShapeError("label mask length != N");
      for (auto v : s.labels) blob.put(v);
    }
    for (const auto& s : *part) {
      if (s.sinr.size() != static_cast<std::size_t>(m.n_ports)) throw ShapeError("SINR vector length != N");
      for (double v : s.sinr) blob.put_f32(v);
    }
  }
  detail::write_artifact(path, std::move(header), blob.data());
}

DatasetSplit load_dataset(const std::string& path, const LoadExpectations& expect) {
  auto artifact = detail::read_artifact(path, "lnnfama.dataset", 1);
  const auto& h = artifact.header;
  DatasetSplit split;
  std::array<std::size_t, 3> counts{};
  try {
    auto& m = split.meta;
    m.n_ports = h.at("n_ports").get<int>();
    m.m_observed = h.at("m_observed").get<int>();
    m.m_labels = h.at("m_labels").get<int>();
    m.alpha = h.at("alpha").get<double>();
    m.mu = h.at("mu").get<int>();
    m.aperture = h.at("aperture").get<double>();
    m.n_users = h.at("n_users").get<int>();
    m.signal_power = h.at("signal_power").get<double>();
    m.noise_power = h.at("noise_power").get<double>();
    m.seed = h.at("seed").get<std::uint64_t>();
    m.observed_ports = h.at("observed_ports").get<std::vector<int>>();
    counts = {h.at("counts").at("train").get<std::size_t>(), h.at("counts").at("validation").get<std::size_t>(),
              h.at("counts").at("test").get<std::size_t>()};
    split.normalizer = normalizer_parse(h.at("normalizer"));
    if (h.at("feature_dim").get<int>() != kFeatureDim) throw IntegrityError("unsupported feature dimension");
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("'" + path + "': bad dataset header: " + e.what());
  }
  const auto& m = split.meta;
  if (expect.n_ports && *expect.n_ports != m.n_ports)
    throw ShapeError("'" + path + "' has N = " + std::to_string(m.n_ports) + ", expected " +
                     std::to_string(*expect.n_ports));
  if (expect.m_observed && *expect.m_observed != m.m_observed)
    throw ShapeError("'" + path + "' has m_observed = " + std::to_string(m.m_observed) + ", expected " +
                     std::to_string(*expect.m_observed));
  if (static_cast<int>(m.observed_ports.size()) != m.m_observed)
    throw IntegrityError("'" + path + "': observed port list does not match m_observed");

  const std::size_t flat = static_cast<std::size_t>(m.m_observed) * kFeatureDim;
  const std::size_t n = static_cast<std::size_t>(m.n_ports);
  detail::BlobReader reader(artifact.blob);
  std::array<std::vector<Sample>*, 3> parts{&split.train, &split.validation, &split.test};
  for (std::size_t p = 0; p < 3; ++p) {
    auto& part = *parts[p];
    part.resize(counts[p]);
    for (auto& s : part) {
      s.features.resize(flat);
      for (auto& v : s.features) v = reader.get_f32();
    }
    for (auto& s : part) {
      s.labels.resize(n);
      for (auto& v : s.labels) v = reader.get<std::uint8_t>();
    }
    for (auto& s : part) {
      s.sinr.resize(n);
      for (auto& v : s.sinr) v = reader.get_f32();
    }
  }
  if (!reader.exhausted()) throw IntegrityError("'" + path + "': trailing bytes after dataset blocks");
  return split;
}

std::string normalizer_to_json(const Normalizer& normalizer) { return normalizer_json(normalizer).dump(); }

Normalizer normalizer_from_json(const std::string& json_text) {
  try {
    return normalizer_parse(nlohmann::json::parse(json_text));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("bad normalizer record: ") + e.what());
  }
}

void export_csv(const DatasetSplit& split, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const auto& m = split.meta;
  out << "split,sample";
  for (int t = 0; t < m.m_observed; ++t) out << ",step" << t << "_sinr_db,step" << t << "_position";
  for (int p = 0; p < m.n_ports; ++p) out << ",label_" << p;
  for (int p = 0; p < m.n_ports; ++p) out << ",sinr_" << p;
  out << '\n';
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
  };
  const std::array<std::pair<const char*, const std::vector<Sample>*>, 3> parts{
      {{"train", &split.train}, {"validation", &split.validation}, {"test", &split.test}}};
  for (const auto& [name, part] : parts) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      const auto& s = (*part)[i];
      out << name << ',' << i;
      for (double v : s.features) out << ',' << num(v);
      for (auto v : s.labels) out << ',' << static_cast<int>(v);
      for (double v : s.sinr) out << ',' << num(v);
      out << '\n';
    }
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace lnnfama::dataset
