#include "fl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fl/rng.hpp"

namespace fl {

void LocalDataset::validate() const {
  if (num_features == 0) throw std::invalid_argument("dataset has no features");
  if (features.size() != labels.size() * num_features) {
    throw std::invalid_argument("dataset feature matrix does not match label count");
  }
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

LocalDataset LocalDataset::subset(std::span<const std::size_t> indices) const {
  LocalDataset out;
  out.num_features = num_features;
  out.num_classes = num_classes;
  out.features.reserve(indices.size() * num_features);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (num_examples < num_classes) throw std::invalid_argument("synthetic data needs num_examples >= num_classes");
  if (num_features < num_classes) throw std::invalid_argument("synthetic data needs num_features >= num_classes");
  if (!(class_separation > 0.0)) throw std::invalid_argument("class_separation must be > 0");
}

namespace {

/// Class means as rows of a [k x d] matrix.
std::vector<double> class_means(const SyntheticSpec& spec) {
  const std::size_t k = spec.num_classes;
  const std::size_t d = spec.num_features;
  Xoshiro256 rng(derive_seed(spec.seed, {0x6d65616e73ULL}));
  std::vector<double> means(k * d, 0.0);
  // Scaled one-hot vectors form a regular simplex.
  const double scale = spec.class_separation / std::sqrt(2.0);
  for (std::size_t c = 0; c < k; ++c) means[c * d + c] = scale;
  // Householder reflection I - 2vv^T preserves all pairwise distances.
  std::vector<double> v(d);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  for (std::size_t c = 0; c < k; ++c) {
    double* m = means.data() + c * d;
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += m[j] * v[j];
    for (std::size_t j = 0; j < d; ++j) m[j] -= 2.0 * dot * v[j];
  }
  return means;
}

}  // namespace

LocalDataset make_synthetic(const SyntheticSpec& spec, std::uint64_t sample_stream) {
  spec.validate();
  const auto means = class_means(spec);
  LocalDataset out;
  out.num_features = spec.num_features;
  out.num_classes = spec.num_classes;
  out.features.resize(spec.num_examples * spec.num_features);
  out.labels.resize(spec.num_examples);
  Xoshiro256 rng(derive_seed(spec.seed, {0x73616d706c65ULL, sample_stream}));
  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    const std::size_t c = i % spec.num_classes;
    out.labels[i] = static_cast<std::int32_t>(c);
    for (std::size_t j = 0; j < spec.num_features; ++j) {
      out.features[i * spec.num_features + j] = means[c * spec.num_features + j] + rng.normal();
    }
  }
  return out;
}

void PartitionSpec::validate() const {
  if (num_clients < 1) throw std::invalid_argument("num_clients must be >= 1");
  if (!(iid_fraction >= 0.0 && iid_fraction <= 1.0)) throw std::invalid_argument("iid_fraction must be in [0, 1]");
}

namespace {
void shuffle(std::vector<std::size_t>& v, Xoshiro256& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}
}  // namespace

std::vector<std::vector<std::size_t>> partition_indices(const LocalDataset& data, const PartitionSpec& spec) {
  spec.validate();
  const std::size_t n = data.size();
  const std::size_t clients = spec.num_clients;
  if (n < clients) {
    throw PartitionError("cannot split " + std::to_string(n) + " examples across " + std::to_string(clients) +
                         " clients");
  }
  std::vector<std::vector<std::size_t>> parts(clients);
  if (clients == 1) {
    parts[0].resize(n);
    std::iota(parts[0].begin(), parts[0].end(), std::size_t{0});
    return parts;
  }

  Xoshiro256 rng(derive_seed(spec.seed, {0x7061727469ULL}));
  std::vector<std::size_t> sizes(clients, n / clients);
  for (std::size_t c = 0; c < n % clients; ++c) ++sizes[c];

  std::vector<bool> used(n, false);
  if (spec.iid_fraction < 1.0) {
    std::vector<std::vector<std::size_t>> by_class(std::max<std::size_t>(data.num_classes, 1));
    for (std::size_t i = 0; i < n; ++i) by_class.at(static_cast<std::size_t>(data.labels[i])).push_back(i);
    for (auto& pool : by_class) shuffle(pool, rng);
    std::vector<std::size_t> cursor(by_class.size(), 0);
    for (std::size_t c = 0; c < clients; ++c) {
      const std::size_t cls = c % by_class.size();
      const auto iid_share = static_cast<std::size_t>(std::floor(spec.iid_fraction * static_cast<double>(sizes[c])));
      const std::size_t skewed = sizes[c] - iid_share;
      if (cursor[cls] + skewed > by_class[cls].size()) {
        throw PartitionError("class " + std::to_string(cls) + " has too few examples for the non-iid share (" +
                             std::to_string(by_class[cls].size()) + " available)");
      }
      for (std::size_t j = 0; j < skewed; ++j) {
        const std::size_t idx = by_class[cls][cursor[cls]++];
        used[idx] = true;
        parts[c].push_back(idx);
      }
    }
  }

  std::vector<std::size_t> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!used[i]) pool.push_back(i);
  }
  shuffle(pool, rng);
  std::size_t next = 0;
  for (std::size_t c = 0; c < clients; ++c) {
    while (parts[c].size() < sizes[c]) parts[c].push_back(pool[next++]);
  }
  return parts;
}

std::vector<LocalDataset> partition(const LocalDataset& data, const PartitionSpec& spec) {
  std::vector<LocalDataset> out;
  for (const auto& idx : partition_indices(data, spec)) out.push_back(data.subset(idx));
  return out;
}

std::pair<LocalDataset, LocalDataset> split_train_test(const LocalDataset& data, double test_fraction) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must be in [0, 1)");
  const std::size_t n = data.size();
  auto n_test = static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n)));
  if (n_test >= n) n_test = n > 0 ? n - 1 : 0;
  std::vector<std::size_t> train(n - n_test), test(n_test);
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::iota(test.begin(), test.end(), n - n_test);
  return {data.subset(train), data.subset(test)};
}

LocalDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open CSV file '" + path + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("CSV file '" + path + "' is empty");
  const auto header = split(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw std::invalid_argument("CSV file '" + path + "' has no 'label' column");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  LocalDataset out;
  out.num_features = header.size() - 1;
  std::int32_t max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " columns");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& s = cells[c];
      if (c == label_col) {
        std::int32_t y = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), y);
        if (ec != std::errc{} || p != s.data() + s.size() || y < 0) {
          throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": bad label '" + s + "'");
        }
        out.labels.push_back(y);
        max_label = std::max(max_label, y);
      } else {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) {
          throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
        }
        out.features.push_back(v);
      }
    }
  }
  out.num_classes = static_cast<std::size_t>(max_label + 1);
  out.validate();
  return out;
}

}  // namespace fl
