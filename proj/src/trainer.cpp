#include "fl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fl/kernels.hpp"
#include "fl/rng.hpp"

namespace fl {

void ModelSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("model input_dim must be >= 1");
  if (num_classes < 2) throw std::invalid_argument("model num_classes must be >= 2");
  if (architecture == Architecture::Mlp && hidden_width < 1) {
    throw std::invalid_argument("mlp hidden_width must be >= 1");
  }
}

Architecture parse_architecture(const std::string& name) {
  if (name == "logistic") return Architecture::Logistic;
  if (name == "mlp") return Architecture::Mlp;
  throw std::invalid_argument("unknown architecture '" + name + "' (expected logistic or mlp)");
}

namespace {

struct Layout {
  std::string name;
  std::vector<std::uint32_t> shape;
  bool is_bias;
};

std::vector<Layout> layout_of(const ModelSpec& spec) {
  const auto d = static_cast<std::uint32_t>(spec.input_dim);
  const auto k = static_cast<std::uint32_t>(spec.num_classes);
  if (spec.architecture == Architecture::Logistic) {
    return {{"w0", {d, k}, false}, {"b0", {k}, true}};
  }
  const auto h = static_cast<std::uint32_t>(spec.hidden_width);
  return {{"w0", {d, h}, false}, {"b0", {h}, true}, {"w1", {h, k}, false}, {"b1", {k}, true}};
}

/// Parameters as flat double buffers in tensor order.
using Params = std::vector<std::vector<double>>;

Params to_params(const Weights& w) {
  Params p;
  for (const auto& t : w.tensors()) p.push_back(t.to_f64());
  return p;
}

Weights from_params(const Weights& layout, const Params& p) {
  Weights out;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const Tensor& proto = layout[i];
    Tensor t = Tensor::zeros(proto.name(), std::vector<std::uint32_t>(proto.shape().begin(), proto.shape().end()),
                             proto.dtype());
    t.assign(p[i]);
    out.add(std::move(t));
  }
  return out;
}

Weights params_as_f64(const ModelSpec& spec, Params p) {
  Weights out;
  auto layout = layout_of(spec);
  for (std::size_t i = 0; i < layout.size(); ++i) out.add(Tensor(layout[i].name, layout[i].shape, std::move(p[i])));
  return out;
}

void column_sum(std::span<const double> m, std::size_t rows, std::size_t cols, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += m[i * cols + j];
  }
}

void add_bias(std::span<double> m, std::size_t rows, std::span<const double> bias) {
  const std::size_t cols = bias.size();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m[i * cols + j] += bias[j];
  }
}

class Network {
 public:
  explicit Network(const ModelSpec& spec) : spec_(spec) {}

  /// Mean cross-entropy over rows; fills grad when non-null. Optionally
  /// counts correct top-1 predictions.
  double run(const Params& p, const LocalDataset& data, std::span<const std::size_t> rows, Params* grad,
             std::size_t* correct = nullptr) {
    const std::size_t b = rows.size();
    const std::size_t d = spec_.input_dim;
    const std::size_t k = spec_.num_classes;
    x_.resize(b * d);
    for (std::size_t r = 0; r < b; ++r) {
      auto src = data.row(rows[r]);
      std::copy(src.begin(), src.end(), x_.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    z_.resize(b * k);
    const bool mlp = spec_.architecture == Architecture::Mlp;
    const std::size_t h = spec_.hidden_width;
    if (mlp) {
      hidden_.resize(b * h);
      kernels::gemm(x_, p[0], hidden_, b, d, h);
      add_bias(hidden_, b, p[1]);
      for (double& v : hidden_) v = std::tanh(v);
      kernels::gemm(hidden_, p[2], z_, b, h, k);
      add_bias(z_, b, p[3]);
    } else {
      kernels::gemm(x_, p[0], z_, b, d, k);
      add_bias(z_, b, p[1]);
    }

    // z_ becomes dLoss/dz in place.
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r) {
      double* z = z_.data() + r * k;
      const auto label = static_cast<std::size_t>(data.labels[rows[r]]);
      std::size_t best = 0;
      double mx = z[0];
      for (std::size_t c = 1; c < k; ++c) {
        if (z[c] > mx) {
          mx = z[c];
          best = c;
        }
      }
      if (correct != nullptr && best == label) ++*correct;
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += std::exp(z[c] - mx);
      const double lse = mx + std::log(s);
      loss += lse - z[label];
      if (grad != nullptr) {
        for (std::size_t c = 0; c < k; ++c) z[c] = (std::exp(z[c] - lse) - (c == label ? 1.0 : 0.0)) * inv_b;
      }
    }
    loss *= inv_b;
    if (grad == nullptr) return loss;

    Params& g = *grad;
    g.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) g[i].assign(p[i].size(), 0.0);
    if (mlp) {
      kernels::gemm_tn(hidden_, z_, g[2], b, h, k);
      column_sum(z_, b, k, g[3]);
      dhidden_.resize(b * h);
      kernels::gemm_nt(z_, p[2], dhidden_, b, k, h);
      for (std::size_t i = 0; i < dhidden_.size(); ++i) dhidden_[i] *= 1.0 - hidden_[i] * hidden_[i];
      kernels::gemm_tn(x_, dhidden_, g[0], b, d, h);
      column_sum(dhidden_, b, h, g[1]);
    } else {
      kernels::gemm_tn(x_, z_, g[0], b, d, k);
      column_sum(z_, b, k, g[1]);
    }
    return loss;
  }

 private:
  ModelSpec spec_;
  std::vector<double> x_, hidden_, z_, dhidden_;
};

/// Adds (mu/2)||p - ref||^2 to the loss and mu (p - ref) to the gradient.
double add_proximal(const Params& p, const Params& ref, double mu, Params* grad) {
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p[i].size(); ++j) {
      const double diff = p[i][j] - ref[i][j];
      sq += diff * diff;
      if (grad != nullptr) (*grad)[i][j] += mu * diff;
    }
  }
  return 0.5 * mu * sq;
}

void check_data(const ModelSpec& spec, const LocalDataset& data) {
  if (data.num_features != spec.input_dim) {
    throw std::invalid_argument("dataset has " + std::to_string(data.num_features) + " features, model expects " +
                                std::to_string(spec.input_dim));
  }
  if (data.num_classes > spec.num_classes) {
    throw std::invalid_argument("dataset has more classes than the model");
  }
}

}  // namespace

Weights init_weights(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Xoshiro256 rng(seed);
  Weights w;
  for (auto& l : layout_of(spec)) {
    std::size_t n = 1;
    for (auto e : l.shape) n *= e;
    std::vector<double> data(n, 0.0);
    if (!l.is_bias) {
      for (double& v : data) v = rng.uniform(-0.05, 0.05);
    }
    w.add(Tensor(l.name, l.shape, std::move(data)));
  }
  return w;
}

void check_weights(const ModelSpec& spec, const Weights& weights) {
  auto layout = layout_of(spec);
  if (weights.size() != layout.size()) throw std::invalid_argument("weights do not match model: wrong tensor count");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const Tensor& t = weights[i];
    if (t.name() != layout[i].name ||
        !std::equal(t.shape().begin(), t.shape().end(), layout[i].shape.begin(), layout[i].shape.end())) {
      throw std::invalid_argument("weights do not match model at tensor '" + t.name() + "'");
    }
  }
}

LossGradient loss_and_gradient(const ModelSpec& spec, const Weights& weights, const LocalDataset& data,
                               std::span<const std::size_t> rows, double mu, const Weights* reference) {
  spec.validate();
  check_weights(spec, weights);
  check_data(spec, data);
  if (rows.empty()) throw std::invalid_argument("loss_and_gradient: no rows");
  const Params p = to_params(weights);
  Params g;
  Network net(spec);
  double loss = net.run(p, data, rows, &g);
  if (mu > 0.0) {
    if (reference == nullptr) throw std::invalid_argument("proximal term needs a reference model");
    check_weights(spec, *reference);
    loss += add_proximal(p, to_params(*reference), mu, &g);
  }
  return {loss, params_as_f64(spec, std::move(g))};
}

SgdResult sgd_fit(const ModelSpec& spec, const Weights& initial, const LocalDataset& data, const SgdOptions& options,
                  const Weights* global_reference) {
  spec.validate();
  check_weights(spec, initial);
  check_data(spec, data);
  if (data.empty()) throw std::invalid_argument("sgd_fit: empty dataset");
  if (options.epochs < 1) throw std::invalid_argument("sgd_fit: epochs must be >= 1");
  if (options.batch_size < 1) throw std::invalid_argument("sgd_fit: batch_size must be >= 1");
  const bool proximal = options.proximal_mu > 0.0;
  Params ref;
  if (proximal) {
    if (global_reference == nullptr) throw std::invalid_argument("sgd_fit: proximal_mu > 0 needs a global reference");
    check_weights(spec, *global_reference);
    ref = to_params(*global_reference);
  }

  Params p = to_params(initial);
  Params g;
  Network net(spec);
  Xoshiro256 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      epoch_loss += net.run(p, data, batch, &g) * static_cast<double>(batch.size());
      if (proximal) add_proximal(p, ref, options.proximal_mu, &g);
      for (std::size_t t = 0; t < p.size(); ++t) kernels::axpy(-options.learning_rate, g[t], p[t]);
    }
  }
  return {from_params(initial, p), epoch_loss / static_cast<double>(data.size())};
}

EvalMetrics evaluate_model(const ModelSpec& spec, const Weights& weights, const LocalDataset& data) {
  spec.validate();
  check_weights(spec, weights);
  check_data(spec, data);
  if (data.empty()) throw std::invalid_argument("evaluate_model: empty dataset");
  const Params p = to_params(weights);
  Network net(spec);
  constexpr std::size_t kChunk = 1024;
  std::vector<std::size_t> rows;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    loss_sum += net.run(p, data, rows, nullptr, &correct) * static_cast<double>(rows.size());
  }
  const auto n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n, data.size()};
}

TrainingClient::TrainingClient(ModelSpec spec, LocalDataset train, LocalDataset test, std::uint64_t seed)
    : spec_(spec), train_(std::move(train)), test_(std::move(test)), seed_(seed), local_(init_weights(spec, seed)) {
  if (train_.empty()) throw std::invalid_argument("TrainingClient needs at least one training example");
}

Weights TrainingClient::get_weights() { return local_; }

FitOutput TrainingClient::fit(const Weights& weights, const ConfigMap& config) {
  const auto t0 = std::chrono::steady_clock::now();
  SgdOptions opts;
  opts.epochs = static_cast<int>(config.get_int("epochs", 1));
  opts.learning_rate = config.get_double("lr", 0.1);
  opts.proximal_mu = config.get_double("proximal_mu", 0.0);
  opts.batch_size = static_cast<std::size_t>(config.get_int("batch_size", 32));
  opts.seed = config.contains("seed")
                  ? derive_seed(seed_, {static_cast<std::uint64_t>(config.get_int("seed", 0))})
                  : seed_;
  SgdResult r = sgd_fit(spec_, weights, train_, opts, &weights);
  local_ = r.weights;
  FitOutput out{std::move(r.weights), train_.size(), {}};
  out.metrics.set_double("train_loss", r.train_loss);
  out.metrics.set_double("fit_duration_s",
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return out;
}

EvaluateOutput TrainingClient::evaluate(const Weights& weights, const ConfigMap&) {
  const LocalDataset& data = test_.empty() ? train_ : test_;
  EvalMetrics m = evaluate_model(spec_, weights, data);
  EvaluateOutput out{m.loss, m.num_examples, {}};
  out.metrics.set_double("accuracy", m.accuracy);
  return out;
}

}  // namespace fl
