#include "fl/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fl/kernels.hpp"
#include "fl/rng.hpp"

namespace fl {

namespace {

template <class T>
std::vector<std::size_t> order_by_client_id(std::span<const T> items) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return items[a].client_id < items[b].client_id; });
  return order;
}

void accumulate_tensor(std::span<double> acc, const Tensor& t, double weight) {
  if (t.dtype() == DType::F32) {
    kernels::weighted_accumulate(acc, t.f32(), weight);
  } else {
    kernels::weighted_accumulate(acc, t.f64(), weight);
  }
}

// Rounding can push a weighted mean one ulp outside the inputs' range; pull
// it back so the result stays a convex combination (and identical inputs
// come back unchanged).
void clamp_to_hull(std::span<double> mean, std::span<const FitResult> results, std::span<const std::size_t> order,
                   std::size_t tensor) {
  std::vector<double> lo(mean.size(), std::numeric_limits<double>::infinity());
  std::vector<double> hi(mean.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t k : order) {
    if (results[k].num_examples == 0) continue;
    const Tensor& t = results[k].weights[tensor];
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double v = t.at(i);
      lo[i] = std::min(lo[i], v);
      hi[i] = std::max(hi[i], v);
    }
  }
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = std::clamp(mean[i], lo[i], hi[i]);
}

std::vector<double> flatten(const Weights& w) {
  std::vector<double> out;
  out.reserve(w.num_elements());
  for (const auto& t : w.tensors()) {
    if (t.dtype() == DType::F32) {
      out.insert(out.end(), t.f32().begin(), t.f32().end());
    } else {
      out.insert(out.end(), t.f64().begin(), t.f64().end());
    }
  }
  return out;
}

Weights unflatten_like(const Weights& layout, std::span<const double> values) {
  Weights out;
  std::size_t offset = 0;
  for (const auto& t : layout.tensors()) {
    Tensor copy = Tensor::zeros(t.name(), std::vector<std::uint32_t>(t.shape().begin(), t.shape().end()), t.dtype());
    copy.assign(values.subspan(offset, t.size()));
    offset += t.size();
    out.add(std::move(copy));
  }
  return out;
}

}  // namespace

Weights fedavg_aggregate(std::span<const FitResult> results) {
  if (results.empty()) throw AggregationError("fedavg: no results to aggregate");
  const Weights& layout = results.front().weights;
  double total = 0.0;
  for (const auto& r : results) {
    if (!r.weights.same_layout(layout)) {
      throw AggregationError("fedavg: weights from client '" + r.client_id + "' do not match the expected layout");
    }
    total += static_cast<double>(r.num_examples);
  }
  if (total == 0.0) throw AggregationError("fedavg: total number of examples is zero");

  const auto order = order_by_client_id(results);
  Weights out;
  for (std::size_t ti = 0; ti < layout.size(); ++ti) {
    const Tensor& proto = layout[ti];
    std::vector<double> acc(proto.size(), 0.0);
    for (std::size_t k : order) {
      accumulate_tensor(acc, results[k].weights[ti], static_cast<double>(results[k].num_examples));
    }
    kernels::divide(acc, total);
    clamp_to_hull(acc, results, order, ti);
    Tensor t = Tensor::zeros(proto.name(), std::vector<std::uint32_t>(proto.shape().begin(), proto.shape().end()),
                             proto.dtype());
    t.assign(acc);
    out.add(std::move(t));
  }
  return out;
}

std::optional<Weights> fault_tolerant_aggregate(std::span<const FitResult> results, std::size_t min_completion) {
  if (results.size() < min_completion) return std::nullopt;
  return fedavg_aggregate(results);
}

Weights qfedavg_aggregate(const Weights& global, std::span<const QFedAvgInput> inputs, double q, double lipschitz) {
  if (inputs.empty()) throw AggregationError("qfedavg: no results to aggregate");
  if (!(lipschitz > 0.0)) throw AggregationError("qfedavg: Lipschitz constant must be positive");
  if (q < 0.0) throw AggregationError("qfedavg: q must be non-negative");
  for (const auto& in : inputs) {
    if (in.weights == nullptr || !in.weights->same_layout(global)) {
      throw AggregationError("qfedavg: weights from client '" + in.client_id + "' do not match the global layout");
    }
  }
  const std::vector<double> base = flatten(global);
  std::vector<double> numerator(base.size(), 0.0);
  std::vector<double> delta(base.size());
  double denominator = 0.0;

  for (std::size_t k : order_by_client_id(inputs)) {
    const std::vector<double> local = flatten(*inputs[k].weights);
    for (std::size_t i = 0; i < base.size(); ++i) delta[i] = lipschitz * (base[i] - local[i]);
    const double loss = std::max(inputs[k].train_loss, kLossFloor);
    const double loss_q = std::pow(loss, q);
    denominator += q * std::pow(loss, q - 1.0) * kernels::squared_norm(delta) + lipschitz * loss_q;
    kernels::weighted_accumulate(numerator, delta, loss_q);
  }
  std::vector<double> updated(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) updated[i] = base[i] - numerator[i] / denominator;
  return unflatten_like(global, updated);
}

std::optional<EvaluateAggregate> weighted_loss_avg(std::span<const EvaluateResult> results) {
  if (results.empty()) return std::nullopt;
  double n = 0.0, loss = 0.0, acc = 0.0;
  for (std::size_t k : order_by_client_id(results)) {
    const auto& r = results[k];
    const double w = static_cast<double>(r.num_examples);
    n += w;
    loss += w * r.loss;
    acc += w * r.metrics.get_double("accuracy", 0.0);
  }
  return EvaluateAggregate{loss / n, acc / n};
}

double mean_pairwise_distance(std::span<const FitResult> results) {
  if (results.size() < 2) return 0.0;
  std::vector<std::vector<double>> flat;
  for (std::size_t k : order_by_client_id(results)) flat.push_back(flatten(results[k].weights));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < flat.size(); ++a) {
    for (std::size_t b = a + 1; b < flat.size(); ++b) {
      if (flat[a].size() != flat[b].size()) throw AggregationError("pairwise distance: layout mismatch");
      sum += std::sqrt(kernels::squared_distance(flat[a], flat[b]));
      ++pairs;
    }
  }
  return sum / static_cast<double>(pairs);
}

void FedAvgConfig::validate() const {
  if (clients_per_round < 1) throw std::invalid_argument("clients_per_round must be >= 1");
  if (local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 0) throw std::invalid_argument("batch_size must be >= 0");
}

FedAvg::FedAvg(FedAvgConfig config) : config_(config) { config_.validate(); }

std::uint64_t FedAvg::sample_stream(int round, std::uint64_t phase) const {
  return derive_seed(config_.seed, {static_cast<std::uint64_t>(round), phase});
}

ConfigMap FedAvg::fit_config(int round) const {
  ConfigMap c;
  c.set_int("epochs", config_.local_epochs);
  c.set_double("lr", config_.learning_rate);
  c.set_int("round", round);
  c.set_int("seed", static_cast<std::int64_t>(derive_seed(config_.seed, {static_cast<std::uint64_t>(round), 7})));
  if (config_.batch_size > 0) c.set_int("batch_size", config_.batch_size);
  return c;
}

ConfigMap FedAvg::evaluate_config(int round) const {
  ConfigMap c;
  c.set_int("round", round);
  return c;
}

std::vector<FitInstruction> FedAvg::configure_fit(int round, const Weights& global, ClientManager& clients) {
  const ConfigMap config = fit_config(round);
  std::vector<FitInstruction> out;
  for (auto& client : clients.sample(config_.clients_per_round, sample_stream(round, 0))) {
    out.push_back({std::move(client), FitIns{global, config}});
  }
  return out;
}

std::vector<EvaluateInstruction> FedAvg::configure_evaluate(int round, const Weights& global, ClientManager& clients) {
  if (config_.eval_clients == 0) return {};
  const ConfigMap config = evaluate_config(round);
  std::vector<EvaluateInstruction> out;
  for (auto& client : clients.sample(config_.eval_clients, sample_stream(round, 1))) {
    out.push_back({std::move(client), EvaluateIns{global, config}});
  }
  return out;
}

FitAggregate FedAvg::aggregate_fit(int, std::span<const FitResult> results, std::span<const Failure>) {
  if (results.empty()) return {};
  return {fedavg_aggregate(results), 0};
}

std::optional<EvaluateAggregate> FedAvg::aggregate_evaluate(int, std::span<const EvaluateResult> results,
                                                            std::span<const Failure>) {
  return weighted_loss_avg(results);
}

FaultTolerantFedAvg::FaultTolerantFedAvg(FedAvgConfig config, std::size_t min_completion)
    : FedAvg(config), min_completion_(min_completion) {
  if (min_completion_ < 1 || min_completion_ > config_.clients_per_round) {
    throw std::invalid_argument("min_completion must be in [1, clients_per_round]");
  }
}

FitAggregate FaultTolerantFedAvg::aggregate_fit(int, std::span<const FitResult> results, std::span<const Failure>) {
  return {fault_tolerant_aggregate(results, min_completion_), 0};
}

FedProx::FedProx(FedAvgConfig config, double proximal_mu) : FedAvg(config), mu_(proximal_mu) {
  if (!(mu_ >= 0.0)) throw std::invalid_argument("proximal_mu must be >= 0");
}

ConfigMap FedProx::fit_config(int round) const {
  ConfigMap c = FedAvg::fit_config(round);
  c.set_double("proximal_mu", mu_);
  return c;
}

QFedAvg::QFedAvg(FedAvgConfig config, double q, double lipschitz) : FedAvg(config), q_(q), lipschitz_(lipschitz) {
  if (!(q_ >= 0.0)) throw std::invalid_argument("q must be >= 0");
  if (!(lipschitz_ > 0.0)) throw std::invalid_argument("lipschitz must be > 0");
}

std::vector<FitInstruction> QFedAvg::configure_fit(int round, const Weights& global, ClientManager& clients) {
  global_ = global;
  return FedAvg::configure_fit(round, global, clients);
}

FitAggregate QFedAvg::aggregate_fit(int, std::span<const FitResult> results, std::span<const Failure>) {
  std::vector<QFedAvgInput> inputs;
  std::size_t excluded = 0;
  for (const auto& r : results) {
    const auto loss = r.metrics.maybe_double("train_loss");
    if (!loss) {
      ++excluded;
      continue;
    }
    inputs.push_back({r.client_id, &r.weights, *loss});
  }
  if (inputs.empty()) return {std::nullopt, excluded};
  return {qfedavg_aggregate(global_, inputs, q_, lipschitz_), excluded};
}

FedFS::FedFS(FedAvgConfig config, double fast_fraction, double slow_epoch_scale, std::size_t history_window)
    : FedAvg(config),
      fast_fraction_(fast_fraction),
      slow_epoch_scale_(slow_epoch_scale),
      history_window_(history_window) {
  if (!(fast_fraction_ > 0.0 && fast_fraction_ <= 1.0)) throw std::invalid_argument("fast_fraction must be in (0, 1]");
  if (!(slow_epoch_scale_ > 0.0 && slow_epoch_scale_ <= 1.0)) {
    throw std::invalid_argument("slow_epoch_scale must be in (0, 1]");
  }
  if (history_window_ < 1) throw std::invalid_argument("history_window must be >= 1");
}

int FedFS::slow_epochs() const {
  return std::max(1, static_cast<int>(std::lround(config_.local_epochs * slow_epoch_scale_)));
}

std::vector<FitInstruction> FedFS::configure_fit(int round, const Weights& global, ClientManager& clients) {
  const std::size_t want = config_.clients_per_round;
  // A seeded permutation of everyone; ties in speed keep this order, so with
  // no history the pick equals FedAvg's sample(C) for the same round.
  auto pool = clients.sample(std::max(want, clients.num_available()), sample_stream(round, 0));

  std::vector<double> speed(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) speed[i] = pool[i]->trailing_fit_duration(history_window_).value_or(0.0);
  std::vector<std::size_t> by_speed(pool.size());
  std::iota(by_speed.begin(), by_speed.end(), std::size_t{0});
  std::stable_sort(by_speed.begin(), by_speed.end(), [&](std::size_t a, std::size_t b) { return speed[a] < speed[b]; });

  const auto num_fast = std::min(want, static_cast<std::size_t>(std::ceil(fast_fraction_ * static_cast<double>(want))));
  std::vector<bool> taken(pool.size(), false);
  std::vector<std::size_t> picks;
  double fastest_cutoff = 0.0;
  for (std::size_t i = 0; i < num_fast; ++i) {
    taken[by_speed[i]] = true;
    picks.push_back(by_speed[i]);
    fastest_cutoff = std::max(fastest_cutoff, speed[by_speed[i]]);
  }
  for (std::size_t i = 0; i < pool.size() && picks.size() < want; ++i) {
    if (!taken[i]) {
      taken[i] = true;
      picks.push_back(i);
    }
  }

  const ConfigMap config = fit_config(round);
  ConfigMap slow_config = config;
  slow_config.set_int("epochs", slow_epochs());
  std::vector<FitInstruction> out;
  for (std::size_t n = 0; n < picks.size(); ++n) {
    const std::size_t i = picks[n];
    const bool slow = n >= num_fast && speed[i] > fastest_cutoff;
    out.push_back({pool[i], FitIns{global, slow ? slow_config : config}});
  }
  return out;
}

}  // namespace fl
