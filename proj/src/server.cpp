#include "fl/server.hpp"

#include <spdlog/spdlog.h>

#include <thread>
#include <tuple>

#include "fl/strategies.hpp"

namespace fl {

bool same_outcome(const RoundRecord& a, const RoundRecord& b) {
  auto tie = [](const RoundRecord& r) {
    return std::tie(r.round, r.num_selected, r.num_success, r.num_failures, r.updated, r.num_excluded,
                    r.update_divergence, r.eval_selected, r.eval_success, r.eval_failures, r.eval_failed, r.loss,
                    r.accuracy, r.centralized_loss, r.centralized_accuracy, r.bytes_fit, r.bytes_evaluate,
                    r.bytes_total);
  };
  return tie(a) == tie(b);
}

void ServerConfig::validate() const {
  if (num_rounds < 1) throw std::invalid_argument("num_rounds must be >= 1");
}

namespace {

using Seconds = std::chrono::duration<double>;

struct Exchange {
  std::optional<Message> reply;
  std::optional<Failure> failure;
  HistoryEntry entry;
};

/// Issues one instruction and classifies the outcome. Disconnected and
/// misbehaving clients are dropped from the registry.
Exchange exchange(ClientManager& clients, ClientHandle& client, Message instruction, int round, Phase phase,
                  std::chrono::milliseconds timeout) {
  Exchange ex;
  Connection& conn = client.connection();
  const std::uint64_t sent0 = conn.bytes_sent();
  const std::uint64_t recv0 = conn.bytes_received();
  const auto t0 = Clock::now();
  Outcome outcome = Outcome::Success;
  std::string detail;
  try {
    ex.reply = request(conn, instruction, timeout);
  } catch (const ClientError& e) {
    outcome = Outcome::ClientError;
    detail = e.what();
  } catch (const TimeoutError& e) {
    outcome = Outcome::Timeout;
    detail = e.what();
  } catch (const ConnectionClosed& e) {
    outcome = Outcome::Disconnected;
    detail = e.what();
  } catch (const ProtocolError& e) {
    outcome = Outcome::ProtocolViolation;
    detail = e.what();
  } catch (const TransportError& e) {
    outcome = Outcome::Disconnected;
    detail = e.what();
  }
  ex.entry = HistoryEntry{round,
                          phase,
                          std::chrono::duration_cast<Seconds>(Clock::now() - t0).count(),
                          conn.bytes_received() - recv0,
                          conn.bytes_sent() - sent0,
                          outcome};
  if (outcome != Outcome::Success) {
    ex.failure = Failure{client.id(), outcome, detail};
    if (outcome == Outcome::Disconnected || outcome == Outcome::ProtocolViolation) clients.unregister(client.id());
  }
  return ex;
}

template <class Instruction>
std::vector<Exchange> fan_out(ClientManager& clients, std::vector<Instruction>& instructions, int round, Phase phase,
                              std::chrono::milliseconds timeout) {
  std::vector<Exchange> out(instructions.size());
  std::vector<std::thread> workers;
  workers.reserve(instructions.size());
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    workers.emplace_back([&, i] {
      auto& ins = instructions[i];
      out[i] = exchange(clients, *ins.client, Message(std::move(ins.ins)), round, phase, timeout);
      ins.client->record(out[i].entry);
    });
  }
  for (auto& w : workers) w.join();
  return out;
}

}  // namespace

FitRoundOutcome fit_round(Strategy& strategy, ClientManager& clients, const Weights& global, int round,
                          std::chrono::milliseconds timeout) {
  FitRoundOutcome outcome;
  RoundRecord& rec = outcome.record;
  rec.round = round;
  auto instructions = strategy.configure_fit(round, global, clients);
  rec.num_selected = instructions.size();

  std::vector<std::string> ids;
  for (const auto& ins : instructions) ids.push_back(ins.client->id());
  auto exchanges = fan_out(clients, instructions, round, Phase::Fit, timeout);

  std::vector<FitResult> results;
  std::vector<Failure> failures;
  for (std::size_t i = 0; i < exchanges.size(); ++i) {
    auto& ex = exchanges[i];
    rec.bytes_fit += ex.entry.bytes_up + ex.entry.bytes_down;
    if (ex.failure) {
      failures.push_back(std::move(*ex.failure));
      continue;
    }
    auto& res = std::get<FitRes>(*ex.reply);
    if (!res.weights.same_layout(global)) {
      failures.push_back({ids[i], Outcome::ProtocolViolation, "fit result does not match the model layout"});
      continue;
    }
    results.push_back({ids[i], std::move(res.weights), res.num_examples, std::move(res.metrics)});
  }
  rec.num_success = results.size();
  rec.num_failures = failures.size();
  rec.update_divergence = mean_pairwise_distance(results);

  try {
    FitAggregate agg = strategy.aggregate_fit(round, results, failures);
    rec.num_excluded = agg.excluded;
    outcome.weights = std::move(agg.weights);
  } catch (const AggregationError& e) {
    spdlog::warn("round={} aggregation rejected: {}", round, e.what());
  }
  rec.updated = outcome.weights.has_value();
  rec.bytes_total = rec.bytes_fit;
  return outcome;
}

EvaluateRoundOutcome evaluate_round(Strategy& strategy, ClientManager& clients, const Weights& global, int round,
                                    std::chrono::milliseconds timeout) {
  EvaluateRoundOutcome outcome;
  RoundRecord& rec = outcome.record;
  rec.round = round;
  std::vector<EvaluateInstruction> instructions;
  try {
    instructions = strategy.configure_evaluate(round, global, clients);
  } catch (const InsufficientClients& e) {
    spdlog::warn("round={} evaluation skipped: {}", round, e.what());
    rec.eval_failed = true;
    return outcome;
  }
  if (instructions.empty()) return outcome;
  rec.eval_selected = instructions.size();

  std::vector<std::string> ids;
  for (const auto& ins : instructions) ids.push_back(ins.client->id());
  auto exchanges = fan_out(clients, instructions, round, Phase::Evaluate, timeout);

  std::vector<EvaluateResult> results;
  std::vector<Failure> failures;
  for (std::size_t i = 0; i < exchanges.size(); ++i) {
    auto& ex = exchanges[i];
    rec.bytes_evaluate += ex.entry.bytes_up + ex.entry.bytes_down;
    if (ex.failure) {
      failures.push_back(std::move(*ex.failure));
      continue;
    }
    auto& res = std::get<EvaluateRes>(*ex.reply);
    results.push_back({ids[i], res.loss, res.num_examples, std::move(res.metrics)});
  }
  rec.eval_success = results.size();
  rec.eval_failures = failures.size();
  outcome.aggregate = strategy.aggregate_evaluate(round, results, failures);
  if (outcome.aggregate) {
    rec.loss = outcome.aggregate->loss;
    rec.accuracy = outcome.aggregate->accuracy;
  } else {
    rec.eval_failed = true;
  }
  rec.bytes_total = rec.bytes_evaluate;
  return outcome;
}

namespace {
std::string fmt_opt(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : "na"; }
}  // namespace

RunResult run(Strategy& strategy, ClientManager& clients, const ServerConfig& config, Weights initial,
              const CentralizedEval& centralized) {
  config.validate();
  RunResult result;
  result.final_weights = std::move(initial);
  if (!clients.wait_for(config.min_available_clients, config.availability_wait)) {
    result.error = "only " + std::to_string(clients.num_available()) + " of " +
                   std::to_string(config.min_available_clients) + " required clients connected";
    spdlog::error("{}", result.error);
    return result;
  }
  for (int round = 1; round <= config.num_rounds; ++round) {
    const auto t0 = Clock::now();
    FitRoundOutcome fit;
    try {
      fit = fit_round(strategy, clients, result.final_weights, round, config.read_timeout);
    } catch (const InsufficientClients& e) {
      result.error = "round " + std::to_string(round) + ": " + e.what();
      spdlog::error("{}", result.error);
      return result;
    }
    if (fit.weights) result.final_weights = std::move(*fit.weights);
    RoundRecord rec = fit.record;

    EvaluateRoundOutcome eval = evaluate_round(strategy, clients, result.final_weights, round, config.read_timeout);
    rec.eval_selected = eval.record.eval_selected;
    rec.eval_success = eval.record.eval_success;
    rec.eval_failures = eval.record.eval_failures;
    rec.eval_failed = eval.record.eval_failed;
    rec.loss = eval.record.loss;
    rec.accuracy = eval.record.accuracy;
    rec.bytes_evaluate = eval.record.bytes_evaluate;
    rec.bytes_total = rec.bytes_fit + rec.bytes_evaluate;

    if (centralized) {
      auto [loss, acc] = centralized(result.final_weights);
      rec.centralized_loss = loss;
      rec.centralized_accuracy = acc;
    }
    rec.wall_time_s = std::chrono::duration_cast<Seconds>(Clock::now() - t0).count();
    spdlog::info(
        "round={} strategy={} selected={} success={} failures={} updated={} loss={} accuracy={} "
        "central_loss={} central_accuracy={} bytes={} wall_s={:.3f}",
        rec.round, strategy.name(), rec.num_selected, rec.num_success, rec.num_failures, rec.updated,
        fmt_opt(rec.loss), fmt_opt(rec.accuracy), fmt_opt(rec.centralized_loss), fmt_opt(rec.centralized_accuracy),
        rec.bytes_total, rec.wall_time_s);
    result.rounds.push_back(rec);
  }
  result.completed = true;
  return result;
}

}  // namespace fl
