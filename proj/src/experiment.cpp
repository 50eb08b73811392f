#include "fl/experiment.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fl/rng.hpp"

namespace fl {

namespace {

// Sub-stream ids for derive_seed(config.seed, ...).
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kPartitionStream = 2;
constexpr std::uint64_t kInitStream = 3;
constexpr std::uint64_t kClientStream = 4;
constexpr std::uint64_t kManagerStream = 5;

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

std::chrono::milliseconds seconds_to_ms(double s) {
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(s * 1000.0)));
}

ServerConfig server_config(const ExperimentConfig& config) {
  ServerConfig sc;
  sc.num_rounds = config.rounds;
  sc.read_timeout = seconds_to_ms(config.read_timeout_s);
  sc.min_available_clients = config.num_clients;
  sc.availability_wait = seconds_to_ms(config.wait_for_clients_s);
  sc.seed = config.seed;
  return sc;
}

CentralizedEval centralized_eval(const ModelSpec& model, const LocalDataset& holdout) {
  if (holdout.empty()) return {};
  return [model, &holdout](const Weights& w) {
    EvalMetrics m = evaluate_model(model, w, holdout);
    return std::make_pair(m.loss, m.accuracy);
  };
}

ConnectCallback register_with(ClientManager& manager) {
  return [&manager](std::shared_ptr<Connection> conn, ClientHello hello) {
    manager.register_client(std::make_shared<ClientHandle>(hello.client_name, hello.capabilities, std::move(conn)));
  };
}

RunResult drive(const ExperimentConfig& config, const ExperimentData& data, ClientManager& manager) {
  auto strategy = make_strategy(config);
  spdlog::info("strategy {} over {} clients for {} rounds", strategy->name(), config.num_clients, config.rounds);
  return run(*strategy, manager, server_config(config), initial_weights(config, data.model),
             centralized_eval(data.model, data.holdout));
}

}  // namespace

ExperimentData prepare_data(const ExperimentConfig& config) {
  ExperimentData out;
  LocalDataset all;
  if (config.data_source == "csv") {
    all = load_csv(config.csv_path);
  } else {
    SyntheticSpec spec = config.synthetic;
    spec.seed = derive_seed(config.seed, {kDataStream});
    all = make_synthetic(spec, 0);
    if (config.holdout_examples > 0) {
      SyntheticSpec hs = spec;
      hs.num_examples = config.holdout_examples;
      out.holdout = make_synthetic(hs, 1);
    }
  }
  out.model.architecture = config.architecture;
  out.model.input_dim = all.num_features;
  out.model.num_classes = all.num_classes;
  out.model.hidden_width = config.architecture == Architecture::Mlp ? config.hidden_width : 0;

  PartitionSpec ps;
  ps.num_clients = config.num_clients;
  ps.iid_fraction = config.iid_fraction;
  ps.seed = derive_seed(config.seed, {kPartitionStream});
  for (auto& part : partition(all, ps)) {
    auto [train, test] = split_train_test(part, config.local_test_fraction);
    out.train.push_back(std::move(train));
    out.test.push_back(std::move(test));
  }
  return out;
}

Weights initial_weights(const ExperimentConfig& config, const ModelSpec& model) {
  return init_weights(model, derive_seed(config.seed, {kInitStream}));
}

std::string client_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "client-%04zu", index);
  return buf;
}

ExperimentClient::ExperimentClient(TrainingClient base, ComputeProfile compute, std::vector<FailureInjection> failures,
                                   std::chrono::milliseconds timeout_delay)
    : base_(std::move(base)),
      failures_(std::move(failures)),
      timeout_delay_(timeout_delay),
      fit_(throttle_compute([this](const Weights& w, const ConfigMap& c) { return base_.fit(w, c); }, compute)) {}

FitOutput ExperimentClient::fit(const Weights& weights, const ConfigMap& config) {
  const auto round = config.get_int("round", 0);
  for (const auto& f : failures_) {
    if (f.round != round) continue;
    switch (f.mode) {
      case FailureMode::Error: throw std::runtime_error("injected failure in round " + std::to_string(round));
      case FailureMode::Drop: throw DropConnection();
      case FailureMode::Timeout: std::this_thread::sleep_for(timeout_delay_); break;
    }
  }
  return fit_(weights, config);
}

std::unique_ptr<ExperimentClient> make_experiment_client(const ExperimentConfig& config, const ExperimentData& data,
                                                         std::size_t index) {
  TrainingClient base(data.model, data.train.at(index), data.test.at(index),
                      derive_seed(config.seed, {kClientStream, index}));
  const auto delay = seconds_to_ms(config.read_timeout_s) + std::chrono::milliseconds(500);
  return std::make_unique<ExperimentClient>(std::move(base), config.profile_for(index).compute,
                                            config.failures_for(index), delay);
}

RunResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const ExperimentData data = prepare_data(config);
  ClientManager manager(derive_seed(config.seed, {kManagerStream}));

  ServerEndpoint endpoint;
  endpoint.read_timeout = seconds_to_ms(config.read_timeout_s);
  endpoint.max_clients = config.num_clients;
  Server server(endpoint, register_with(manager));

  std::vector<std::unique_ptr<ExperimentClient>> clients;
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < config.num_clients; ++i) {
    clients.push_back(make_experiment_client(config, data, i));
  }
  for (std::size_t i = 0; i < config.num_clients; ++i) {
    const LinkProfile link = config.profile_for(i).link;
    const std::string name = client_name(i);
    Dialer dialer = [&server, link, name]() {
      auto [server_end, client_end] = make_loopback_pair();
      server.attach(shape_stream(std::move(server_end), link), name);
      return dial(shape_stream(std::move(client_end), link), ClientHello{name, {}}, "loopback");
    };
    threads.emplace_back([dialer = std::move(dialer), &client = *clients[i], name]() {
      try {
        start_client(dialer, client);
      } catch (const std::exception& e) {
        spdlog::debug("{} stopped: {}", name, e.what());
      }
    });
  }

  RunResult result;
  try {
    result = drive(config, data, manager);
  } catch (...) {
    server.shutdown();
    for (auto& t : threads) t.join();
    throw;
  }
  server.shutdown();
  for (auto& t : threads) t.join();
  return result;
}

RunResult serve_experiment(const ExperimentConfig& config) {
  config.validate();
  const ExperimentData data = prepare_data(config);
  ClientManager manager(derive_seed(config.seed, {kManagerStream}));
  ServerEndpoint endpoint;
  endpoint.bind_address = config.address;
  endpoint.read_timeout = seconds_to_ms(config.read_timeout_s);
  Server server(endpoint, register_with(manager));
  server.listen();
  spdlog::info("listening on {} (port {})", config.address, server.port());
  RunResult result = drive(config, data, manager);
  server.shutdown();
  return result;
}

ClientExit run_experiment_client(const ExperimentConfig& config, std::size_t index) {
  config.validate();
  if (index >= config.num_clients) {
    throw ConfigError("", "client index " + std::to_string(index) + " is not below experiment.num_clients " +
                              std::to_string(config.num_clients));
  }
  const ExperimentData data = prepare_data(config);
  auto client = make_experiment_client(config, data, index);
  const LinkProfile link = config.profile_for(index).link;
  const std::string name = client_name(index);
  const auto wait = seconds_to_ms(config.wait_for_clients_s);
  Dialer dialer = [&]() -> std::shared_ptr<Connection> {
    const auto deadline = Clock::now() + wait;
    for (;;) {
      try {
        auto stream = tcp_connect(config.address, std::chrono::seconds(5));
        return dial(shape_stream(std::move(stream), link), ClientHello{name, {}}, config.address);
      } catch (const ConnectError&) {
        if (Clock::now() >= deadline) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    }
  };
  return start_client(dialer, *client);
}

std::string metrics_csv(const std::vector<RoundRecord>& rounds) {
  std::ostringstream o;
  o << kMetricsHeader << "\n";
  for (const auto& r : rounds) {
    o << r.round << ',' << fmt_optional(r.loss) << ',' << fmt_optional(r.accuracy) << ','
      << fmt_optional(r.centralized_loss) << ',' << fmt_optional(r.centralized_accuracy) << ',' << r.num_selected
      << ',' << r.num_success << ',' << r.num_failures << ',' << r.num_excluded << ',' << (r.updated ? 1 : 0) << ','
      << fmt_double(r.update_divergence) << ',' << r.eval_selected << ',' << r.eval_success << ','
      << r.eval_failures << ',' << r.bytes_fit << ',' << r.bytes_evaluate << ',' << r.bytes_total << "\n";
  }
  return o.str();
}

std::string timing_csv(const std::vector<RoundRecord>& rounds) {
  std::ostringstream o;
  o << "round,wall_time_s\n";
  for (const auto& r : rounds) o << r.round << ',' << fmt_double(r.wall_time_s) << "\n";
  return o.str();
}

void write_outputs(const ExperimentConfig& config, const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  };
  write("metrics.csv", metrics_csv(result.rounds));
  write("timing.csv", timing_csv(result.rounds));
  write("config_echo.ini", to_ini(config));
  const auto bytes = encode_weights(result.final_weights);
  write("final_weights.bin", std::string(bytes.begin(), bytes.end()));
}

std::uint64_t dummy_weights_bytes(std::uint64_t n) {
  // count + name16 + dtype + rank + one extent + data
  return 4 + 2 + 5 + 1 + 1 + 4 + 4 * n;
}

std::pair<std::uint64_t, std::uint64_t> fit_frame_sizes(const ExperimentConfig& config, std::uint64_t weights_bytes) {
  const std::uint64_t empty = weights_byte_size(Weights{});
  const ConfigMap fit_config = make_strategy(config)->fit_config(1);
  ConfigMap metrics;
  metrics.set_double("train_loss", 0.0);
  metrics.set_double("fit_duration_s", 0.0);
  const std::uint64_t ins = encoded_size(FitIns{Weights{}, fit_config}) - empty + weights_bytes;
  const std::uint64_t res = encoded_size(FitRes{Weights{}, 1, metrics}) - empty + weights_bytes;
  return {ins, res};
}

ReplayReport replay_bytes(const ExperimentConfig& config) {
  ReplayReport report;
  if (config.dummy_elements == 0u) {
    report.weights_bytes = weights_byte_size(Weights{});
  } else if (config.dummy_elements) {
    report.weights_bytes = dummy_weights_bytes(*config.dummy_elements);
  } else {
    ModelSpec model;
    model.architecture = config.architecture;
    if (config.data_source == "csv") {
      const LocalDataset d = load_csv(config.csv_path);
      model.input_dim = d.num_features;
      model.num_classes = d.num_classes;
    } else {
      model.input_dim = config.synthetic.num_features;
      model.num_classes = config.synthetic.num_classes;
    }
    model.hidden_width = config.architecture == Architecture::Mlp ? config.hidden_width : 0;
    report.weights_bytes = weights_byte_size(init_weights(model, 0));
  }
  const auto [ins, res] = fit_frame_sizes(config, report.weights_bytes);
  for (double rate : config.sampling_rates) {
    ReplayRow row;
    row.sampling_rate = rate;
    row.sample_size = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(rate * static_cast<double>(config.num_clients))));
    row.fit_ins_bytes = ins;
    row.fit_res_bytes = res;
    row.bytes_per_round = row.sample_size * (ins + res);
    report.rows.push_back(row);
  }
  return report;
}

std::string replay_csv(const ReplayReport& report) {
  std::ostringstream o;
  o << "sampling_rate,sample_size,fit_ins_bytes,fit_res_bytes,bytes_per_round,gb_per_round\n";
  for (const auto& r : report.rows) {
    o << fmt_double(r.sampling_rate) << ',' << r.sample_size << ',' << r.fit_ins_bytes << ',' << r.fit_res_bytes
      << ',' << r.bytes_per_round << ',' << fmt_double(static_cast<double>(r.bytes_per_round) / 1e9) << "\n";
  }
  return o.str();
}

}  // namespace fl
