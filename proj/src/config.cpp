#include "fl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace fl {

namespace {

namespace pt = boost::property_tree;

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& text) {
  T value{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
  return value;
}

double parse_double(const std::string& key, const std::string& text, bool allow_inf = false) {
  if (allow_inf && (text == "inf" || text == "unlimited")) return std::numeric_limits<double>::infinity();
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ConfigError(key, "expected a finite number, got '" + text + "'");
  }
  return value;
}

FailureMode parse_failure_mode(const std::string& key, const std::string& text) {
  if (text == "error") return FailureMode::Error;
  if (text == "timeout") return FailureMode::Timeout;
  if (text == "drop") return FailureMode::Drop;
  throw ConfigError(key, "expected error, timeout or drop, got '" + text + "'");
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

template <typename T>
Setter int_field(T& field) {
  return [&field](const std::string& key, const std::string& value) { field = parse_integer<T>(key, value); };
}

Setter double_field(double& field) {
  return [&field](const std::string& key, const std::string& value) { field = parse_double(key, value); };
}

Setter string_field(std::string& field) {
  return [&field](const std::string&, const std::string& value) { field = value; };
}

void apply_section(const std::string& section, const pt::ptree& tree, const std::map<std::string, Setter>& setters) {
  for (const auto& [name, node] : tree) {
    const std::string key = section + "." + name;
    auto it = setters.find(name);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    it->second(key, node.data());
  }
}

std::size_t parse_client_index(const std::string& key, const std::string& text) {
  return parse_integer<std::size_t>(key, text);
}

void apply_client_section(ExperimentConfig& cfg, const std::string& section, const pt::ptree& tree) {
  const std::size_t index = parse_client_index(section, section.substr(std::string("client.").size()));
  if (cfg.client_profiles.count(index)) throw ConfigError(section, "duplicate client section");
  ClientProfile& profile = cfg.client_profiles[index];
  apply_section(section, tree,
                {{"bandwidth_bps",
                  [&](const std::string& k, const std::string& v) { profile.link.bandwidth_bps = parse_double(k, v, true); }},
                 {"latency_s", double_field(profile.link.latency_s)},
                 {"slowdown", double_field(profile.compute.slowdown)}});
}

void apply_failures(ExperimentConfig& cfg, const pt::ptree& tree) {
  // "<client>.<round> = mode"
  for (const auto& [name, node] : tree) {
    const std::string key = "failures." + name;
    const auto dot = name.find('.');
    if (dot == std::string::npos) throw ConfigError(key, "expected <client>.<round>");
    FailureInjection f;
    f.client = parse_integer<std::size_t>(key, name.substr(0, dot));
    f.round = parse_integer<int>(key, name.substr(dot + 1));
    f.mode = parse_failure_mode(key, node.data());
    cfg.failures.push_back(f);
  }
}

std::vector<double> parse_rates(const std::string& key, const std::string& text) {
  std::vector<double> rates;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError(key, "empty entry in list");
    rates.push_back(parse_double(key, item.substr(b, e - b + 1)));
  }
  if (rates.empty()) throw ConfigError(key, "empty list");
  return rates;
}

}  // namespace

const char* failure_mode_name(FailureMode mode) {
  switch (mode) {
    case FailureMode::Error: return "error";
    case FailureMode::Timeout: return "timeout";
    case FailureMode::Drop: return "drop";
  }
  return "?";
}

ClientProfile ExperimentConfig::profile_for(std::size_t client) const {
  auto it = client_profiles.find(client);
  return it == client_profiles.end() ? ClientProfile{} : it->second;
}

std::vector<FailureInjection> ExperimentConfig::failures_for(std::size_t client) const {
  std::vector<FailureInjection> out;
  for (const auto& f : failures) {
    if (f.client == client) out.push_back(f);
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (rounds < 1) throw ConfigError("experiment.rounds", "must be >= 1");
  if (num_clients < 1) throw ConfigError("experiment.num_clients", "must be >= 1");
  if (!(read_timeout_s > 0)) throw ConfigError("experiment.read_timeout_s", "must be > 0");
  if (!(wait_for_clients_s >= 0)) throw ConfigError("experiment.wait_for_clients_s", "must be >= 0");

  static const char* const kStrategies[] = {"fedavg", "fault_tolerant", "fedprox", "qfedavg", "fedfs"};
  bool known = false;
  for (const char* s : kStrategies) known = known || strategy == s;
  if (!known) throw ConfigError("strategy.name", "unknown strategy '" + strategy + "'");
  if (fedavg.clients_per_round < 1) throw ConfigError("strategy.clients_per_round", "must be >= 1");
  if (fedavg.clients_per_round > num_clients) {
    throw ConfigError("strategy.clients_per_round",
                      "sample size " + std::to_string(fedavg.clients_per_round) + " exceeds experiment.num_clients " +
                          std::to_string(num_clients));
  }
  if (fedavg.eval_clients > num_clients) {
    throw ConfigError("strategy.eval_clients", "sample size " + std::to_string(fedavg.eval_clients) +
                                                   " exceeds experiment.num_clients " + std::to_string(num_clients));
  }
  if (fedavg.local_epochs < 1) throw ConfigError("strategy.local_epochs", "must be >= 1");
  if (!(fedavg.learning_rate > 0)) throw ConfigError("strategy.learning_rate", "must be > 0");
  if (fedavg.batch_size < 0) throw ConfigError("strategy.batch_size", "must be >= 0");
  if (strategy == "fault_tolerant" && min_completion > fedavg.clients_per_round) {
    throw ConfigError("strategy.min_completion", "min_completion " + std::to_string(min_completion) +
                                                     " exceeds strategy.clients_per_round " +
                                                     std::to_string(fedavg.clients_per_round));
  }
  if (!(proximal_mu >= 0)) throw ConfigError("strategy.proximal_mu", "must be >= 0");
  if (!(q >= 0)) throw ConfigError("strategy.q", "must be >= 0");
  if (!(lipschitz > 0)) throw ConfigError("strategy.lipschitz", "must be > 0");
  if (!(fast_fraction > 0 && fast_fraction <= 1)) throw ConfigError("strategy.fast_fraction", "must be in (0, 1]");
  if (!(slow_epoch_scale > 0 && slow_epoch_scale <= 1)) {
    throw ConfigError("strategy.slow_epoch_scale", "must be in (0, 1]");
  }

  if (architecture == Architecture::Mlp && hidden_width < 1) throw ConfigError("model.hidden_width", "must be >= 1");

  if (data_source == "synthetic") {
    if (synthetic.num_examples < 1) throw ConfigError("data.num_examples", "must be >= 1");
    if (synthetic.num_features < 1) throw ConfigError("data.num_features", "must be >= 1");
    if (synthetic.num_classes < 2) throw ConfigError("data.num_classes", "must be >= 2");
    if (synthetic.num_classes > synthetic.num_features) {
      throw ConfigError("data.num_classes", "must not exceed data.num_features");
    }
    if (!(synthetic.class_separation > 0)) throw ConfigError("data.class_separation", "must be > 0");
    if (synthetic.num_examples < num_clients) {
      throw ConfigError("data.num_examples", "fewer examples than experiment.num_clients");
    }
  } else if (data_source == "csv") {
    if (csv_path.empty()) throw ConfigError("data.csv_path", "required when data.source = csv");
  } else {
    throw ConfigError("data.source", "expected synthetic or csv, got '" + data_source + "'");
  }
  if (!(local_test_fraction >= 0 && local_test_fraction < 1)) {
    throw ConfigError("data.local_test_fraction", "must be in [0, 1)");
  }
  if (!(iid_fraction >= 0 && iid_fraction <= 1)) throw ConfigError("partition.iid_fraction", "must be in [0, 1]");

  for (const auto& [index, profile] : client_profiles) {
    const std::string section = "client." + std::to_string(index);
    if (index >= num_clients) {
      throw ConfigError(section, "client id " + std::to_string(index) + " is not below experiment.num_clients " +
                                     std::to_string(num_clients));
    }
    if (!(profile.link.bandwidth_bps > 0)) throw ConfigError(section + ".bandwidth_bps", "must be > 0");
    if (!(profile.link.latency_s >= 0)) throw ConfigError(section + ".latency_s", "must be >= 0");
    if (!(profile.compute.slowdown >= 1)) throw ConfigError(section + ".slowdown", "must be >= 1");
  }
  for (const auto& f : failures) {
    const std::string key = "failures." + std::to_string(f.client) + "." + std::to_string(f.round);
    if (f.client >= num_clients) {
      throw ConfigError(key, "client id " + std::to_string(f.client) + " is not below experiment.num_clients " +
                                 std::to_string(num_clients));
    }
    if (f.round < 1 || f.round > rounds) throw ConfigError(key, "round outside 1..experiment.rounds");
  }
  for (double r : sampling_rates) {
    if (!(r > 0 && r <= 1)) throw ConfigError("replay.sampling_rates", "rates must be in (0, 1]");
  }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", "line " + std::to_string(e.line()) + ": " + e.message());
  }

  ExperimentConfig cfg;
  bool explicit_eval_clients = false;
  for (const auto& [section, node] : tree) {
    if (node.empty() && !node.data().empty()) throw ConfigError(section, "key outside any section");
    if (section == "experiment") {
      apply_section(section, node,
                    {{"rounds", int_field(cfg.rounds)},
                     {"num_clients", int_field(cfg.num_clients)},
                     {"seed", int_field(cfg.seed)},
                     {"read_timeout_s", double_field(cfg.read_timeout_s)},
                     {"address", string_field(cfg.address)},
                     {"output_dir", string_field(cfg.output_dir)},
                     {"wait_for_clients_s", double_field(cfg.wait_for_clients_s)}});
    } else if (section == "strategy") {
      apply_section(section, node,
                    {{"name", string_field(cfg.strategy)},
                     {"clients_per_round", int_field(cfg.fedavg.clients_per_round)},
                     {"eval_clients",
                      [&](const std::string& k, const std::string& v) {
                        cfg.fedavg.eval_clients = parse_integer<std::size_t>(k, v);
                        explicit_eval_clients = true;
                      }},
                     {"local_epochs", int_field(cfg.fedavg.local_epochs)},
                     {"learning_rate", double_field(cfg.fedavg.learning_rate)},
                     {"batch_size", int_field(cfg.fedavg.batch_size)},
                     {"min_completion", int_field(cfg.min_completion)},
                     {"proximal_mu", double_field(cfg.proximal_mu)},
                     {"q", double_field(cfg.q)},
                     {"lipschitz", double_field(cfg.lipschitz)},
                     {"fast_fraction", double_field(cfg.fast_fraction)},
                     {"slow_epoch_scale", double_field(cfg.slow_epoch_scale)}});
    } else if (section == "model") {
      apply_section(section, node,
                    {{"architecture",
                      [&](const std::string& k, const std::string& v) {
                        try {
                          cfg.architecture = parse_architecture(v);
                        } catch (const std::exception& e) {
                          throw ConfigError(k, e.what());
                        }
                      }},
                     {"hidden_width", int_field(cfg.hidden_width)}});
    } else if (section == "data") {
      apply_section(section, node,
                    {{"source", string_field(cfg.data_source)},
                     {"csv_path", string_field(cfg.csv_path)},
                     {"num_examples", int_field(cfg.synthetic.num_examples)},
                     {"num_features", int_field(cfg.synthetic.num_features)},
                     {"num_classes", int_field(cfg.synthetic.num_classes)},
                     {"class_separation", double_field(cfg.synthetic.class_separation)},
                     {"holdout_examples", int_field(cfg.holdout_examples)},
                     {"local_test_fraction", double_field(cfg.local_test_fraction)}});
    } else if (section == "partition") {
      apply_section(section, node, {{"iid_fraction", double_field(cfg.iid_fraction)}});
    } else if (section.rfind("client.", 0) == 0) {
      apply_client_section(cfg, section, node);
    } else if (section == "failures") {
      apply_failures(cfg, node);
    } else if (section == "replay") {
      apply_section(section, node,
                    {{"dummy_elements", [&](const std::string& k, const std::string& v) {
                        cfg.dummy_elements = parse_integer<std::uint64_t>(k, v);
                      }},
                     {"sampling_rates", [&](const std::string& k, const std::string& v) {
                        cfg.sampling_rates = parse_rates(k, v);
                      }}});
    } else {
      throw ConfigError(section, "unknown section");
    }
  }
  if (!explicit_eval_clients) cfg.fedavg.eval_clients = std::min(cfg.fedavg.clients_per_round, cfg.num_clients);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[experiment]\n"
    << "rounds = " << c.rounds << "\n"
    << "num_clients = " << c.num_clients << "\n"
    << "seed = " << c.seed << "\n"
    << "read_timeout_s = " << format_double(c.read_timeout_s) << "\n"
    << "address = " << c.address << "\n"
    << "output_dir = " << c.output_dir << "\n"
    << "wait_for_clients_s = " << format_double(c.wait_for_clients_s) << "\n\n";
  o << "[strategy]\n"
    << "name = " << c.strategy << "\n"
    << "clients_per_round = " << c.fedavg.clients_per_round << "\n"
    << "eval_clients = " << c.fedavg.eval_clients << "\n"
    << "local_epochs = " << c.fedavg.local_epochs << "\n"
    << "learning_rate = " << format_double(c.fedavg.learning_rate) << "\n"
    << "batch_size = " << c.fedavg.batch_size << "\n"
    << "min_completion = " << c.min_completion << "\n"
    << "proximal_mu = " << format_double(c.proximal_mu) << "\n"
    << "q = " << format_double(c.q) << "\n"
    << "lipschitz = " << format_double(c.lipschitz) << "\n"
    << "fast_fraction = " << format_double(c.fast_fraction) << "\n"
    << "slow_epoch_scale = " << format_double(c.slow_epoch_scale) << "\n\n";
  o << "[model]\n"
    << "architecture = " << (c.architecture == Architecture::Mlp ? "mlp" : "logistic") << "\n"
    << "hidden_width = " << c.hidden_width << "\n\n";
  o << "[data]\n"
    << "source = " << c.data_source << "\n";
  if (!c.csv_path.empty()) o << "csv_path = " << c.csv_path << "\n";
  o << "num_examples = " << c.synthetic.num_examples << "\n"
    << "num_features = " << c.synthetic.num_features << "\n"
    << "num_classes = " << c.synthetic.num_classes << "\n"
    << "class_separation = " << format_double(c.synthetic.class_separation) << "\n"
    << "holdout_examples = " << c.holdout_examples << "\n"
    << "local_test_fraction = " << format_double(c.local_test_fraction) << "\n\n";
  o << "[partition]\n"
    << "iid_fraction = " << format_double(c.iid_fraction) << "\n\n";
  for (const auto& [index, p] : c.client_profiles) {
    o << "[client." << index << "]\n"
      << "bandwidth_bps = " << format_double(p.link.bandwidth_bps) << "\n"
      << "latency_s = " << format_double(p.link.latency_s) << "\n"
      << "slowdown = " << format_double(p.compute.slowdown) << "\n\n";
  }
  if (!c.failures.empty()) {
    o << "[failures]\n";
    for (const auto& f : c.failures) o << f.client << "." << f.round << " = " << failure_mode_name(f.mode) << "\n";
    o << "\n";
  }
  o << "[replay]\n";
  if (c.dummy_elements) o << "dummy_elements = " << *c.dummy_elements << "\n";
  o << "sampling_rates = ";
  for (std::size_t i = 0; i < c.sampling_rates.size(); ++i) {
    o << (i ? ", " : "") << format_double(c.sampling_rates[i]);
  }
  o << "\n";
  return o.str();
}

std::unique_ptr<FedAvg> make_strategy(const ExperimentConfig& c) {
  FedAvgConfig fa = c.fedavg;
  fa.seed = c.seed;
  if (c.strategy == "fedavg") return std::make_unique<FedAvg>(fa);
  if (c.strategy == "fault_tolerant") return std::make_unique<FaultTolerantFedAvg>(fa, c.min_completion);
  if (c.strategy == "fedprox") return std::make_unique<FedProx>(fa, c.proximal_mu);
  if (c.strategy == "qfedavg") return std::make_unique<QFedAvg>(fa, c.q, c.lipschitz);
  if (c.strategy == "fedfs") return std::make_unique<FedFS>(fa, c.fast_fraction, c.slow_epoch_scale);
  throw ConfigError("strategy.name", "unknown strategy '" + c.strategy + "'");
}

}  // namespace fl
