// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
//
//   fl_acceptance                      run everything
//   fl_acceptance --criterion NAME     run one (see --list)

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include "../unit/helpers.hpp"
#include "fl/config.hpp"
#include "fl/data.hpp"
#include "fl/experiment.hpp"
#include "fl/server.hpp"
#include "fl/sim.hpp"
#include "fl/strategies.hpp"
#include "fl/trainer.hpp"

namespace {

using namespace std::chrono_literals;
using Seconds = std::chrono::duration<double>;
namespace fs = std::filesystem;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

fl::Weights random_vector_weights(fl::Xoshiro256& rng, std::size_t len) {
  std::vector<double> v(len);
  for (auto& x : v) x = rng.uniform(-100, 100);
  return fl::test::vector_weights(std::move(v));
}

// fedavg_aggregate vs a naive weighted mean summed in client-id order.
Verdict aggregation_oracle() {
  fl::Xoshiro256 rng(20240601);
  double worst = 0.0;
  for (int iter = 0; iter < 1000; ++iter) {
    const std::size_t clients = 1 + rng.below(10), len = 1 + rng.below(100);
    std::vector<fl::FitResult> rs;
    for (std::size_t k = 0; k < clients; ++k) {
      rs.push_back({fl::test::client_id(k), random_vector_weights(rng, len), rng.below(1000), {}});
    }
    if (std::all_of(rs.begin(), rs.end(), [](auto& r) { return r.num_examples == 0; })) rs[0].num_examples = 1;
    const auto got = fl::fedavg_aggregate(rs)[0].to_f64();
    double total = 0;
    for (auto& r : rs) total += static_cast<double>(r.num_examples);
    for (std::size_t i = 0; i < len; ++i) {
      double acc = 0;
      for (auto& r : rs) acc += static_cast<double>(r.num_examples) * r.weights[0].at(i);
      const double want = acc / total;
      const double rel = std::abs(got[i] - want) / std::max(std::abs(want), 1e-300);
      worst = std::max(worst, rel);
    }
  }
  return {worst <= 1e-12, format("1000 instances, max relative error %.3g (limit 1e-12)", worst)};
}

// C=10, min_completion=8, f of the 10 sampled clients fail (error, timeout
// or drop in rotation). The model must change iff successes >= 8.
Verdict fault_tolerance() {
  bool ok = true;
  std::string log;
  const fl::Weights global = fl::test::vector_weights({0, 0, 0});
  for (int f = 0; f <= 10; ++f) {
    fl::test::LoopbackHarness h(3);
    for (int k = 0; k < 10; ++k) {
      auto& c = h.add(fl::test::client_id(k));
      const bool fails = k < f;
      c.on_fit = [k, fails](const fl::Weights& w, const fl::ConfigMap&) -> fl::FitOutput {
        if (fails) {
          switch (k % 3) {
            case 0: throw std::runtime_error("injected error");
            case 1: std::this_thread::sleep_for(400ms); break;
            default: throw fl::DropConnection();
          }
        }
        std::vector<double> v = w[0].to_f64();
        for (auto& x : v) x += 1.0 + k;
        return {fl::test::vector_weights(v), 10, {}};
      };
    }
    fl::FedAvgConfig cfg;
    cfg.clients_per_round = 10;
    cfg.eval_clients = 0;
    fl::FaultTolerantFedAvg s(cfg, 8);
    auto out = fl::fit_round(s, h.manager, global, 1, 200ms);
    const fl::Weights next = out.weights.value_or(global);
    const bool changed = next != global;
    const std::size_t successes = out.record.num_success;
    const bool expect = successes >= 8;
    ok = ok && changed == expect && successes == static_cast<std::size_t>(10 - f) &&
         out.record.num_failures == static_cast<std::size_t>(f);
    log += format("%s%d:%s", f ? " " : "", f, changed ? "upd" : "keep");
  }
  return {ok, "f=0..10 -> " + log};
}

fl::ExperimentConfig load_config(const std::string& name) {
  return fl::load_experiment_config((fs::path(FL_CONFIG_DIR) / name).string());
}

double mean_divergence(const fl::RunResult& r) {
  double s = 0;
  for (auto& rec : r.rounds) s += rec.update_divergence;
  return s / static_cast<double>(r.rounds.size());
}

double final_accuracy(const fl::RunResult& r) { return r.rounds.back().accuracy.value_or(0.0); }

Verdict convergence() {
  auto cfg = load_config("convergence.ini");
  const auto c10 = fl::run_experiment(cfg);
  cfg.fedavg.clients_per_round = 30;
  const auto c30 = fl::run_experiment(cfg);
  if (!c10.completed || !c30.completed) return {false, "run did not complete"};
  const double a10 = final_accuracy(c10), a30 = final_accuracy(c30);
  const bool ok = a10 >= 0.90 && std::abs(a10 - a30) <= 0.03;
  return {ok, format("accuracy C=10 %.4f (>= 0.90), C=30 %.4f, gap %.2f points (<= 3)", a10, a30,
                     100 * std::abs(a10 - a30))};
}

Verdict local_epochs() {
  auto cfg = load_config("non_iid.ini");
  cfg.fedavg.local_epochs = 5;
  const auto e5 = fl::run_experiment(cfg);
  cfg.fedavg.local_epochs = 10;
  const auto e10 = fl::run_experiment(cfg);
  if (!e5.completed || !e10.completed) return {false, "run did not complete"};
  const double a5 = final_accuracy(e5), a10 = final_accuracy(e10);
  const double d5 = mean_divergence(e5), d10 = mean_divergence(e10);
  const bool ok = a10 < a5 || d10 >= 1.25 * d5;
  return {ok, format("accuracy E=5 %.4f E=10 %.4f; mean divergence E=5 %.4f E=10 %.4f (x%.3f, need x1.25 or "
                     "lower E=10 accuracy)",
                     a5, a10, d5, d10, d10 / d5)};
}

// Fit = real local SGD plus a fixed simulated on-device compute time, so the
// round length is set by device time rather than by how the host schedules
// ten CPU-bound threads.
class DeviceClient : public fl::Client {
 public:
  DeviceClient(fl::TrainingClient base, std::chrono::milliseconds device_time)
      : base_(std::move(base)), device_time_(device_time) {}
  fl::Weights get_weights() override { return base_.get_weights(); }
  fl::FitOutput fit(const fl::Weights& w, const fl::ConfigMap& c) override {
    std::this_thread::sleep_for(device_time_);
    return base_.fit(w, c);
  }
  fl::EvaluateOutput evaluate(const fl::Weights& w, const fl::ConfigMap& c) override { return base_.evaluate(w, c); }

 private:
  fl::TrainingClient base_;
  std::chrono::milliseconds device_time_;
};

// Owns a client and exposes it, with a compute profile, to the harness.
class Throttled : public fl::test::ScriptedClient {
 public:
  Throttled(std::unique_ptr<fl::Client> inner, fl::ComputeProfile profile) : inner_(std::move(inner)) {
    on_fit = fl::throttle_compute([this](const fl::Weights& w, const fl::ConfigMap& c) { return inner_->fit(w, c); },
                                  profile);
    on_evaluate = [this](const fl::Weights& w, const fl::ConfigMap& c) { return inner_->evaluate(w, c); };
  }

 private:
  std::unique_ptr<fl::Client> inner_;
};

double straggler_run(double slowdown) {
  fl::ExperimentConfig cfg;
  cfg.num_clients = 10;
  cfg.seed = 5;
  cfg.synthetic.num_examples = 2000;
  cfg.synthetic.num_features = 20;
  cfg.synthetic.num_classes = 10;
  const auto data = fl::prepare_data(cfg);
  fl::test::LoopbackHarness h(cfg.seed);
  for (std::size_t i = 0; i < 10; ++i) {
    auto device = std::make_unique<DeviceClient>(
        fl::TrainingClient(data.model, data.train[i], data.test[i], 100 + i), 200ms);
    const fl::ComputeProfile profile{i == 9 ? slowdown : 1.0};
    h.add(fl::test::client_id(i), std::make_unique<Throttled>(std::move(device), profile));
  }
  fl::FedAvgConfig fc;
  fc.clients_per_round = 10;
  fc.eval_clients = 0;
  fc.local_epochs = 1;
  fl::FedAvg s(fc);
  fl::ServerConfig sc;
  sc.num_rounds = 5;
  sc.read_timeout = 30s;
  const auto t0 = fl::Clock::now();
  const auto r = fl::run(s, h.manager, sc, fl::initial_weights(cfg, data.model));
  const double t = Seconds(fl::Clock::now() - t0).count();
  return r.completed ? t : -1.0;
}

Verdict straggler() {
  const double base = straggler_run(1.0);
  const double slow = straggler_run(3.5);
  if (base <= 0 || slow <= 0) return {false, "run did not complete"};
  const double ratio = slow / base;
  return {ratio >= 2.8 && ratio <= 3.6,
          format("5 rounds: all fast %.3f s, one 3.5x straggler %.3f s, ratio %.3f (in [2.8, 3.6])", base, slow,
                 ratio)};
}

// Sends one FitIns carrying 1e8 bytes of f32 weights through a shaped
// loopback link and times it until the receiver has decoded it.
double timed_transfer(double bandwidth_bps, const fl::Weights& payload) {
  auto [a, b] = fl::make_loopback_pair();
  fl::Connection receiver(std::move(b), "receiver");
  const fl::Message msg(fl::FitIns{payload, {}});
  double elapsed = -1;
  std::thread rx([&] {
    auto m = receiver.receive(fl::deadline_after(120s));
    if (std::holds_alternative<fl::FitIns>(m)) elapsed = 0;
  });
  const auto t0 = fl::Clock::now();
  fl::Connection sender(fl::shape_stream(std::move(a), fl::LinkProfile{bandwidth_bps, 0.0}), "sender");
  sender.send(msg);
  rx.join();
  if (elapsed < 0) return elapsed;
  return Seconds(fl::Clock::now() - t0).count();
}

Verdict bandwidth() {
  fl::Weights payload;
  payload.add(fl::Tensor("dummy", {25'000'000}, std::vector<float>(25'000'000, 0.5f)));
  const double slow = timed_transfer(20e6, payload);
  const double fast = timed_transfer(1e9, payload);
  const bool ok = slow >= 40.0 && slow <= 44.0 && fast >= 0 && fast <= 1.0;
  return {ok, format("1e8-byte weights: 20 Mbps %.2f s (in [40, 44]), 1 Gbps %.3f s (<= 1.0)", slow, fast)};
}

// Echo client reporting the same metric keys the analytic model assumes.
class EchoWithMetrics : public fl::test::ScriptedClient {
 public:
  EchoWithMetrics() {
    on_fit = [](const fl::Weights& w, const fl::ConfigMap&) {
      fl::ConfigMap m;
      m.set_double("train_loss", 0.25);
      m.set_double("fit_duration_s", 0.001);
      return fl::FitOutput{w, 1, m};
    };
  }
};

Verdict bytes_accounting() {
  auto cfg = load_config("replay_resnet.ini");
  const auto rep = fl::replay_bytes(cfg);
  const auto full = std::find_if(rep.rows.begin(), rep.rows.end(), [](auto& r) { return r.sampling_rate == 1.0; });
  if (full == rep.rows.end()) return {false, "no rate 1.0 row"};
  const double gb = static_cast<double>(full->bytes_per_round) / 1e9;
  const bool replay_ok = gb >= 20.0 && gb <= 21.5;

  // live: 1M-element f32 model, 10 clients all sampled
  fl::ExperimentConfig live;
  live.num_clients = 10;
  live.fedavg.clients_per_round = 10;
  live.fedavg.eval_clients = 0;
  live.dummy_elements = 1'000'000;
  const auto analytic = fl::replay_bytes(live).rows.back().bytes_per_round;
  fl::test::LoopbackHarness h(1);
  for (int k = 0; k < 10; ++k) h.add(fl::test::client_id(k), std::make_unique<EchoWithMetrics>());
  fl::Weights model;
  model.add(fl::Tensor("dummy", {1'000'000}, std::vector<float>(1'000'000, 1.0f)));
  auto s = fl::make_strategy(live);
  fl::ServerConfig sc;
  sc.num_rounds = 2;
  sc.read_timeout = 60s;
  const auto r = fl::run(*s, h.manager, sc, model);
  if (!r.completed) return {false, "live run did not complete: " + r.error};
  double worst = 0;
  for (auto& rec : r.rounds) {
    worst = std::max(worst, std::abs(static_cast<double>(rec.bytes_fit) - static_cast<double>(analytic)) /
                                static_cast<double>(analytic));
  }
  const bool stream_ok = h.stream_bytes() == r.rounds[0].bytes_total + r.rounds[1].bytes_total;
  const bool ok = replay_ok && worst <= 0.02 && stream_ok;
  return {ok, format("replay 25.6M f32 x 100 clients at rate 1.0: %.3f GB (in [20.0, 21.5]); live 1M x 10: "
                     "measured %llu vs analytic %llu bytes/round, max deviation %.4f%% (<= 2%%)%s",
                     gb, static_cast<unsigned long long>(r.rounds[0].bytes_fit),
                     static_cast<unsigned long long>(analytic), 100 * worst, stream_ok ? "" : "; stream mismatch")};
}

Verdict qfedavg() {
  std::vector<std::string> failed;
  // q = 0 closed form: the unweighted mean of the client models. Error is
  // normwise over the model; single elements whose mean is near zero lose
  // digits to cancellation in global - sum(delta) / sum(L).
  fl::Xoshiro256 rng(77);
  double worst = 0;
  for (int iter = 0; iter < 500; ++iter) {
    const std::size_t clients = 1 + rng.below(10), len = 1 + rng.below(100);
    const fl::Weights global = random_vector_weights(rng, len);
    std::vector<fl::Weights> ws;
    for (std::size_t k = 0; k < clients; ++k) ws.push_back(random_vector_weights(rng, len));
    std::vector<fl::QFedAvgInput> in;
    for (std::size_t k = 0; k < clients; ++k) in.push_back({fl::test::client_id(k), &ws[k], rng.uniform(0.01, 10)});
    const auto got = fl::qfedavg_aggregate(global, in, 0.0, rng.uniform(0.1, 10))[0].to_f64();
    double diff2 = 0, norm2 = 0;
    for (std::size_t i = 0; i < len; ++i) {
      double mean = 0;
      for (auto& w : ws) mean += w[0].at(i);
      mean /= static_cast<double>(clients);
      diff2 += (got[i] - mean) * (got[i] - mean);
      norm2 += mean * mean;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::sqrt(norm2));
  }
  if (worst > 1e-12) failed.push_back("q=0");

  // hand example: global [0], clients [1] and [-1] with F = 1, q = L = 1
  const fl::Weights zero = fl::test::vector_weights({0});
  const fl::Weights a = fl::test::vector_weights({1}), b = fl::test::vector_weights({-1});
  std::vector<fl::QFedAvgInput> hand{{"a", &a, 1.0}, {"b", &b, 1.0}};
  if (fl::qfedavg_aggregate(zero, hand, 1.0, 1.0) != zero) failed.push_back("hand");

  // q = 0 hand case: global [0], clients [1], [2], [6] -> [3]
  const fl::Weights c1 = fl::test::vector_weights({1}), c2 = fl::test::vector_weights({2}),
                    c3 = fl::test::vector_weights({6});
  std::vector<fl::QFedAvgInput> q0{{"a", &c1, 0.5}, {"b", &c2, 2.0}, {"c", &c3, 7.0}};
  if (fl::qfedavg_aggregate(zero, q0, 0.0, 1.0) != fl::test::vector_weights({3})) failed.push_back("q0-hand");

  // fixed point
  for (int iter = 0; iter < 100; ++iter) {
    const fl::Weights g = fl::test::random_weights(rng);
    std::vector<fl::QFedAvgInput> same;
    for (int k = 0; k < 1 + static_cast<int>(rng.below(10)); ++k) {
      same.push_back({fl::test::client_id(k), &g, rng.uniform(0.01, 5)});
    }
    if (fl::qfedavg_aggregate(g, same, rng.uniform(0, 5), rng.uniform(0.1, 5)) != g) {
      failed.push_back("fixed-point");
      break;
    }
  }
  std::string which;
  for (auto& f : failed) which += " " + f;
  return {failed.empty(), format("q=0 max normwise relative error %.3g (limit 1e-12); hand examples and fixed point %s", worst,
                                 failed.empty() ? "exact" : ("failed:" + which).c_str())};
}

Verdict gradient_oracle() {
  fl::Xoshiro256 rng(4242);
  double worst = 0;
  int counts[3] = {0, 0, 0};
  for (int iter = 0; iter < 200; ++iter) {
    const int kind = iter % 3;  // logistic, mlp, proximal (either architecture)
    const auto arch = kind == 1 || (kind == 2 && rng.below(2)) ? fl::Architecture::Mlp : fl::Architecture::Logistic;
    const std::size_t k = 2 + rng.below(4), d = k + rng.below(4);
    fl::SyntheticSpec ss;
    ss.num_examples = 10 + rng.below(30);
    ss.num_features = d;
    ss.num_classes = k;
    ss.class_separation = 2;
    ss.seed = static_cast<std::uint64_t>(iter);
    const auto data = fl::make_synthetic(ss);
    const fl::ModelSpec spec{arch, d, k, arch == fl::Architecture::Mlp ? 1 + rng.below(8) : 0};
    fl::Weights w = fl::init_weights(spec, iter);
    for (std::size_t t = 0; t < w.size(); ++t) {
      for (auto& x : w[t].f64()) x += 0.3 * rng.normal();
    }
    fl::Weights ref = w;
    for (std::size_t t = 0; t < ref.size(); ++t) {
      for (auto& x : ref[t].f64()) x += 0.5 * rng.normal();
    }
    const double mu = kind == 2 ? rng.uniform(0.01, 2) : 0.0;
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), 0);
    const auto loss = [&](const fl::Weights& x) {
      return fl::loss_and_gradient(spec, x, data, rows, mu, mu > 0 ? &ref : nullptr).loss;
    };
    const auto analytic = fl::loss_and_gradient(spec, w, data, rows, mu, mu > 0 ? &ref : nullptr).gradient;
    double diff2 = 0, g2 = 0, fd2 = 0;
    const double h = 1e-6;
    for (std::size_t t = 0; t < w.size(); ++t) {
      for (std::size_t i = 0; i < w[t].size(); ++i) {
        const double orig = w[t].f64()[i];
        w[t].f64()[i] = orig + h;
        const double up = loss(w);
        w[t].f64()[i] = orig - h;
        const double down = loss(w);
        w[t].f64()[i] = orig;
        const double fd = (up - down) / (2 * h), g = analytic[t].f64()[i];
        diff2 += (g - fd) * (g - fd);
        g2 += g * g;
        fd2 += fd * fd;
      }
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(g2), std::sqrt(fd2), 1e-12});
    worst = std::max(worst, rel);
    ++counts[kind];
  }
  return {worst <= 1e-4, format("200 instances (%d logistic, %d mlp, %d proximal), max relative error %.3g "
                                "(limit 1e-4)",
                                counts[0], counts[1], counts[2], worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const auto root = fs::temp_directory_path() / "fl_acceptance_determinism";
  fs::remove_all(root);
  const std::string config = (fs::path(FL_CONFIG_DIR) / "non_iid.ini").string();
  for (const char* run : {"a", "b"}) {
    const std::string cmd =
        std::string(FLCTL_PATH) + " experiment --config " + config + " --out " + (root / run).string() + " 2>/dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, std::string("flctl run ") + run + " failed"};
  }
  const bool metrics = slurp(root / "a" / "metrics.csv") == slurp(root / "b" / "metrics.csv");
  const bool weights = slurp(root / "a" / "final_weights.bin") == slurp(root / "b" / "final_weights.bin");
  const auto size = fs::file_size(root / "a" / "final_weights.bin");
  fs::remove_all(root);
  return {metrics && weights, format("two flctl experiment runs: metrics.csv %s, final_weights.bin (%ju bytes) %s",
                                     metrics ? "identical" : "DIFFER", static_cast<std::uintmax_t>(size),
                                     weights ? "identical" : "DIFFER")};
}

struct Criterion {
  const char* name;
  std::function<Verdict()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"aggregation_oracle", aggregation_oracle}, {"fault_tolerance", fault_tolerance},
      {"convergence", convergence},               {"local_epochs", local_epochs},
      {"straggler", straggler},                   {"bandwidth", bandwidth},
      {"bytes_accounting", bytes_accounting},     {"qfedavg", qfedavg},
      {"gradient_oracle", gradient_oracle},       {"determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only;
  bool list = false;
  app.add_option("--criterion", only, "Run a single criterion");
  app.add_flag("--list", list, "List criterion names");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  if (list) {
    for (auto& c : criteria()) std::cout << c.name << "\n";
    return 0;
  }
  int failures = 0, ran = 0;
  for (auto& c : criteria()) {
    if (!only.empty() && only != c.name) continue;
    ++ran;
    const auto t0 = fl::Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double t = Seconds(fl::Clock::now() - t0).count();
    std::cout << (v.pass ? "PASS " : "FAIL ") << c.name << ": " << v.detail << format(" [%.1f s]", t) << std::endl;
    if (!v.pass) ++failures;
  }
  if (ran == 0) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
