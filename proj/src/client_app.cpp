#include "fl/client.hpp"

#include <thread>

namespace fl {

namespace {

Message run_guarded(const std::function<Message()>& body) {
  try {
    return body();
  } catch (const DropConnection&) {
    throw;
  } catch (const std::exception& e) {
    return ErrorRes{kErrorClientException, e.what()};
  }
}

}  // namespace

ClientExit start_client(const Dialer& dial, Client& client) {
  std::shared_ptr<Connection> conn = dial();
  for (;;) {
    Message instruction = conn->receive(no_deadline());
    Message reply;
    try {
      if (std::holds_alternative<GetWeightsIns>(instruction)) {
        reply = run_guarded([&]() -> Message { return GetWeightsRes{client.get_weights()}; });
      } else if (auto* fit = std::get_if<FitIns>(&instruction)) {
        reply = run_guarded([&]() -> Message {
          FitOutput out = client.fit(fit->weights, fit->config);
          if (!out.weights.same_layout(fit->weights)) {
            return ErrorRes{kErrorClientException, "fit returned weights with a different layout"};
          }
          return FitRes{std::move(out.weights), out.num_examples, std::move(out.metrics)};
        });
      } else if (auto* eval = std::get_if<EvaluateIns>(&instruction)) {
        reply = run_guarded([&]() -> Message {
          EvaluateOutput out = client.evaluate(eval->weights, eval->config);
          if (out.num_examples == 0) return ErrorRes{kErrorClientException, "evaluate reported zero examples"};
          return EvaluateRes{out.loss, out.num_examples, std::move(out.metrics)};
        });
      } else if (auto* reconnect = std::get_if<ReconnectIns>(&instruction)) {
        const bool permanent = reconnect->seconds == 0;
        try {
          conn->send(DisconnectRes{permanent ? DisconnectReason::Shutdown : DisconnectReason::ReconnectLater});
        } catch (const TransportError&) {
        }
        conn->close();
        if (permanent) return ClientExit::Shutdown;
        std::this_thread::sleep_for(std::chrono::seconds(reconnect->seconds));
        conn = dial();
        continue;
      } else {
        reply = ErrorRes{kErrorUnexpectedMessage,
                         "unexpected " + std::string(message_name(instruction)) + " from server"};
      }
    } catch (const DropConnection&) {
      conn->close();
      return ClientExit::Dropped;
    }
    conn->send(reply);
  }
}

ClientExit start_client(const std::string& address, Client& client, const std::string& client_name,
                        std::chrono::milliseconds connect_wait) {
  ClientHello hello{client_name, {}};
  Dialer dialer = [&]() -> std::shared_ptr<Connection> {
    const auto deadline = Clock::now() + connect_wait;
    for (;;) {
      try {
        return dial(address, hello);
      } catch (const ConnectError&) {
        if (Clock::now() >= deadline) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    }
  };
  return start_client(dialer, client);
}

}  // namespace fl
