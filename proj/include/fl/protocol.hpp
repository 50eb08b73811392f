#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fl/tensor.hpp"

namespace fl {

/// Fatal framing or body violation. The connection that produced it must be
/// closed.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ConfigValue = std::variant<std::int64_t, double, std::string, bool>;

/// Ordered, typed key/value map carried by instructions and results
/// (epochs, lr, proximal_mu, train_loss, ...).
class ConfigMap {
 public:
  using Entry = std::pair<std::string, ConfigValue>;

  ConfigMap() = default;

  /// Inserts or replaces, keeping first-insertion order.
  void set(std::string key, ConfigValue value);
  void set_int(std::string key, std::int64_t v) { set(std::move(key), ConfigValue(v)); }
  void set_double(std::string key, double v) { set(std::move(key), ConfigValue(v)); }
  void set_string(std::string key, std::string v) { set(std::move(key), ConfigValue(std::move(v))); }
  void set_bool(std::string key, bool v) { set(std::move(key), ConfigValue(v)); }

  const ConfigValue* find(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key) != nullptr; }

  // Typed getters throw std::invalid_argument naming the key when the stored
  // type does not match. get_double also accepts integers.
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::string get_string(std::string_view key, std::string fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::optional<double> maybe_double(std::string_view key) const;

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  friend bool operator==(const ConfigMap&, const ConfigMap&) = default;

 private:
  std::vector<Entry> entries_;
};

struct ClientHello {
  std::string client_name;
  ConfigMap capabilities;
  friend bool operator==(const ClientHello&, const ClientHello&) = default;
};
struct GetWeightsIns {
  friend bool operator==(const GetWeightsIns&, const GetWeightsIns&) = default;
};
struct GetWeightsRes {
  Weights weights;
  friend bool operator==(const GetWeightsRes&, const GetWeightsRes&) = default;
};
struct FitIns {
  Weights weights;
  ConfigMap config;
  friend bool operator==(const FitIns&, const FitIns&) = default;
};
struct FitRes {
  Weights weights;
  std::uint64_t num_examples = 0;
  ConfigMap metrics;
  friend bool operator==(const FitRes&, const FitRes&) = default;
};
struct EvaluateIns {
  Weights weights;
  ConfigMap config;
  friend bool operator==(const EvaluateIns&, const EvaluateIns&) = default;
};
struct EvaluateRes {
  double loss = 0.0;
  std::uint64_t num_examples = 1;  // >= 1
  ConfigMap metrics;
  friend bool operator==(const EvaluateRes&, const EvaluateRes&) = default;
};
/// seconds == 0 asks the client to disconnect permanently.
struct ReconnectIns {
  std::uint32_t seconds = 0;
  friend bool operator==(const ReconnectIns&, const ReconnectIns&) = default;
};

enum class DisconnectReason : std::uint8_t { ReconnectLater = 0, PowerStateChange = 1, Shutdown = 2, Error = 3 };

struct DisconnectRes {
  DisconnectReason reason = DisconnectReason::Shutdown;
  friend bool operator==(const DisconnectRes&, const DisconnectRes&) = default;
};
struct ErrorRes {
  std::uint16_t code = 0;
  std::string detail;
  friend bool operator==(const ErrorRes&, const ErrorRes&) = default;
};

using Message = std::variant<ClientHello, GetWeightsIns, GetWeightsRes, FitIns, FitRes, EvaluateIns, EvaluateRes,
                             ReconnectIns, DisconnectRes, ErrorRes>;

/// Wire tag of each variant (the msg_type header byte).
enum class MessageType : std::uint8_t {
  ClientHello = 1,
  GetWeightsIns = 2,
  GetWeightsRes = 3,
  FitIns = 4,
  FitRes = 5,
  EvaluateIns = 6,
  EvaluateRes = 7,
  ReconnectIns = 8,
  DisconnectRes = 9,
  ErrorRes = 10,
};

MessageType message_type(const Message& m);
std::string_view message_name(MessageType t);
inline std::string_view message_name(const Message& m) { return message_name(message_type(m)); }

inline constexpr std::uint8_t kFrameMagic[4] = {'F', 'L', 'W', 'R'};
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 10;
inline constexpr std::size_t kMaxFrameBody = std::size_t{1} << 30;

/// Full frame: magic, version, msg_type, u32 BE body length, body.
std::vector<std::uint8_t> encode_message(const Message& m);
/// Exact encoded frame length without materializing the frame.
std::size_t encoded_size(const Message& m);

/// Decodes one frame from the front of `bytes`. Returns the message and the
/// number of bytes consumed, or nullopt when more bytes are needed. Throws
/// ProtocolError on bad magic, version, msg_type, oversize length, or a
/// malformed body.
std::optional<std::pair<Message, std::size_t>> decode_message(std::span<const std::uint8_t> bytes);

/// Incremental decoder for stream reads; any chunking of the input yields
/// the same message sequence.
class FrameDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  /// Next complete message, or nullopt if the buffered bytes end mid-frame.
  std::optional<Message> next();
  std::size_t buffered() const noexcept { return buffer_.size() - head_; }
  /// Total length of the most recently returned frame.
  std::size_t last_frame_size() const noexcept { return last_frame_size_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t head_ = 0;
  std::size_t last_frame_size_ = 0;
};

}  // namespace fl
