#include "fl/protocol.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

namespace fl {

void ConfigMap::set(std::string key, ConfigValue value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

const ConfigValue* ConfigMap::find(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

namespace {
[[noreturn]] void wrong_type(std::string_view key, const char* want) {
  throw std::invalid_argument("config key '" + std::string(key) + "' is not " + want);
}
}  // namespace

std::int64_t ConfigMap::get_int(std::string_view key, std::int64_t fallback) const {
  const ConfigValue* v = find(key);
  if (v == nullptr) return fallback;
  if (const auto* i = std::get_if<std::int64_t>(v)) return *i;
  wrong_type(key, "an integer");
}

double ConfigMap::get_double(std::string_view key, double fallback) const {
  const ConfigValue* v = find(key);
  if (v == nullptr) return fallback;
  if (const auto* d = std::get_if<double>(v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
  wrong_type(key, "a number");
}

std::string ConfigMap::get_string(std::string_view key, std::string fallback) const {
  const ConfigValue* v = find(key);
  if (v == nullptr) return fallback;
  if (const auto* s = std::get_if<std::string>(v)) return *s;
  wrong_type(key, "a string");
}

bool ConfigMap::get_bool(std::string_view key, bool fallback) const {
  const ConfigValue* v = find(key);
  if (v == nullptr) return fallback;
  if (const auto* b = std::get_if<bool>(v)) return *b;
  wrong_type(key, "a boolean");
}

std::optional<double> ConfigMap::maybe_double(std::string_view key) const {
  if (!contains(key)) return std::nullopt;
  return get_double(key, 0.0);
}

MessageType message_type(const Message& m) {
  return static_cast<MessageType>(m.index() + 1);
}

std::string_view message_name(MessageType t) {
  switch (t) {
    case MessageType::ClientHello: return "ClientHello";
    case MessageType::GetWeightsIns: return "GetWeightsIns";
    case MessageType::GetWeightsRes: return "GetWeightsRes";
    case MessageType::FitIns: return "FitIns";
    case MessageType::FitRes: return "FitRes";
    case MessageType::EvaluateIns: return "EvaluateIns";
    case MessageType::EvaluateRes: return "EvaluateRes";
    case MessageType::ReconnectIns: return "ReconnectIns";
    case MessageType::DisconnectRes: return "DisconnectRes";
    case MessageType::ErrorRes: return "ErrorRes";
  }
  return "Unknown";
}

namespace {

enum ConfigTag : std::uint8_t { kTagInt = 0, kTagF64 = 1, kTagString = 2, kTagBool = 3 };

void put_config(const ConfigMap& map, ByteWriter& out) {
  if (map.size() > 0xFFFF) throw EncodeError("config map has more than 65535 entries");
  out.put_u16be(static_cast<std::uint16_t>(map.size()));
  for (const auto& [key, value] : map.entries()) {
    out.put_string16(key);
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::int64_t>) {
            out.put_u8(kTagInt);
            out.put_i64be(v);
          } else if constexpr (std::is_same_v<T, double>) {
            out.put_u8(kTagF64);
            out.put_f64be(v);
          } else if constexpr (std::is_same_v<T, std::string>) {
            out.put_u8(kTagString);
            out.put_string16(v);
          } else {
            out.put_u8(kTagBool);
            out.put_u8(v ? 1 : 0);
          }
        },
        value);
  }
}

ConfigMap get_config(ByteReader& in) {
  const std::uint16_t count = in.get_u16be();
  ConfigMap map;
  std::unordered_set<std::string> keys;
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::size_t key_offset = in.offset();
    std::string key = in.get_string16();
    if (!keys.insert(key).second) throw CodecError("duplicate config key '" + key + "'", key_offset);
    const std::size_t tag_offset = in.offset();
    switch (in.get_u8()) {
      case kTagInt: map.set_int(std::move(key), in.get_i64be()); break;
      case kTagF64: map.set_double(std::move(key), in.get_f64be()); break;
      case kTagString: map.set_string(std::move(key), in.get_string16()); break;
      case kTagBool: {
        const std::size_t off = in.offset();
        const std::uint8_t b = in.get_u8();
        if (b > 1) throw CodecError("invalid boolean", off);
        map.set_bool(std::move(key), b == 1);
        break;
      }
      default: throw CodecError("unknown config value tag", tag_offset);
    }
  }
  return map;
}

void put_body(const Message& m, ByteWriter& out) {
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, ClientHello>) {
          out.put_string16(msg.client_name);
          put_config(msg.capabilities, out);
        } else if constexpr (std::is_same_v<T, GetWeightsIns>) {
        } else if constexpr (std::is_same_v<T, GetWeightsRes>) {
          encode_weights(msg.weights, out);
        } else if constexpr (std::is_same_v<T, FitIns> || std::is_same_v<T, EvaluateIns>) {
          encode_weights(msg.weights, out);
          put_config(msg.config, out);
        } else if constexpr (std::is_same_v<T, FitRes>) {
          encode_weights(msg.weights, out);
          out.put_u64be(msg.num_examples);
          put_config(msg.metrics, out);
        } else if constexpr (std::is_same_v<T, EvaluateRes>) {
          if (msg.num_examples == 0) throw EncodeError("EvaluateRes.num_examples must be >= 1");
          out.put_f64be(msg.loss);
          out.put_u64be(msg.num_examples);
          put_config(msg.metrics, out);
        } else if constexpr (std::is_same_v<T, ReconnectIns>) {
          out.put_u32be(msg.seconds);
        } else if constexpr (std::is_same_v<T, DisconnectRes>) {
          out.put_u8(static_cast<std::uint8_t>(msg.reason));
        } else {
          out.put_u16be(msg.code);
          out.put_string16(msg.detail);
        }
      },
      m);
}

Message get_body(MessageType type, ByteReader& in) {
  switch (type) {
    case MessageType::ClientHello: {
      ClientHello h;
      h.client_name = in.get_string16();
      h.capabilities = get_config(in);
      return h;
    }
    case MessageType::GetWeightsIns: return GetWeightsIns{};
    case MessageType::GetWeightsRes: return GetWeightsRes{decode_weights(in)};
    case MessageType::FitIns: {
      FitIns f;
      f.weights = decode_weights(in);
      f.config = get_config(in);
      return f;
    }
    case MessageType::FitRes: {
      FitRes f;
      f.weights = decode_weights(in);
      f.num_examples = in.get_u64be();
      f.metrics = get_config(in);
      return f;
    }
    case MessageType::EvaluateIns: {
      EvaluateIns e;
      e.weights = decode_weights(in);
      e.config = get_config(in);
      return e;
    }
    case MessageType::EvaluateRes: {
      EvaluateRes e;
      e.loss = in.get_f64be();
      const std::size_t off = in.offset();
      e.num_examples = in.get_u64be();
      if (e.num_examples == 0) throw CodecError("EvaluateRes.num_examples is zero", off);
      e.metrics = get_config(in);
      return e;
    }
    case MessageType::ReconnectIns: return ReconnectIns{in.get_u32be()};
    case MessageType::DisconnectRes: {
      const std::size_t off = in.offset();
      const std::uint8_t r = in.get_u8();
      if (r > 3) throw CodecError("unknown disconnect reason", off);
      return DisconnectRes{static_cast<DisconnectReason>(r)};
    }
    case MessageType::ErrorRes: {
      ErrorRes e;
      e.code = in.get_u16be();
      e.detail = in.get_string16();
      return e;
    }
  }
  throw ProtocolError("unknown message type");
}

struct FrameHeader {
  MessageType type;
  std::uint32_t length;
};

/// Validates the 10-byte header; throws ProtocolError.
FrameHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (std::memcmp(bytes.data(), kFrameMagic, 4) != 0) throw ProtocolError("bad frame magic");
  if (bytes[4] != kProtocolVersion) {
    throw ProtocolError("unsupported protocol version " + std::to_string(bytes[4]));
  }
  const std::uint8_t type = bytes[5];
  if (type < 1 || type > 10) throw ProtocolError("unknown message type " + std::to_string(type));
  const std::uint32_t length = (std::uint32_t{bytes[6]} << 24) | (std::uint32_t{bytes[7]} << 16) |
                               (std::uint32_t{bytes[8]} << 8) | std::uint32_t{bytes[9]};
  if (length > kMaxFrameBody) throw ProtocolError("frame length " + std::to_string(length) + " exceeds 1 GiB cap");
  return {static_cast<MessageType>(type), length};
}

}  // namespace

std::size_t encoded_size(const Message& m) {
  ByteWriter counter;
  put_body(m, counter);
  return kFrameHeaderSize + counter.size();
}

std::vector<std::uint8_t> encode_message(const Message& m) {
  const std::size_t total = encoded_size(m);
  const std::size_t body = total - kFrameHeaderSize;
  if (body > kMaxFrameBody) throw EncodeError("message body exceeds 1 GiB cap");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(total);
  ByteWriter out(bytes);
  out.put_raw(kFrameMagic, 4);
  out.put_u8(kProtocolVersion);
  out.put_u8(static_cast<std::uint8_t>(message_type(m)));
  out.put_u32be(static_cast<std::uint32_t>(body));
  put_body(m, out);
  return bytes;
}

std::optional<std::pair<Message, std::size_t>> decode_message(std::span<const std::uint8_t> bytes) {
  // Magic is checked as soon as it arrives so garbage is rejected early.
  const std::size_t magic_have = std::min<std::size_t>(bytes.size(), 4);
  if (magic_have == 0) return std::nullopt;
  if (std::memcmp(bytes.data(), kFrameMagic, magic_have) != 0) throw ProtocolError("bad frame magic");
  if (bytes.size() < kFrameHeaderSize) return std::nullopt;
  const FrameHeader header = parse_header(bytes.first(kFrameHeaderSize));
  const std::size_t total = kFrameHeaderSize + header.length;
  if (bytes.size() < total) return std::nullopt;
  ByteReader in(bytes.subspan(kFrameHeaderSize, header.length), kFrameHeaderSize);
  try {
    Message m = get_body(header.type, in);
    if (in.remaining() != 0) throw CodecError("trailing bytes in frame body", in.offset());
    return std::make_pair(std::move(m), total);
  } catch (const CodecError& e) {
    throw ProtocolError(std::string("malformed ") + std::string(message_name(header.type)) + " body: " + e.what());
  }
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
  if (head_ > 0 && head_ * 2 >= buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameDecoder::next() {
  auto view = std::span<const std::uint8_t>(buffer_).subspan(head_);
  auto decoded = decode_message(view);
  if (!decoded) return std::nullopt;
  head_ += decoded->second;
  last_frame_size_ = decoded->second;
  if (head_ == buffer_.size()) {
    buffer_.clear();
    head_ = 0;
  }
  return std::move(decoded->first);
}

}  // namespace fl
