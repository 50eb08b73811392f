#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

namespace fl {

/// Malformed or truncated encoded data. offset() is the byte position of the
/// field that failed to decode, relative to the start of the decoded buffer.
class CodecError : public std::runtime_error {
 public:
  CodecError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Value cannot be represented in the wire format (name too long, rank too
/// high, frame too large).
class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Appends wire fields to a byte vector. Constructed without a target it only
/// counts, which lets callers size a message without materializing it.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(&out) {}

  std::size_t size() const noexcept { return count_; }

  void put_u8(std::uint8_t v) { put_raw(&v, 1); }
  void put_u16be(std::uint16_t v) {
    const std::uint8_t b[2] = {static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    put_raw(b, 2);
  }
  void put_u32be(std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (24 - 8 * i));
    put_raw(b, 4);
  }
  void put_u64be(std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
    put_raw(b, 8);
  }
  void put_i64be(std::int64_t v) { put_u64be(static_cast<std::uint64_t>(v)); }
  void put_f64be(double v) { put_u64be(std::bit_cast<std::uint64_t>(v)); }

  /// u16 BE length prefix followed by the raw bytes.
  void put_string16(std::string_view s) {
    if (s.size() > 0xFFFF) throw EncodeError("string longer than 65535 bytes");
    put_u16be(static_cast<std::uint16_t>(s.size()));
    put_raw(s.data(), s.size());
  }

  /// Element payload, little-endian.
  template <class T>
  void put_le_array(std::span<const T> values) {
    static_assert(std::is_arithmetic_v<T>);
    if constexpr (std::endian::native == std::endian::little) {
      put_raw(values.data(), values.size_bytes());
    } else {
      for (T v : values) {
        std::uint8_t b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        put_raw(b, sizeof(T));
      }
    }
  }

  void put_raw(const void* data, std::size_t n) {
    if (out_ != nullptr && n > 0) {
      const auto* p = static_cast<const std::uint8_t*>(data);
      out_->insert(out_->end(), p, p + n);
    }
    count_ += n;
  }

 private:
  std::vector<std::uint8_t>* out_ = nullptr;
  std::size_t count_ = 0;
};

/// Sequential reader over a byte span; throws CodecError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data, std::size_t base_offset = 0)
      : data_(data), base_(base_offset) {}

  std::size_t offset() const noexcept { return base_ + pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  std::uint8_t get_u8() { return take(1)[0]; }
  std::uint16_t get_u16be() {
    auto b = take(2);
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  std::uint32_t get_u32be() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t get_u64be() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | b[i];
    return v;
  }
  std::int64_t get_i64be() { return static_cast<std::int64_t>(get_u64be()); }
  double get_f64be() { return std::bit_cast<double>(get_u64be()); }

  std::string get_string16() {
    const std::size_t n = get_u16be();
    auto b = take(n);
    return std::string(reinterpret_cast<const char*>(b.data()), n);
  }

  template <class T>
  void get_le_array(std::span<T> out) {
    auto b = take(out.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
      if (!out.empty()) std::memcpy(out.data(), b.data(), b.size());
    } else {
      for (std::size_t k = 0; k < out.size(); ++k) {
        std::uint8_t tmp[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) tmp[i] = b[k * sizeof(T) + sizeof(T) - 1 - i];
        std::memcpy(&out[k], tmp, sizeof(T));
      }
    }
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) throw CodecError("truncated buffer", offset());
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

}  // namespace fl
