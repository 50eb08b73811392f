#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fl/bytes.hpp"

namespace fl {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

/// Named, row-major numeric array. Shape extents are >= 1; an empty shape is a
/// scalar holding one element.
class Tensor {
 public:
  Tensor(std::string name, std::vector<std::uint32_t> shape, std::vector<float> data);
  Tensor(std::string name, std::vector<std::uint32_t> shape, std::vector<double> data);

  static Tensor zeros(std::string name, std::vector<std::uint32_t> shape, DType dtype);

  const std::string& name() const noexcept { return name_; }
  DType dtype() const noexcept { return data_.index() == 0 ? DType::F32 : DType::F64; }
  std::span<const std::uint32_t> shape() const noexcept { return shape_; }
  std::size_t size() const noexcept;
  std::size_t byte_size() const noexcept { return size() * dtype_size(dtype()); }

  std::span<const float> f32() const;
  std::span<float> f32();
  std::span<const double> f64() const;
  std::span<double> f64();

  double at(std::size_t i) const;
  std::vector<double> to_f64() const;
  /// Overwrites the elements from doubles, rounding to the storage dtype.
  void assign(std::span<const double> values);

  /// Same name, dtype and shape.
  bool same_layout(const Tensor& other) const;

  /// Bitwise equality on element data, so NaN payloads compare equal to themselves.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  std::string name_;
  std::vector<std::uint32_t> shape_;
  std::variant<std::vector<float>, std::vector<double>> data_;
};

/// Ordered collection of uniquely named tensors: the model parameters
/// exchanged between server and clients.
class Weights {
 public:
  Weights() = default;
  explicit Weights(std::vector<Tensor> tensors);

  /// Appends; throws std::invalid_argument on a duplicate name.
  void add(Tensor tensor);

  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  bool empty() const noexcept { return tensors_.empty(); }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  Tensor& operator[](std::size_t i) { return tensors_.at(i); }
  const Tensor* find(std::string_view name) const;
  Tensor* find(std::string_view name);

  std::size_t num_elements() const noexcept;
  bool same_layout(const Weights& other) const;

  friend bool operator==(const Weights& a, const Weights& b) { return a.tensors_ == b.tensors_; }

 private:
  std::vector<Tensor> tensors_;
};

/// Canonical layout: u32 BE tensor count; per tensor u16 BE name length, UTF-8
/// name, u8 dtype tag, u8 rank, u32 BE extents, then element bytes in
/// little-endian row-major order.
std::vector<std::uint8_t> encode_weights(const Weights& weights);
void encode_weights(const Weights& weights, ByteWriter& out);

/// Throws CodecError naming the byte offset on truncation, an unknown dtype
/// tag, a zero extent, or a duplicate tensor name.
Weights decode_weights(std::span<const std::uint8_t> bytes);
Weights decode_weights(ByteReader& in);

std::size_t weights_byte_size(const Weights& weights);

}  // namespace fl
