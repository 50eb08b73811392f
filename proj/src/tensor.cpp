#include "fl/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace fl {

namespace {

std::size_t element_count(const std::vector<std::uint32_t>& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

void check_shape(const std::string& name, const std::vector<std::uint32_t>& shape, std::size_t n) {
  for (auto e : shape) {
    if (e == 0) throw std::invalid_argument("tensor '" + name + "': extents must be >= 1");
  }
  if (element_count(shape) != n) {
    throw std::invalid_argument("tensor '" + name + "': shape does not match element count");
  }
}

}  // namespace

std::size_t dtype_size(DType dtype) { return dtype == DType::F32 ? 4 : 8; }

const char* dtype_name(DType dtype) { return dtype == DType::F32 ? "f32" : "f64"; }

Tensor::Tensor(std::string name, std::vector<std::uint32_t> shape, std::vector<float> data)
    : name_(std::move(name)), shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(name_, shape_, size());
}

Tensor::Tensor(std::string name, std::vector<std::uint32_t> shape, std::vector<double> data)
    : name_(std::move(name)), shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(name_, shape_, size());
}

Tensor Tensor::zeros(std::string name, std::vector<std::uint32_t> shape, DType dtype) {
  const std::size_t n = element_count(shape);
  if (dtype == DType::F32) return Tensor(std::move(name), std::move(shape), std::vector<float>(n));
  return Tensor(std::move(name), std::move(shape), std::vector<double>(n));
}

std::size_t Tensor::size() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

std::span<const float> Tensor::f32() const {
  if (dtype() != DType::F32) throw std::logic_error("tensor '" + name_ + "' is not f32");
  return std::get<0>(data_);
}
std::span<float> Tensor::f32() {
  if (dtype() != DType::F32) throw std::logic_error("tensor '" + name_ + "' is not f32");
  return std::get<0>(data_);
}
std::span<const double> Tensor::f64() const {
  if (dtype() != DType::F64) throw std::logic_error("tensor '" + name_ + "' is not f64");
  return std::get<1>(data_);
}
std::span<double> Tensor::f64() {
  if (dtype() != DType::F64) throw std::logic_error("tensor '" + name_ + "' is not f64");
  return std::get<1>(data_);
}

double Tensor::at(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); }, data_);
}

std::vector<double> Tensor::to_f64() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
}

void Tensor::assign(std::span<const double> values) {
  if (values.size() != size()) throw std::invalid_argument("tensor '" + name_ + "': size mismatch on assign");
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        std::transform(values.begin(), values.end(), v.begin(), [](double x) { return static_cast<T>(x); });
      },
      data_);
}

bool Tensor::same_layout(const Tensor& other) const {
  return name_ == other.name_ && dtype() == other.dtype() && shape_ == other.shape_;
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (!a.same_layout(b)) return false;
  return std::visit(
      [&](const auto& va) {
        using V = std::decay_t<decltype(va)>;
        const auto& vb = std::get<V>(b.data_);
        return va.empty() || std::memcmp(va.data(), vb.data(), va.size() * sizeof(typename V::value_type)) == 0;
      },
      a.data_);
}

Weights::Weights(std::vector<Tensor> tensors) {
  tensors_.reserve(tensors.size());
  for (auto& t : tensors) add(std::move(t));
}

void Weights::add(Tensor tensor) {
  if (find(tensor.name()) != nullptr) {
    throw std::invalid_argument("duplicate tensor name '" + tensor.name() + "'");
  }
  tensors_.push_back(std::move(tensor));
}

const Tensor* Weights::find(std::string_view name) const {
  auto it = std::find_if(tensors_.begin(), tensors_.end(), [&](const Tensor& t) { return t.name() == name; });
  return it == tensors_.end() ? nullptr : &*it;
}

Tensor* Weights::find(std::string_view name) {
  return const_cast<Tensor*>(std::as_const(*this).find(name));
}

std::size_t Weights::num_elements() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool Weights::same_layout(const Weights& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (!tensors_[i].same_layout(other.tensors_[i])) return false;
  }
  return true;
}

void encode_weights(const Weights& weights, ByteWriter& out) {
  if (weights.size() > 0xFFFFFFFFu) throw EncodeError("too many tensors");
  out.put_u32be(static_cast<std::uint32_t>(weights.size()));
  for (const auto& t : weights.tensors()) {
    if (t.name().size() > 0xFFFF) throw EncodeError("tensor name longer than 65535 bytes: '" + t.name().substr(0, 32) + "...'");
    if (t.shape().size() > 255) throw EncodeError("tensor '" + t.name() + "' has rank > 255");
    out.put_string16(t.name());
    out.put_u8(static_cast<std::uint8_t>(t.dtype()));
    out.put_u8(static_cast<std::uint8_t>(t.shape().size()));
    for (auto e : t.shape()) out.put_u32be(e);
    if (t.dtype() == DType::F32) {
      out.put_le_array(t.f32());
    } else {
      out.put_le_array(t.f64());
    }
  }
}

std::vector<std::uint8_t> encode_weights(const Weights& weights) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(weights_byte_size(weights));
  ByteWriter out(bytes);
  encode_weights(weights, out);
  return bytes;
}

Weights decode_weights(ByteReader& in) {
  const std::uint32_t count = in.get_u32be();
  Weights weights;
  std::unordered_set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t name_offset = in.offset();
    std::string name = in.get_string16();
    if (!names.insert(name).second) throw CodecError("duplicate tensor name '" + name + "'", name_offset);
    const std::size_t tag_offset = in.offset();
    const std::uint8_t tag = in.get_u8();
    if (tag > 1) throw CodecError("unknown dtype tag " + std::to_string(tag), tag_offset);
    const DType dtype = static_cast<DType>(tag);
    const std::uint8_t rank = in.get_u8();
    std::vector<std::uint32_t> shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      const std::size_t extent_offset = in.offset();
      e = in.get_u32be();
      if (e == 0) throw CodecError("zero extent", extent_offset);
      n *= e;
      // Reject before allocating: the element bytes must fit in what is left.
      if (n > in.remaining()) throw CodecError("truncated buffer", in.offset());
    }
    if (n * dtype_size(dtype) > in.remaining()) throw CodecError("truncated buffer", in.offset());
    if (dtype == DType::F32) {
      std::vector<float> data(n);
      in.get_le_array(std::span<float>(data));
      weights.add(Tensor(std::move(name), std::move(shape), std::move(data)));
    } else {
      std::vector<double> data(n);
      in.get_le_array(std::span<double>(data));
      weights.add(Tensor(std::move(name), std::move(shape), std::move(data)));
    }
  }
  return weights;
}

Weights decode_weights(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  Weights w = decode_weights(in);
  if (in.remaining() != 0) throw CodecError("trailing bytes after weights", in.offset());
  return w;
}

std::size_t weights_byte_size(const Weights& weights) {
  std::size_t n = 4;
  for (const auto& t : weights.tensors()) n += 2 + t.name().size() + 1 + 1 + 4 * t.shape().size() + t.byte_size();
  return n;
}

}  // namespace fl
