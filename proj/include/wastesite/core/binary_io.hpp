#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "wastesite/core/error.hpp"

namespace wastesite::io {

/// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.append(s); }

  template <class U>
  void scalar(U v) {
    static_assert(std::is_arithmetic_v<U>);
    unsigned char raw[sizeof(U)];
    std::memcpy(raw, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    buf_.append(reinterpret_cast<const char*>(raw), sizeof(U));
  }

  void u32(std::uint32_t v) { scalar(v); }
  void u64(std::uint64_t v) { scalar(v); }
  void f64(double v) { scalar(v); }

  template <class U>
  void f32s(std::span<const U> values) {
    if constexpr (std::is_same_v<U, float> && std::endian::native == std::endian::little) {
      buf_.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
    } else {
      for (const U v : values) scalar(static_cast<float>(v));
    }
  }

  const std::string& str() const noexcept { return buf_; }
  std::string take() noexcept { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data, std::string context = "stream")
      : data_(data), context_(std::move(context)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <class U>
  U scalar() {
    need(sizeof(U));
    unsigned char raw[sizeof(U)];
    std::memcpy(raw, data_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, raw, sizeof(U));
    return v;
  }

  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  double f64() { return scalar<double>(); }

  template <class U>
  void f32s(std::span<U> out) {
    if constexpr (std::is_same_v<U, float> && std::endian::native == std::endian::little) {
      need(out.size() * sizeof(float));
      std::memcpy(out.data(), data_.data() + pos_, out.size() * sizeof(float));
      pos_ += out.size() * sizeof(float);
    } else {
      for (auto& v : out) v = static_cast<U>(scalar<float>());
    }
  }

  bool at_end() const noexcept { return pos_ == data_.size(); }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(context_ + ": truncated");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string context_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("short write to " + path);
}

}  // namespace wastesite::io
