// Copyright 2026 The megtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "megtl/error.hpp"

namespace megtl::detail {

/// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }

  void put_floats(std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const char*>(values.data());
      buf_.insert(buf_.end(), p, p + values.size_bytes());
    } else {
      for (float v : values) put(v);
    }
  }

  const std::vector<char>& data() const noexcept { return buf_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write failed: " + path.string());
  }

 private:
  std::vector<char> buf_;
};

/// Bounds-checked little-endian reader over a whole file image.
class ByteReader {
 public:
  ByteReader(std::vector<char> data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path.string());
  }

  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw FormatError(FormatError::Kind::BadMagic,
                        origin_ + ": expected magic \"" + std::string(magic) + "\"");
    }
    pos_ += magic.size();
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    need(sizeof(T));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  void get_floats(std::span<float> out) {
    need(out.size_bytes());
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
      pos_ += out.size_bytes();
    } else {
      for (float& v : out) v = get<float>();
    }
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  const std::string& origin() const noexcept { return origin_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(FormatError::Kind::Truncated, origin_ + ": truncated file");
    }
  }

  std::vector<char> data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace megtl::detail
