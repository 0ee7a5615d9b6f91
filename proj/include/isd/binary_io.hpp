#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "isd/errors.hpp"

namespace isd {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

/// Appends little-endian scalars and arrays to a byte buffer.
class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }

  void put_raw(std::string_view text) { bytes_.insert(bytes_.end(), text.begin(), text.end()); }

  /// u64 length prefix followed by the bytes.
  void put_string(std::string_view text) {
    put<std::uint64_t>(text.size());
    put_raw(text);
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked cursor over a byte buffer. Overruns raise LengthError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  std::vector<T> get_array(std::size_t count) {
    if (count > (bytes_.size() - offset_) / sizeof(T)) {
      throw LengthError("truncated input: need " + std::to_string(count) + " elements at offset " +
                        std::to_string(offset_));
    }
    std::vector<T> values(count);
    std::memcpy(values.data(), bytes_.data() + offset_, count * sizeof(T));
    offset_ += count * sizeof(T);
    return values;
  }

  std::string get_raw(std::size_t count) {
    require(count);
    std::string text(reinterpret_cast<const char*>(bytes_.data() + offset_), count);
    offset_ += count;
    return text;
  }

  std::string get_string() { return get_raw(static_cast<std::size_t>(get<std::uint64_t>())); }

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  void require(std::size_t n) const {
    if (n > bytes_.size() - offset_) {
      throw LengthError("truncated input: need " + std::to_string(n) + " bytes at offset " + std::to_string(offset_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace isd
