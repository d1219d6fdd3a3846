#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cooctex/error.hpp"

namespace cooctex::io {

/// 8-byte file signature.
using Magic = std::array<char, 8>;

/// Little-endian raw writer; floats are stored bit-for-bit.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void magic(const Magic& m) { out_.write(m.data(), m.size()); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    static_assert(std::endian::native == std::endian::little);
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
  void put_array(const std::vector<T>& values) {
    put<std::uint64_t>(values.size());
    if (!values.empty())
      out_.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(T)));
  }

  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void check() const {
    if (!out_) throw Error("write failed");
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void expect_magic(const Magic& m, std::string_view what) {
    Magic got{};
    in_.read(got.data(), got.size());
    if (!in_ || got != m) throw FormatError(std::string(what) + ": bad magic header");
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) throw FormatError("unexpected end of file");
    return value;
  }

  template <typename T>
  std::vector<T> get_array(std::uint64_t max_count = std::uint64_t{1} << 34) {
    const auto n = get<std::uint64_t>();
    if (n > max_count) throw FormatError("array length out of range");
    std::vector<T> values(n);
    if (n > 0) {
      in_.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(n * sizeof(T)));
      if (!in_) throw FormatError("unexpected end of file");
    }
    return values;
  }

  std::string get_string() {
    const auto n = get<std::uint64_t>();
    if (n > (std::uint64_t{1} << 34)) throw FormatError("string length out of range");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError("unexpected end of file");
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace cooctex::io
