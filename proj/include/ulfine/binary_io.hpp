#pragma once

// Little-endian framing helpers shared by the embedding and checkpoint files.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "ulfine/error.hpp"

namespace ulfine::binio {

template <typename UInt>
void write_le(std::ostream& os, UInt v) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(bytes.data(), bytes.size());
}

inline void write_f32(std::ostream& os, float v) { write_le(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), magic.size()); }

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& is, std::string context) : is_(is), context_(std::move(context)) {}

  void read_bytes(char* out, std::size_t n) {
    is_.read(out, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw TruncatedError(context_ + ": truncated file");
    }
  }

  template <typename UInt>
  UInt read_le() {
    std::array<unsigned char, sizeof(UInt)> bytes{};
    read_bytes(reinterpret_cast<char*>(bytes.data()), bytes.size());
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
    return v;
  }

  float read_f32() { return std::bit_cast<float>(read_le<std::uint32_t>()); }
  double read_f64() { return std::bit_cast<double>(read_le<std::uint64_t>()); }

  void expect_magic(std::string_view magic) {
    std::array<char, 8> buf{};
    is_.read(buf.data(), static_cast<std::streamsize>(magic.size()));
    if (static_cast<std::size_t>(is_.gcount()) != magic.size() ||
        std::memcmp(buf.data(), magic.data(), magic.size()) != 0) {
      throw FormatError(context_ + ": bad magic, expected \"" + std::string(magic) + "\"");
    }
  }

  std::string read_string(std::size_t max_len = 1 << 20) {
    const auto n = read_le<std::uint64_t>();
    if (n > max_len) throw FormatError(context_ + ": string length out of range");
    std::string s(n, '\0');
    read_bytes(s.data(), n);
    return s;
  }

  const std::string& context() const { return context_; }

 private:
  std::istream& is_;
  std::string context_;
};

}  // namespace ulfine::binio
