#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

namespace redit {

/// Lowercase hex SHA-256 of `data` (64 characters).
inline std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

/// First 8 bytes of the SHA-256 digest as a big-endian integer; used to seed
/// deterministic generators from content.
inline std::uint64_t sha256_u64(std::string_view data) {
  const std::string hex = sha256_hex(data);
  std::uint64_t v = 0;
  for (int i = 0; i < 16; ++i) {
    const char c = hex[i];
    v = (v << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
  }
  return v;
}

/// Accumulates named fields into a length-prefixed canonical string and
/// hashes it. Field order matters.
class FingerprintBuilder {
 public:
  FingerprintBuilder& add(std::string_view name, std::string_view value) {
    buf_ += std::to_string(name.size());
    buf_ += ':';
    buf_ += name;
    buf_ += std::to_string(value.size());
    buf_ += '=';
    buf_ += value;
    buf_ += ';';
    return *this;
  }
  FingerprintBuilder& add(std::string_view name, long long value) { return add(name, std::to_string(value)); }
  FingerprintBuilder& add(std::string_view name, std::size_t value) { return add(name, std::to_string(value)); }
  FingerprintBuilder& add(std::string_view name, int value) { return add(name, std::to_string(value)); }
  FingerprintBuilder& add(std::string_view name, double value);

  std::string hex() const { return sha256_hex(buf_); }
  const std::string& canonical() const noexcept { return buf_; }

 private:
  std::string buf_;
};

}  // namespace redit

#include "redit/textio.hpp"

namespace redit {

inline FingerprintBuilder& FingerprintBuilder::add(std::string_view name, double value) {
  return add(name, format_real(value));
}

}  // namespace redit
