#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drew/error.hpp"

namespace drew {

using Bit = std::uint8_t;

/// Fixed-length sequence of binary values. The tag keeps cluster codes and
/// watermark keys from being mixed up.
template <typename Tag>
class BitString {
 public:
  BitString() = default;

  explicit BitString(std::vector<Bit> bits) : bits_(std::move(bits)) {
    for (Bit b : bits_) require(b <= 1, "bit values must be 0 or 1");
  }

  static BitString zeros(std::size_t length) {
    return BitString(std::vector<Bit>(length, 0));
  }

  static BitString from_string(std::string_view text) {
    std::vector<Bit> bits;
    bits.reserve(text.size());
    for (char c : text) {
      if (c != '0' && c != '1') fail(Errc::format, "bit string may only contain '0' and '1'");
      bits.push_back(static_cast<Bit>(c - '0'));
    }
    return BitString(std::move(bits));
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }
  Bit operator[](std::size_t i) const { return bits_[i]; }
  std::span<const Bit> bits() const noexcept { return bits_; }

  std::string to_string() const {
    std::string out(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i) out[i] = static_cast<char>('0' + bits_[i]);
    return out;
  }

  friend BitString operator^(const BitString& a, const BitString& b) {
    require(a.size() == b.size(), "xor of bit strings with different lengths");
    std::vector<Bit> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.bits_[i] ^ b.bits_[i];
    return BitString(std::move(out));
  }

  friend bool operator==(const BitString&, const BitString&) = default;

 private:
  std::vector<Bit> bits_;
};

template <typename Tag>
std::size_t hamming_distance(const BitString<Tag>& a, const BitString<Tag>& b) {
  require(a.size() == b.size(), "hamming distance of bit strings with different lengths");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

struct WatermarkKeyTag {};
using WatermarkKey = BitString<WatermarkKeyTag>;

struct ClusterCodeTag {};

/// k-bit cluster label. Bit 0 is the most significant bit, so the code read
/// left to right is the binary representation of the cluster index.
class ClusterCode : public BitString<ClusterCodeTag> {
 public:
  using Base = BitString<ClusterCodeTag>;
  ClusterCode() = default;
  explicit ClusterCode(std::vector<Bit> bits) : Base(std::move(bits)) {}
  ClusterCode(Base base) : Base(std::move(base)) {}  // NOLINT(google-explicit-constructor)

  static ClusterCode from_index(std::uint32_t index, int k) {
    require(k >= 1 && k <= 32, "cluster code length must be in [1, 32]");
    require(k == 32 || index < (std::uint64_t{1} << k), "cluster index out of range for k bits");
    std::vector<Bit> bits(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) bits[static_cast<std::size_t>(j)] = (index >> (k - 1 - j)) & 1u;
    return ClusterCode(std::move(bits));
  }

  std::uint32_t index() const {
    require(size() <= 32, "cluster code too long for a 32-bit index");
    std::uint32_t value = 0;
    for (Bit b : bits()) value = (value << 1) | b;
    return value;
  }
};

}  // namespace drew
