#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tinyptr/core.hpp"

namespace tinyptr {

class ChunkOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankOutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// ---------------------------------------------------------------------------
// Elias gamma

/// Length of gamma(v): 2 * floor(log2 v) + 1.
constexpr unsigned gamma_length(std::uint64_t v) noexcept {
  return 2 * static_cast<unsigned>(std::bit_width(v) - 1) + 1;
}

/// floor(log2 v) zeros followed by v in binary. Requires 1 <= v < 2^32.
inline TinyPointer gamma_encode(std::uint64_t v) {
  if (v == 0) throw InvalidParams("gamma code is defined for v >= 1");
  if (v >> 32) throw InvalidParams("gamma code of v would exceed 64 bits");
  return TinyPointer(v, gamma_length(v));
}

/// Decodes the gamma code starting at `pos` and advances `pos` past it.
/// Returns nullopt on truncated input, leaving `pos` unchanged.
inline std::optional<std::uint64_t> gamma_decode(TinyPointer s, unsigned& pos) noexcept {
  unsigned zeros = 0;
  unsigned at = pos;
  while (at < s.length() && !s.bit(at)) {
    ++zeros;
    ++at;
  }
  if (at >= s.length() || zeros > 31 || at + zeros + 1 > s.length()) return std::nullopt;
  const std::uint64_t v = s.read(at, zeros + 1);
  pos = at + zeros + 1;
  return v;
}

// ---------------------------------------------------------------------------
// select

namespace detail {

struct SelectInByte {
  std::array<std::array<std::uint8_t, 8>, 256> pos{};
  constexpr SelectInByte() {
    for (unsigned byte = 0; byte < 256; ++byte) {
      unsigned rank = 0;
      for (unsigned bit = 0; bit < 8; ++bit) {
        if ((byte >> bit) & 1U) pos[byte][rank++] = static_cast<std::uint8_t>(bit);
      }
    }
  }
};

inline constexpr SelectInByte kSelectInByte{};

}  // namespace detail

/// Position of the j-th (0-indexed) set bit; bit k of word w is position 64w + k.
/// Word-level popcounts locate the word, then 256-entry byte tables finish.
inline std::uint64_t select_one(std::span<const std::uint64_t> bitmap, std::uint64_t j) {
  std::uint64_t remaining = j;
  for (std::size_t w = 0; w < bitmap.size(); ++w) {
    const std::uint64_t word = bitmap[w];
    const auto ones = static_cast<std::uint64_t>(std::popcount(word));
    if (remaining >= ones) {
      remaining -= ones;
      continue;
    }
    for (unsigned byte_index = 0; byte_index < 8; ++byte_index) {
      const auto byte = static_cast<std::uint8_t>(word >> (8 * byte_index));
      const auto in_byte = static_cast<std::uint64_t>(std::popcount(byte));
      if (remaining < in_byte)
        return 64 * w + 8 * byte_index + detail::kSelectInByte.pos[byte][remaining];
      remaining -= in_byte;
    }
  }
  throw RankOutOfRange("select_one: rank exceeds popcount");
}

/// Reference select by linear scan over bits.
inline std::uint64_t select_one_naive(std::span<const std::uint64_t> bitmap, std::uint64_t j) {
  std::uint64_t seen = 0;
  for (std::uint64_t pos = 0; pos < bitmap.size() * 64; ++pos) {
    if ((bitmap[pos / 64] >> (pos % 64)) & 1U) {
      if (seen == j) return pos;
      ++seen;
    }
  }
  throw RankOutOfRange("select_one_naive: rank exceeds popcount");
}

// ---------------------------------------------------------------------------
// Chunked pointer storage

/// An array of variable-length tiny pointers packed into fixed-capacity chunks.
///
/// Each chunk stores its pointers back to back in a payload of
/// `chunk_capacity_bits()` bits. Its boundary bitmap has a set bit at position
/// offset(j) + j for every slot j of the chunk plus a terminal bit at
/// total + chunk_len, so offset(j) = select(j) - j even when slots are empty.
class ChunkedPointerArray {
 public:
  static constexpr unsigned kChunkCapacityFactor = 8;

  /// `log_n` is log2 of the problem size; `nominal_bits` the typical pointer length.
  ChunkedPointerArray(std::uint64_t size, unsigned log_n, double nominal_bits)
      : size_(size),
        chunk_len_(4 * static_cast<std::uint64_t>(std::ceil(
                           static_cast<double>(std::max(1U, log_n)) / std::max(1.0, nominal_bits)))),
        capacity_bits_(kChunkCapacityFactor * std::max(1U, log_n)),
        num_chunks_((size + chunk_len_ - 1) / chunk_len_),
        payload_words_((capacity_bits_ + 63) / 64),
        boundary_words_((capacity_bits_ + chunk_len_ + 1 + 63) / 64),
        payload_(num_chunks_ * payload_words_, 0),
        boundary_(num_chunks_ * boundary_words_, 0) {
    for (std::uint64_t c = 0; c < num_chunks_; ++c)
      for (std::uint64_t j = 0; j <= chunk_len_; ++j) set_bit(boundary(c), j, true);
  }

  std::uint64_t size() const noexcept { return size_; }
  std::uint64_t chunk_len() const noexcept { return chunk_len_; }
  std::uint64_t chunk_capacity_bits() const noexcept { return capacity_bits_; }
  std::uint64_t num_chunks() const noexcept { return num_chunks_; }

  TinyPointer get(std::uint64_t idx) const {
    check_index(idx);
    const auto [c, j] = locate(idx);
    const std::uint64_t start = select_one(boundary(c), j) - j;
    const std::uint64_t end = select_one(boundary(c), j + 1) - (j + 1);
    std::uint64_t bits = 0;
    for (std::uint64_t t = start; t < end; ++t)
      bits = (bits << 1) | static_cast<std::uint64_t>(get_bit(payload(c), t));
    return TinyPointer(bits, static_cast<unsigned>(end - start));
  }

  /// Replaces the pointer at idx, shifting later pointers of the chunk.
  /// Throws ChunkOverflow (leaving the array unchanged) if the chunk would overflow.
  void set(std::uint64_t idx, TinyPointer p) {
    check_index(idx);
    const auto [c, j] = locate(idx);
    auto bmap = boundary(c);
    auto pay = payload(c);
    const std::uint64_t start = select_one(bmap, j) - j;
    const std::uint64_t end_marker = select_one(bmap, j + 1);
    const std::uint64_t end = end_marker - (j + 1);
    const std::uint64_t total = select_one(bmap, chunk_len_) - chunk_len_;
    const std::uint64_t old_len = end - start;
    if (total - old_len + p.length() > capacity_bits_)
      throw ChunkOverflow("chunk payload capacity exceeded");

    const auto delta = static_cast<std::int64_t>(p.length()) - static_cast<std::int64_t>(old_len);
    shift_range(pay, end, total, delta);
    shift_range(bmap, end_marker, total + chunk_len_ + 1, delta);
    for (unsigned t = 0; t < p.length(); ++t) set_bit(pay, start + t, p.bit(t));
    if (delta < 0) {
      const std::uint64_t new_total = total - old_len + p.length();
      for (std::uint64_t t = new_total; t < total; ++t) set_bit(pay, t, false);
    }
  }

  /// Payload bits in use in one chunk.
  std::uint64_t chunk_used_bits(std::uint64_t chunk) const {
    return select_one(boundary(chunk), chunk_len_) - chunk_len_;
  }

  std::uint64_t chunk_boundary_popcount(std::uint64_t chunk) const {
    std::uint64_t ones = 0;
    for (auto w : boundary(chunk)) ones += static_cast<std::uint64_t>(std::popcount(w));
    return ones;
  }

  std::uint64_t storage_bits() const noexcept { return (payload_.size() + boundary_.size()) * 64; }

 private:
  std::pair<std::uint64_t, std::uint64_t> locate(std::uint64_t idx) const noexcept {
    return {idx / chunk_len_, idx % chunk_len_};
  }

  void check_index(std::uint64_t idx) const {
    if (idx >= size_) throw std::out_of_range("ChunkedPointerArray index out of range");
  }

  std::span<const std::uint64_t> boundary(std::uint64_t c) const noexcept {
    return {boundary_.data() + c * boundary_words_, boundary_words_};
  }
  std::span<std::uint64_t> boundary(std::uint64_t c) noexcept {
    return {boundary_.data() + c * boundary_words_, boundary_words_};
  }
  std::span<const std::uint64_t> payload(std::uint64_t c) const noexcept {
    return {payload_.data() + c * payload_words_, payload_words_};
  }
  std::span<std::uint64_t> payload(std::uint64_t c) noexcept {
    return {payload_.data() + c * payload_words_, payload_words_};
  }

  static bool get_bit(std::span<const std::uint64_t> words, std::uint64_t pos) noexcept {
    return (words[pos / 64] >> (pos % 64)) & 1U;
  }
  static void set_bit(std::span<std::uint64_t> words, std::uint64_t pos, bool value) noexcept {
    const std::uint64_t mask = std::uint64_t{1} << (pos % 64);
    if (value) {
      words[pos / 64] |= mask;
    } else {
      words[pos / 64] &= ~mask;
    }
  }

  /// Moves bits [from, to) by delta positions; vacated bits are cleared.
  static void shift_range(std::span<std::uint64_t> words, std::uint64_t from, std::uint64_t to,
                          std::int64_t delta) noexcept {
    if (delta == 0 || from >= to) return;
    if (delta > 0) {
      const auto d = static_cast<std::uint64_t>(delta);
      for (std::uint64_t pos = to; pos-- > from;) {
        set_bit(words, pos + d, get_bit(words, pos));
        set_bit(words, pos, false);
      }
    } else {
      const auto d = static_cast<std::uint64_t>(-delta);
      for (std::uint64_t pos = from; pos < to; ++pos) {
        set_bit(words, pos - d, get_bit(words, pos));
        set_bit(words, pos, false);
      }
    }
  }

  std::uint64_t size_;
  std::uint64_t chunk_len_;
  std::uint64_t capacity_bits_;
  std::uint64_t num_chunks_;
  std::uint64_t payload_words_;
  std::uint64_t boundary_words_;
  std::vector<std::uint64_t> payload_;
  std::vector<std::uint64_t> boundary_;
};

}  // namespace tinyptr
