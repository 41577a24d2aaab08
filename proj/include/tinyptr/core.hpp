#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <concepts>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tinyptr {

class InvalidParams : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised only by shadow verification, never by a table itself.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A bit string of at most 64 bits. The first bit of the string is the most
/// significant of the `length()` low bits of `bits()`.
class TinyPointer {
 public:
  static constexpr unsigned kMaxBits = 64;

  constexpr TinyPointer() = default;
  constexpr TinyPointer(std::uint64_t bits, unsigned length)
      : bits_(length >= 64 ? bits : bits & ((std::uint64_t{1} << length) - 1)),
        length_(static_cast<std::uint8_t>(std::min(length, kMaxBits))) {}

  constexpr std::uint64_t bits() const noexcept { return bits_; }
  constexpr unsigned length() const noexcept { return length_; }
  constexpr bool empty() const noexcept { return length_ == 0; }

  /// Bit at position i counted from the front of the string.
  constexpr bool bit(unsigned i) const noexcept { return (bits_ >> (length_ - 1 - i)) & 1U; }

  /// The `count` bits starting at `pos`, as an integer. Positions past the end read as 0.
  constexpr std::uint64_t read(unsigned pos, unsigned count) const noexcept {
    if (count == 0 || pos >= length_) return 0;
    const unsigned avail = std::min(count, length_ - pos);
    const std::uint64_t mask = avail == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << avail) - 1;
    const std::uint64_t out = (bits_ >> (length_ - pos - avail)) & mask;
    return count - avail >= 64 ? 0 : out << (count - avail);
  }

  /// this ∥ tail. Total length must not exceed 64.
  constexpr TinyPointer append(TinyPointer tail) const noexcept {
    if (tail.length_ == 0) return *this;
    const std::uint64_t head = tail.length_ >= 64 ? 0 : bits_ << tail.length_;
    return TinyPointer(head | tail.bits_, length_ + tail.length_);
  }

  constexpr TinyPointer append_bits(std::uint64_t value, unsigned count) const noexcept {
    return append(TinyPointer(value, count));
  }

  /// Suffix starting at `pos`.
  constexpr TinyPointer drop_front(unsigned pos) const noexcept {
    if (pos >= length_) return {};
    return TinyPointer(bits_, length_ - pos);
  }

  /// Right-pads with zero bits up to `width`.
  constexpr TinyPointer padded_to(unsigned width) const noexcept {
    if (width <= length_) return *this;
    return append_bits(0, width - length_);
  }

  std::string to_string() const {
    std::string s(length_, '0');
    for (unsigned i = 0; i < length_; ++i) s[i] = bit(i) ? '1' : '0';
    return s;
  }

  static TinyPointer from_string(std::string_view s) {
    if (s.size() > kMaxBits) throw InvalidParams("tiny pointer longer than 64 bits");
    std::uint64_t v = 0;
    for (char c : s) {
      if (c != '0' && c != '1') throw InvalidParams("tiny pointer must be a 0/1 string");
      v = (v << 1) | static_cast<std::uint64_t>(c == '1');
    }
    return TinyPointer(v, static_cast<unsigned>(s.size()));
  }

  friend constexpr bool operator==(TinyPointer, TinyPointer) = default;

 private:
  std::uint64_t bits_ = 0;
  std::uint8_t length_ = 0;
};

inline std::ostream& operator<<(std::ostream& os, TinyPointer p) {
  return os << '"' << p.to_string() << '"';
}

/// Enumerates bit strings by length, then lexicographically: "" -> 0, "0" -> 1,
/// "1" -> 2, "00" -> 3, ... Defined for pointers of at most 63 bits.
constexpr std::uint64_t pointer_to_index(TinyPointer p) noexcept {
  return (std::uint64_t{1} << p.length()) + p.bits() - 1;
}

constexpr TinyPointer pointer_from_index(std::uint64_t index) noexcept {
  const std::uint64_t shifted = index + 1;
  const auto len = static_cast<unsigned>(std::bit_width(shifted) - 1);
  return TinyPointer(shifted - (std::uint64_t{1} << len), len);
}

struct SlotIndex {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(SlotIndex, SlotIndex) = default;
};

inline std::ostream& operator<<(std::ostream& os, SlotIndex s) { return os << s.value; }

/// Counters every table keeps. live == allocations - failures - frees.
struct TableStats {
  std::uint64_t allocations = 0;
  std::uint64_t frees = 0;
  std::uint64_t failures = 0;
  std::uint64_t sum_pointer_bits = 0;
  std::array<std::uint64_t, TinyPointer::kMaxBits + 1> pointer_bit_histogram{};

  std::uint64_t live() const noexcept { return allocations - failures - frees; }
  std::uint64_t successes() const noexcept { return allocations - failures; }

  double mean_pointer_bits() const noexcept {
    const auto ok = successes();
    return ok == 0 ? 0.0 : static_cast<double>(sum_pointer_bits) / static_cast<double>(ok);
  }

  void record_success(TinyPointer p) noexcept {
    ++allocations;
    sum_pointer_bits += p.length();
    ++pointer_bit_histogram[p.length()];
  }
  void record_failure() noexcept {
    ++allocations;
    ++failures;
  }
  void record_free() noexcept { ++frees; }
};

/// Create / Allocate / Dereference / Free. Allocation failure is a value
/// (std::nullopt); dereference never reads occupancy and never traps.
template <class T>
concept DereferenceTable = requires(T t, const T ct, std::uint64_t key, TinyPointer p) {
  { t.allocate(key) } -> std::same_as<std::optional<TinyPointer>>;
  { ct.dereference(key, p) } -> std::same_as<SlotIndex>;
  t.free(key, p);
  { ct.slot_count() } -> std::convertible_to<std::uint64_t>;
  { ct.stats() } -> std::same_as<const TableStats&>;
  { ct.metadata_bits() } -> std::convertible_to<std::uint64_t>;
};

/// Bits of metadata allowed per slot for every table in this library.
inline constexpr double kMetadataBitsPerSlot = 2.0;

inline void require_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidParams("delta must lie in (0, 1)");
}

// ---------------------------------------------------------------------------
// Workload records

enum class OpKind : std::uint8_t { Allocate, Free, Dereference };

struct WorkloadOp {
  OpKind kind = OpKind::Allocate;
  std::uint64_t key = 0;

  friend constexpr bool operator==(WorkloadOp, WorkloadOp) = default;
};

inline char op_letter(OpKind k) {
  switch (k) {
    case OpKind::Allocate: return 'A';
    case OpKind::Free: return 'F';
    case OpKind::Dereference: return 'D';
  }
  return '?';
}

/// One record per line: "A <key>", "F <key>" or "D <key>" with a decimal key.
inline void write_workload(std::ostream& os, const std::vector<WorkloadOp>& ops) {
  for (const auto& op : ops) os << op_letter(op.kind) << ' ' << op.key << '\n';
}

inline std::vector<WorkloadOp> read_workload(std::istream& is) {
  std::vector<WorkloadOp> ops;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fail = [&] {
      throw InvalidParams("workload line " + std::to_string(lineno) + ": '" + line + "'");
    };
    if (line.size() < 3 || line[1] != ' ') fail();
    WorkloadOp op;
    switch (line[0]) {
      case 'A': op.kind = OpKind::Allocate; break;
      case 'F': op.kind = OpKind::Free; break;
      case 'D': op.kind = OpKind::Dereference; break;
      default: fail();
    }
    std::uint64_t key = 0;
    for (std::size_t i = 2; i < line.size(); ++i) {
      const char c = line[i];
      if (c < '0' || c > '9') fail();
      const auto digit = static_cast<std::uint64_t>(c - '0');
      if (key > (~std::uint64_t{0} - digit) / 10) fail();
      key = key * 10 + digit;
    }
    op.key = key;
    ops.push_back(op);
  }
  return ops;
}

}  // namespace tinyptr
