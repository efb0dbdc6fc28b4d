#pragma once

// Address arithmetic shared by every layer of the simulator: page numbers
// for the three translation layers, system physical byte addresses, cache
// lines, and co-tags.

#include <array>
#include <compare>
#include <cstdint>
#include <functional>

#include "hatric/error.hpp"

namespace hatric {

inline constexpr unsigned kPageShift = 12;
inline constexpr std::uint64_t kPageSize = 1ull << kPageShift;
inline constexpr unsigned kLineShift = 6;
inline constexpr std::uint64_t kLineSize = 1ull << kLineShift;
inline constexpr unsigned kPteSize = 8;
inline constexpr unsigned kPtesPerLine = kLineSize / kPteSize;
inline constexpr unsigned kLevelBits = 9;
inline constexpr unsigned kEntriesPerTable = 1u << kLevelBits;
inline constexpr unsigned kLevels = 4;
inline constexpr unsigned kLinesPerPage = kPageSize / kLineSize;
// Page numbers reachable through a 4-level radix tree.
inline constexpr unsigned kTranslatedBits = kLevelBits * kLevels;
inline constexpr std::uint64_t kMaxPageNumber = 1ull << kTranslatedBits;

template <class Tag>
struct PageNumber {
  std::uint64_t value = 0;

  constexpr PageNumber() = default;
  constexpr explicit PageNumber(std::uint64_t v) : value(v) {}
  constexpr auto operator<=>(const PageNumber&) const = default;
};

struct GvpTag {};
struct GppTag {};
struct SppTag {};

using Gvp = PageNumber<GvpTag>;  // guest virtual page
using Gpp = PageNumber<GppTag>;  // guest physical page
using Spp = PageNumber<SppTag>;  // system physical page

// System physical byte address.
struct Spa {
  std::uint64_t value = 0;

  constexpr Spa() = default;
  constexpr explicit Spa(std::uint64_t v) : value(v) {}
  constexpr auto operator<=>(const Spa&) const = default;
};

struct LineAddr {
  std::uint64_t value = 0;

  constexpr LineAddr() = default;
  constexpr explicit LineAddr(std::uint64_t v) : value(v) {}
  constexpr auto operator<=>(const LineAddr&) const = default;
};

constexpr Spa page_base(Spp spp) { return Spa{spp.value << kPageShift}; }
constexpr Spp page_of(Spa spa) { return Spp{spa.value >> kPageShift}; }
constexpr LineAddr line_of(Spa spa) { return LineAddr{spa.value >> kLineShift}; }
constexpr Spa line_base(LineAddr line) { return Spa{line.value << kLineShift}; }

// Address of entry `index` in the table page `table`.
constexpr Spa entry_spa(Spp table, unsigned index) {
  return Spa{(table.value << kPageShift) + std::uint64_t{index} * kPteSize};
}

// Radix indices, most significant level first: {idx4, idx3, idx2, idx1}.
constexpr std::array<unsigned, kLevels> pt_indices(std::uint64_t page) {
  std::array<unsigned, kLevels> out{};
  for (unsigned i = 0; i < kLevels; ++i) {
    const unsigned shift = kLevelBits * (kLevels - 1 - i);
    out[i] = static_cast<unsigned>((page >> shift) & (kEntriesPerTable - 1));
  }
  return out;
}

// Co-tag: a slice of the system physical address of the page-table entry a
// translation was filled from. The slice starts at bit 3 so each of the 8
// entries sharing a line gets its own value; invalidation requests are
// line-granular and compare only the bits above the entry index.
class CoTag {
 public:
  constexpr CoTag() = default;
  constexpr CoTag(std::uint32_t value, unsigned width) : value_(value), width_(width) {}

  constexpr std::uint32_t value() const { return value_; }
  constexpr unsigned width() const { return width_; }
  // Part of the co-tag that identifies the line (drops the entry index).
  constexpr std::uint32_t line_key() const { return value_ >> 3; }
  constexpr bool same_line(const CoTag& other) const { return line_key() == other.line_key(); }

  constexpr bool operator==(const CoTag&) const = default;

 private:
  std::uint32_t value_ = 0;
  unsigned width_ = 0;
};

constexpr bool valid_cotag_width(unsigned width) {
  return width == 8 || width == 16 || width == 24;
}

inline CoTag cotag_of(Spa spa, unsigned width) {
  if (!valid_cotag_width(width)) {
    throw ConfigError("co-tag width must be 8, 16 or 24 bits");
  }
  if (spa.value % kPteSize != 0) {
    throw AlignmentError("page-table entry address is not 8-byte aligned");
  }
  const std::uint64_t mask = (1ull << width) - 1;
  return CoTag{static_cast<std::uint32_t>((spa.value >> 3) & mask), width};
}

// Co-tag that an invalidation for `line` carries.
inline CoTag cotag_of(LineAddr line, unsigned width) { return cotag_of(line_base(line), width); }

}  // namespace hatric

template <class Tag>
struct std::hash<hatric::PageNumber<Tag>> {
  std::size_t operator()(const hatric::PageNumber<Tag>& p) const noexcept {
    return std::hash<std::uint64_t>{}(p.value);
  }
};

template <>
struct std::hash<hatric::LineAddr> {
  std::size_t operator()(const hatric::LineAddr& l) const noexcept {
    return std::hash<std::uint64_t>{}(l.value);
  }
};
