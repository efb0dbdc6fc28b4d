#pragma once

// Per-CPU translation structures: L1/L2 TLB (GVP -> SPP), paging-structure
// MMU cache (GVP prefix -> guest table location) and nTLB (GPP -> SPP).
// Every entry carries a co-tag and a valid bit (S / I).

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hatric/addr.hpp"

namespace hatric {

using VmId = std::uint16_t;
using Pid = std::uint16_t;
using CpuId = std::uint32_t;

inline constexpr unsigned kMaxVms = 1u << 12;
inline constexpr unsigned kMaxPids = 1u << 12;

struct AddressSpace {
  VmId vm = 0;
  Pid pid = 0;
  auto operator<=>(const AddressSpace&) const = default;
};

// Packed lookup key: vm:12 | pid:12 | kind:2 | level:2 | page:36.
class TransKey {
 public:
  constexpr TransKey() = default;

  static constexpr TransKey tlb(AddressSpace as, Gvp gvp) { return pack(as, 0, 0, gvp.value); }
  // `levels` guest levels already resolved (1..3); the prefix is the top
  // 9*levels bits of the GVP.
  static constexpr TransKey mmu(AddressSpace as, Gvp gvp, unsigned levels) {
    const unsigned shift = kLevelBits * (kLevels - levels);
    return pack(as, 1, levels, gvp.value >> shift);
  }
  static constexpr TransKey ntlb(VmId vm, Gpp gpp) { return pack({vm, 0}, 2, 0, gpp.value); }

  constexpr std::uint64_t bits() const { return bits_; }
  constexpr VmId vm() const { return static_cast<VmId>(bits_ >> 52); }
  constexpr Pid pid() const { return static_cast<Pid>((bits_ >> 40) & 0xfff); }
  constexpr std::uint64_t page() const { return bits_ & (kMaxPageNumber - 1); }
  constexpr auto operator<=>(const TransKey&) const = default;

 private:
  static constexpr TransKey pack(AddressSpace as, unsigned kind, unsigned level,
                                 std::uint64_t page) {
    TransKey k;
    k.bits_ = (std::uint64_t{as.vm} << 52) | (std::uint64_t{as.pid} << 40) |
              (std::uint64_t{kind} << 38) | (std::uint64_t{level} << 36) |
              (page & (kMaxPageNumber - 1));
    return k;
  }
  std::uint64_t bits_ = 0;
};

struct TranslationEntry {
  TransKey key;
  std::uint64_t payload = 0;  // SPP for TLB/nTLB, table SPP for MMU cache
  CoTag cotag;
  // Exact fill-source address. Hardware keeps only the co-tag; this is
  // bookkeeping for the exact-invalidation mode and for oracle checks.
  Spa source;
  bool valid = false;
  std::uint64_t stamp = 0;
};

struct TStructCounters {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t fills = 0;
  std::uint64_t evictions = 0;
  std::uint64_t selective_invalidations = 0;
  std::uint64_t flush_invalidations = 0;
  std::uint64_t cotag_probes = 0;    // invalidation requests looked up
  std::uint64_t cotag_compares = 0;  // entries compared by those requests

  TStructCounters& operator+=(const TStructCounters& o);
};

// Set-associative structure with true LRU inside each set. `ways == 0`
// (or ways >= entries) makes it fully associative. Co-tag invalidation is
// associative over the whole structure regardless of set indexing.
class TranslationCache {
 public:
  TranslationCache() = default;
  TranslationCache(unsigned entries, unsigned ways);

  std::optional<std::uint64_t> lookup(TransKey key);
  const TranslationEntry* peek(TransKey key) const;

  // Inserts or replaces in place; returns the displaced LRU victim if a
  // valid entry had to be evicted.
  std::optional<TranslationEntry> fill(const TranslationEntry& entry);

  // Invalidates every valid entry whose co-tag names the same line as
  // `request`. Returns the number of entries invalidated.
  unsigned invalidate_by_cotag(CoTag request);

  // Exact-match invalidation on the recorded fill source line.
  unsigned invalidate_source_line(LineAddr line);
  unsigned invalidate_source(Spa source);

  unsigned flush();

  unsigned capacity() const { return static_cast<unsigned>(slots_.size()); }
  unsigned ways() const { return ways_; }
  unsigned valid_count() const;
  std::span<const TranslationEntry> entries() const { return slots_; }
  const TStructCounters& counters() const { return counters_; }

 private:
  std::size_t set_of(TransKey key) const;
  void filter_add(const TranslationEntry& e);
  void filter_remove(const TranslationEntry& e);
  void invalidate_slot(TranslationEntry& e);

  static constexpr std::size_t kFilterBuckets = 4096;

  std::vector<TranslationEntry> slots_;
  unsigned sets_ = 0;
  unsigned ways_ = 0;
  std::uint64_t clock_ = 0;
  // Counting filter over co-tag line keys, lets an invalidation skip the
  // scan when no resident entry can match.
  std::vector<std::uint16_t> filter_;
  TStructCounters counters_;
};

struct TstructConfig {
  unsigned l1_tlb_entries = 64;
  unsigned l1_tlb_ways = 4;
  unsigned l2_tlb_entries = 512;
  unsigned l2_tlb_ways = 8;
  unsigned ntlb_entries = 32;
  unsigned ntlb_ways = 0;
  unsigned mmu_cache_entries = 48;
  unsigned mmu_cache_ways = 0;
  unsigned size_multiplier = 1;
  unsigned cotag_bits = 16;

  void validate() const;
};

enum class TStructKind : std::uint8_t { l1_tlb, l2_tlb, mmu_cache, ntlb };
inline constexpr std::array kAllTStructs = {TStructKind::l1_tlb, TStructKind::l2_tlb,
                                            TStructKind::mmu_cache, TStructKind::ntlb};
const char* to_string(TStructKind kind);

class TranslationStructures {
 public:
  TranslationStructures() = default;
  explicit TranslationStructures(const TstructConfig& cfg);

  TranslationCache& get(TStructKind kind) { return caches_[static_cast<std::size_t>(kind)]; }
  const TranslationCache& get(TStructKind kind) const {
    return caches_[static_cast<std::size_t>(kind)];
  }

  TranslationCache& l1_tlb() { return get(TStructKind::l1_tlb); }
  TranslationCache& l2_tlb() { return get(TStructKind::l2_tlb); }
  TranslationCache& mmu_cache() { return get(TStructKind::mmu_cache); }
  TranslationCache& ntlb() { return get(TStructKind::ntlb); }

  unsigned cotag_bits() const { return cotag_bits_; }

  // Entries invalidated per structure.
  struct Invalidated {
    std::array<unsigned, 4> per_struct{};
    unsigned total() const { return per_struct[0] + per_struct[1] + per_struct[2] + per_struct[3]; }
  };

  Invalidated invalidate_by_cotag(CoTag request, std::span<const TStructKind> which);
  Invalidated flush(std::span<const TStructKind> which);
  unsigned valid_count() const;

 private:
  std::array<TranslationCache, 4> caches_;
  unsigned cotag_bits_ = 16;
};

}  // namespace hatric
