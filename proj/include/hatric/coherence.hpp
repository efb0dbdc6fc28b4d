#pragma once

// Private L1/L2 caches, a shared LLC, and a directory-based MESI protocol
// whose entries carry gPT/nPT bits. When a line holding page-table entries
// is written, invalidations fan out to the sharers' translation structures
// as well as their caches. Sharer lists for page-table lines are updated
// lazily on eviction and trimmed by demotion on spurious invalidations.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hatric/addr.hpp"
#include "hatric/pagetable.hpp"
#include "hatric/tstruct.hpp"

namespace hatric {

enum class Mesi : std::uint8_t { I, S, E, M };
char to_char(Mesi s);

enum class PtKind : std::uint8_t { none, guest, nested };

enum class ProbeCause : std::uint8_t { invalidate, back_invalidate, local_write };

struct ProbeResult {
  bool matched = false;
  unsigned entries = 0;
  std::uint64_t cycles = 0;
};

// Hook through which coherence reaches a CPU's translation structures.
class TranslationProbe {
 public:
  virtual ~TranslationProbe() = default;
  virtual ProbeResult probe(CpuId cpu, LineAddr line, PtKind kind, ProbeCause cause) = 0;
};

enum class EventKind : std::uint8_t {
  GetS,
  GetM,
  Upgrade,
  Inv,
  InvAck,
  Demote,
  BackInv,
  WalkerMark,
  Evict,
  Writeback,
  Ipi,
  VmExit,
  Flush,
  Remap,
};
const char* to_string(EventKind kind);

inline constexpr int kDirectoryNode = -1;

struct CoherenceEvent {
  std::uint64_t cycle = 0;
  EventKind kind = EventKind::GetS;
  LineAddr line;
  int src = kDirectoryNode;
  int dst = kDirectoryNode;
  std::uint64_t cost = 0;
};

// "cycle kind line src dst" with the directory printed as "dir".
std::string format_event(const CoherenceEvent& e);

using EventSink = std::function<void(const CoherenceEvent&)>;

struct CacheGeometry {
  unsigned l1_sets = 64;  // 32 KiB, 8-way
  unsigned l1_ways = 8;
  unsigned l2_sets = 512;  // 256 KiB, 8-way
  unsigned l2_ways = 8;
  unsigned llc_sets = 20480;  // 20 MiB, 16-way
  unsigned llc_ways = 16;
  unsigned dir_ways = 8;
  std::uint64_t dir_entries = 0;  // 0: twice the aggregate private L2 lines
  bool infinite_directory = false;

  void validate() const;
};

struct LatencyModel {
  std::uint64_t l1 = 4;
  std::uint64_t l2 = 12;
  std::uint64_t llc = 40;
  std::uint64_t fast_dram = 120;
  std::uint64_t slow_dram = 200;
  std::uint64_t remote_forward = 30;
  std::uint64_t inv_roundtrip = 40;
  double fast_bytes_per_cycle = 32.0;
  double slow_bytes_per_cycle = 8.0;
  std::uint64_t max_queue_delay = 1024;
};

struct DirEntry {
  std::uint64_t line = 0;
  std::uint64_t sharers = 0;  // bit per CPU; may include stale CPUs for PT lines
  int owner = -1;             // holder in E or M
  bool gpt = false;
  bool npt = false;
  bool valid = false;
  std::uint64_t stamp = 0;

  bool pt() const { return gpt || npt; }
  PtKind kind() const { return npt ? PtKind::nested : (gpt ? PtKind::guest : PtKind::none); }
  bool has(CpuId c) const { return (sharers >> c) & 1u; }
};

struct MemCounters {
  std::uint64_t l1_hits = 0;
  std::uint64_t l2_hits = 0;
  std::uint64_t llc_hits = 0;
  std::uint64_t llc_misses = 0;
  std::uint64_t remote_forwards = 0;
  std::uint64_t dram_fast = 0;  // 64-byte transfers
  std::uint64_t dram_slow = 0;
  std::uint64_t directory_lookups = 0;
  std::uint64_t directory_evictions = 0;
  std::uint64_t back_invalidations = 0;
  std::uint64_t inv_messages = 0;
  std::uint64_t spurious_probes = 0;
  std::uint64_t demotions = 0;
  std::uint64_t walker_marks = 0;
  std::uint64_t writebacks = 0;
  std::uint64_t messages = 0;
  std::uint64_t cache_probes = 0;
};

class PrivateCache {
 public:
  struct Line {
    std::uint64_t line = 0;
    Mesi state = Mesi::I;
    bool pt = false;  // filled by a walker or known to hold page-table entries
    std::uint64_t stamp = 0;
  };

  PrivateCache() = default;
  PrivateCache(const CacheGeometry& geo);

  bool in_l1(LineAddr line) const;
  Line* find(LineAddr line);
  const Line* find(LineAddr line) const;
  void touch_l1(LineAddr line);
  // Returns the L2 victim, if a valid line was displaced.
  std::optional<Line> insert(LineAddr line, Mesi state, bool pt);
  Mesi invalidate(LineAddr line);

  template <class Fn>
  void for_each_valid(Fn&& fn) const {
    for (const auto& l : l2_) {
      if (l.state != Mesi::I) fn(l);
    }
  }

 private:
  struct L1Line {
    std::uint64_t line = 0;
    bool valid = false;
    std::uint64_t stamp = 0;
  };
  void drop_l1(LineAddr line);

  unsigned l1_sets_ = 0, l1_ways_ = 0, l2_sets_ = 0, l2_ways_ = 0;
  std::vector<L1Line> l1_;
  std::vector<Line> l2_;
  std::uint64_t clock_ = 0;
};

class Directory {
 public:
  Directory() = default;
  Directory(std::uint64_t entries, unsigned ways, bool infinite);

  DirEntry* find(LineAddr line);
  const DirEntry* find(LineAddr line) const;
  // Allocates an entry for `line`; a displaced valid entry is returned
  // through `victim`.
  DirEntry& allocate(LineAddr line, std::optional<DirEntry>& victim);
  void release(LineAddr line);
  bool infinite() const { return infinite_; }

  template <class Fn>
  void for_each(Fn&& fn) const {
    if (infinite_) {
      for (const auto& [k, e] : map_) fn(e);
    } else {
      for (const auto& e : slots_) {
        if (e.valid) fn(e);
      }
    }
  }

 private:
  bool infinite_ = false;
  unsigned sets_ = 0, ways_ = 0;
  std::vector<DirEntry> slots_;
  std::unordered_map<std::uint64_t, DirEntry> map_;
  std::uint64_t clock_ = 0;
};

class MemorySystem {
 public:
  MemorySystem() = default;
  // `nodes` counts every agent with private caches (CPUs plus the
  // hypervisor daemon). `translation_aware` enables the gPT/nPT protocol.
  MemorySystem(unsigned nodes, const CacheGeometry& caches, const LatencyModel& lat,
               const MemoryGeometry& mem, bool translation_aware);

  void set_now(std::uint64_t cycle) { now_ = cycle; }
  std::uint64_t now() const { return now_; }

  std::uint64_t cpu_read(CpuId cpu, Spa spa, TranslationProbe* probe);
  // Walker fetch of a page-table entry. `access_was_set` is the entry's
  // access bit as found before this walk.
  std::uint64_t walker_read(CpuId cpu, Spa spa, PtKind kind, bool access_was_set,
                            TranslationProbe* probe);
  std::uint64_t cpu_write(CpuId cpu, Spa spa, TranslationProbe* probe);

  void evict_line(CpuId cpu, LineAddr line);
  void demote_sharer(CpuId cpu, LineAddr line);
  // Forces eviction of the directory entry for `line` (back-invalidation).
  void directory_evict(LineAddr line, TranslationProbe* probe);

  // Page copy between frames through DRAM; returns its latency.
  std::uint64_t copy_page(Spp from, Spp to);

  Mesi state(CpuId cpu, LineAddr line) const;
  bool in_l1(CpuId cpu, LineAddr line) const;
  const DirEntry* dir_entry(LineAddr line) const { return dir_.find(line); }
  const PrivateCache& cache(CpuId cpu) const { return caches_.at(cpu); }
  const Directory& directory() const { return dir_; }
  unsigned nodes() const { return static_cast<unsigned>(caches_.size()); }
  bool translation_aware() const { return aware_; }
  const MemCounters& counters() const { return counters_; }
  const LatencyModel& latency() const { return lat_; }

  void set_event_sink(EventSink sink) { sink_ = std::move(sink); }
  void emit(EventKind kind, LineAddr line, int src, int dst, std::uint64_t cost = 0);

 private:
  struct Channel {
    double bytes_per_cycle = 1.0;
    std::uint64_t base = 0;
    std::uint64_t busy_until = 0;
  };

  std::uint64_t fetch(LineAddr line);
  std::uint64_t transfer(Region region, std::uint64_t bytes, bool with_base);
  DirEntry& dir_lookup_or_allocate(LineAddr line, TranslationProbe* probe);
  void back_invalidate(const DirEntry& victim, TranslationProbe* probe);
  void install(CpuId cpu, LineAddr line, Mesi state, bool pt, TranslationProbe* probe);
  bool llc_access(LineAddr line);

  std::vector<PrivateCache> caches_;
  Directory dir_;
  unsigned llc_sets_ = 0, llc_ways_ = 0;
  std::vector<std::uint64_t> llc_tags_;  // line + 1; 0 marks empty
  std::vector<std::uint64_t> llc_stamps_;
  std::uint64_t llc_clock_ = 0;
  LatencyModel lat_;
  MemoryGeometry mem_;
  Channel fast_, slow_;
  bool aware_ = false;
  std::uint64_t now_ = 0;
  MemCounters counters_;
  EventSink sink_;
};

}  // namespace hatric
