#pragma once

// Two-level memory manager. Pages live in fast (die-stacked) or slow
// DRAM; touching a slow page faults into the hypervisor, which migrates it
// (plus prefetched neighbours) into fast memory, evicting CLOCK victims
// when the pool is full. Every move is a nested remap.

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hatric/pagetable.hpp"
#include "hatric/tcoherence.hpp"

namespace hatric {

enum class Replacement : std::uint8_t { clock, fifo };

struct PagingPolicy {
  bool lru = true;  // paging enabled
  bool daemon = false;
  bool prefetch = false;
  unsigned prefetch_degree = 4;
  Replacement replacement = Replacement::clock;
  std::uint64_t low_watermark = 64;
  std::uint64_t high_watermark = 128;

  static PagingPolicy disabled();
  // "none", or a comma list drawn from lru, daemon, prefetch, fifo.
  static PagingPolicy parse(std::string_view text);
  std::string to_string() const;
  bool enabled() const { return lru; }
  void validate() const;
};

struct Resident {
  VmId vm = 0;
  Gpp gpp;
};

class FastMemPool {
 public:
  FastMemPool() = default;
  // Frames [first, first + capacity).
  FastMemPool(std::uint64_t first, std::uint64_t capacity);

  std::uint64_t capacity() const { return slots_.size(); }
  std::uint64_t resident_count() const { return resident_; }
  std::uint64_t free_count() const { return free_.size(); }
  bool contains(Spp spp) const { return spp.value >= first_ && spp.value < first_ + slots_.size(); }

  std::optional<Spp> take_free();
  void occupy(Spp spp, Resident who);
  // Empties a resident slot and puts the frame back on the free list.
  void release(Spp spp);
  const std::optional<Resident>& at(Spp spp) const { return slots_.at(spp.value - first_); }

  // CLOCK sweep. `referenced` reads and clears the page's access bit,
  // returning the value it had.
  template <class Referenced>
  std::optional<Spp> clock_select(Referenced&& referenced) {
    if (resident_ == 0) return std::nullopt;
    for (std::uint64_t step = 0; step < 2 * slots_.size() + 1; ++step) {
      const std::uint64_t i = hand_;
      hand_ = (hand_ + 1) % slots_.size();
      if (!slots_[i]) continue;
      if (!referenced(*slots_[i])) return Spp{first_ + i};
    }
    return std::nullopt;
  }
  std::optional<Spp> fifo_select();
  std::uint64_t hand() const { return hand_; }
  const std::deque<std::uint64_t>& free_list() const { return free_; }

 private:
  std::uint64_t first_ = 0;
  std::vector<std::optional<Resident>> slots_;
  std::vector<std::uint64_t> generation_;
  std::deque<std::uint64_t> free_;
  std::deque<std::pair<std::uint64_t, std::uint64_t>> fifo_;  // (slot, generation)
  std::uint64_t hand_ = 0;
  std::uint64_t resident_ = 0;
};

class SlowFramePool {
 public:
  SlowFramePool() = default;
  SlowFramePool(std::uint64_t first, std::uint64_t end) : next_(first), end_(end) {}
  std::optional<Spp> take();
  void release(Spp spp) { free_.push_back(spp.value); }
  std::uint64_t available() const { return (end_ - next_) + free_.size(); }

 private:
  std::uint64_t next_ = 0, end_ = 0;
  std::vector<std::uint64_t> free_;
};

struct HypervisorCounters {
  std::uint64_t faults = 0;
  std::uint64_t passthrough_faults = 0;
  std::uint64_t migrations_in = 0;
  std::uint64_t migrations_out = 0;
  std::uint64_t daemon_evictions = 0;
  std::uint64_t prefetches = 0;
  std::uint64_t fault_cycles = 0;
  std::uint64_t background_remaps = 0;
  std::uint64_t placed_fast = 0;
  std::uint64_t placed_slow = 0;

  double average_fault_latency() const {
    return faults == 0 ? 0.0 : static_cast<double>(fault_cycles) / static_cast<double>(faults);
  }
};

class Hypervisor {
 public:
  Hypervisor() = default;
  Hypervisor(const MemoryGeometry& geo, const PagingPolicy& policy, std::uint64_t seed);

  // Frame for a page touched for the first time: fast while the pool has
  // free frames and paging is on, slow otherwise.
  Spp place_new_page(VmId vm, Gpp gpp);

  struct FaultResult {
    std::vector<Gpp> migrated;
    std::uint64_t latency = 0;
  };
  // `gpp` currently maps to slow memory and was touched by `cpu`.
  FaultResult access_fault(Platform& p, VmId vm, Gpp gpp, CpuId cpu);

  struct Victim {
    VmId vm = 0;
    Gpp gpp;
    Spp spp;
  };
  std::optional<Victim> clock_select_victim(Platform& p);
  std::optional<Victim> select_victim(Platform& p);

  // Moves a resident page out to slow memory; returns initiator latency.
  std::uint64_t evict(Platform& p, const Victim& v, CpuId initiator);
  // Refills the free pool when it drops below the low watermark. Runs on
  // the daemon pseudo-CPU. Returns the number of pages evicted.
  unsigned migration_daemon_tick(Platform& p);
  // Moves one random page to another frame in the same region.
  bool background_remap(Platform& p);

  const FastMemPool& pool() const { return pool_; }
  const PagingPolicy& policy() const { return policy_; }
  const HypervisorCounters& counters() const { return counters_; }
  const std::vector<Resident>& pages() const { return pages_; }

 private:
  std::optional<std::uint64_t> migrate_in(Platform& p, VmId vm, Gpp gpp, Spp from, CpuId cpu,
                                          bool demand);

  MemoryGeometry geo_;
  PagingPolicy policy_;
  FastMemPool pool_;
  SlowFramePool slow_;
  std::vector<Resident> pages_;  // every data page ever placed
  std::mt19937_64 rng_;
  HypervisorCounters counters_;
};

}  // namespace hatric
