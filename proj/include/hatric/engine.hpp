#pragma once

// Trace-driven simulation core. Records are consumed in trace order; each
// CPU keeps its own cycle clock and a run's length is the slowest CPU.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hatric/hypervisor.hpp"
#include "hatric/tcoherence.hpp"
#include "hatric/trace.hpp"

namespace hatric {

struct EnergyModel {
  double tstruct_probe = 0.5;   // per lookup or fill
  double cache_probe = 1.0;     // per private-cache access or remote probe
  double llc_access = 4.0;
  double directory_probe = 1.0;
  double message = 2.0;
  double dram_fast = 40.0;      // per 64-byte transfer
  double dram_slow = 80.0;
  double cotag_compare = 0.01;  // per entry compared, per co-tag byte
  double static_per_cycle = 8.0;          // chip, excluding translation structures
  double tstruct_static_per_cycle = 0.5;  // per CPU
  double cotag_static_per_byte = 0.02;    // fraction of tstruct static power

  void validate() const;
};

struct SimConfig {
  unsigned cpus = 16;
  unsigned vms = 1;
  unsigned vcpus_per_vm = 16;
  bool virtualized = true;
  CoherenceMode mode = CoherenceMode::hatric;
  TstructConfig tstruct;
  CacheGeometry caches;
  LatencyModel latency;
  MemoryGeometry memory;
  CostModel cost;
  PagingPolicy policy;
  EnergyModel energy;
  std::uint64_t seed = 1;
  std::uint64_t guest_fault_cost = 500;
  std::uint64_t l2_tlb_latency = 7;
  double background_remap_rate = 0.0;  // per million records

  void validate() const;
  PlatformConfig platform() const;
  // Co-tag bytes charged for static power (0 when the mode has none).
  double cotag_bytes_charged() const;
};

struct Energy {
  double dynamic = 0;
  double static_ = 0;
  double total() const { return dynamic + static_; }
};

struct Stats {
  std::uint64_t cycles = 0;
  std::uint64_t records = 0;
  std::uint64_t loads = 0;
  std::uint64_t stores = 0;
  std::uint64_t translations = 0;
  std::uint64_t l1_tlb_hits = 0;
  std::uint64_t l2_tlb_hits = 0;
  std::uint64_t tlb_misses = 0;
  std::uint64_t walks = 0;
  std::uint64_t walk_refs = 0;
  std::uint64_t walk_cycles = 0;
  std::uint64_t mmu_levels_skipped = 0;
  std::uint64_t ntlb_walk_hits = 0;
  std::uint64_t guest_faults = 0;
  std::uint64_t access_faults = 0;
  std::uint64_t data_cycles = 0;
  std::array<TStructCounters, 4> tstruct{};
  TCoherenceCounters coherence;
  MemCounters memory;
  HypervisorCounters paging;
  Energy energy;

  // Ordered (name, value) pairs; the basis of both serializations.
  std::vector<std::pair<std::string, std::string>> fields() const;
  std::string to_key_value() const;
  static std::string csv_header();
  std::string csv_row() const;
};

Energy energy_report(const Stats& stats, const SimConfig& cfg);

class Simulator {
 public:
  explicit Simulator(const SimConfig& cfg);

  Stats run(TraceSource& trace);
  // One record; `index` is its position in the trace.
  void step(const TraceRecord& rec, std::uint64_t index);
  std::uint64_t translate_and_access(CpuId cpu, const TraceRecord& rec, std::uint64_t index);
  Stats stats() const;

  CpuId physical_cpu(const TraceRecord& rec) const { return rec.vm * cfg_.vcpus_per_vm + rec.cpu; }

  // (address space, gvp, spp) for every mapped page, sorted.
  struct Translation {
    AddressSpace as;
    Gvp gvp;
    Spp spp;
    bool operator==(const Translation&) const = default;
  };
  std::vector<Translation> translation_state() const;

  void set_event_log(std::ostream* out);

  Platform& platform() { return platform_; }
  const Platform& platform() const { return platform_; }
  Hypervisor& hypervisor() { return hv_; }
  const Hypervisor& hypervisor() const { return hv_; }
  const SimConfig& config() const { return cfg_; }

  std::function<void(std::uint64_t index, const TraceRecord&)> on_step;

 private:
  struct Translated {
    Spp spp;
    std::uint64_t latency = 0;
  };
  Translated translate(CpuId cpu, AddressSpace as, Gvp gvp);
  void guest_fault(AddressSpace as, Gvp gvp);

  SimConfig cfg_;
  Platform platform_;
  Hypervisor hv_;
  Stats stats_;
  std::map<AddressSpace, std::uint64_t> next_gpp_;
  double remap_credit_ = 0;
};

}  // namespace hatric
