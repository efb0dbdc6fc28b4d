#pragma once

// Translation coherence modes and the platform they act on: page tables,
// the memory system and every CPU's translation structures.
//
//   sw        IPIs + VM exits + full flushes on every vCPU of the VM
//   hatric    co-tag invalidation in TLBs, MMU cache and nTLB at sharers
//   tlb_only  co-tag invalidation in TLBs, MMU cache and nTLB flushed
//   ideal     exact invalidation at every CPU, no coherence cost

#include <cstdint>
#include <functional>
#include <map>
#include <string_view>
#include <vector>

#include "hatric/coherence.hpp"
#include "hatric/pagetable.hpp"
#include "hatric/tstruct.hpp"

namespace hatric {

enum class CoherenceMode : std::uint8_t { sw, hatric, tlb_only, ideal };
const char* to_string(CoherenceMode mode);
CoherenceMode parse_mode(std::string_view text);
constexpr bool uses_directory_tracking(CoherenceMode m) {
  return m == CoherenceMode::hatric || m == CoherenceMode::tlb_only;
}

struct CostModel {
  std::uint64_t ipi_cost = 1500;
  std::uint64_t vm_exit_cost = 1300;
  std::uint64_t interrupt_cost = 640;
  std::uint64_t per_inv_cost = 2;  // per structure probed
  double probe_energy = 1.0;
  double message_energy = 2.0;

  void validate() const;
};

struct VcpuState {
  unsigned vcpu = 0;
  CpuId cpu = 0;
  bool flush_request = false;
  bool in_vm = true;
};

enum class RemapCause : std::uint8_t { hypervisor, guest };

struct TCoherenceCounters {
  std::uint64_t remaps = 0;
  std::uint64_t shootdowns = 0;
  std::uint64_t ipis = 0;
  std::uint64_t vm_exits = 0;
  std::uint64_t guest_interrupts = 0;
  std::uint64_t full_flushes = 0;
  std::uint64_t flushed_entries = 0;
  std::uint64_t selective_invalidations = 0;
  std::uint64_t probes = 0;
  std::uint64_t probe_cycles = 0;
  std::uint64_t initiator_stall = 0;
};

struct RemapRecord {
  VmId vm = 0;
  Gpp gpp;
  Spp old_spp;
  Spp new_spp;
  Spa entry;
  CpuId initiator = 0;
  std::uint64_t latency = 0;
  std::uint64_t invalidated = 0;  // translation entries dropped by this remap
};

struct PlatformConfig {
  unsigned cpus = 16;
  CoherenceMode mode = CoherenceMode::hatric;
  TstructConfig tstruct;
  CacheGeometry caches;
  LatencyModel latency;
  MemoryGeometry memory;
  CostModel cost;
};

// Value type: copying a Platform snapshots the whole simulated machine.
class Platform {
 public:
  Platform() = default;
  explicit Platform(const PlatformConfig& cfg);

  void add_vm(VmId vm, const std::vector<CpuId>& cpus, bool virtualized = true);
  const std::vector<VcpuState>& vcpus(VmId vm) const;
  std::vector<VmId> vms() const;

  unsigned cpus() const { return cfg_.cpus; }
  // Pseudo-CPU on which the hypervisor's background work runs.
  CpuId daemon_cpu() const { return cfg_.cpus; }

  struct WalkOutcome {
    WalkResult walk;
    std::uint64_t latency = 0;
  };
  // Walk issued by `cpu`: every reference goes through the memory system
  // and the resulting fills land in that CPU's structures.
  WalkOutcome walk(CpuId cpu, AddressSpace as, Gvp gvp);
  void apply_fill(CpuId cpu, const WalkFill& fill);

  // Ordinary data load/store by `cpu`.
  std::uint64_t access(CpuId cpu, Spa spa, bool write);

  // Changes the nested mapping of `gpp` and keeps translations coherent.
  // Returns the latency seen by the initiator; target costs go to their
  // clocks.
  std::uint64_t remap_coherence(VmId vm, Gpp gpp, Spp new_spp, CpuId initiator,
                                RemapCause cause = RemapCause::hypervisor);
  // Store to a page-table entry routed through the directory.
  std::uint64_t on_pt_line_write(CpuId initiator, Spa entry);
  std::uint64_t sw_shootdown(VmId vm, CpuId initiator, RemapCause cause);

  // Translation-structure side of an invalidation arriving at `cpu`.
  ProbeResult probe(CpuId cpu, LineAddr line, PtKind kind, ProbeCause cause);

  CoherenceMode mode() const { return cfg_.mode; }
  // Switching mode on a live platform is meant for what-if comparisons on
  // snapshots; the memory system keeps its tracking setting.
  void set_mode(CoherenceMode m) { cfg_.mode = m; }
  const PlatformConfig& config() const { return cfg_; }
  const CostModel& cost() const { return cfg_.cost; }

  PageTables& tables() { return tables_; }
  const PageTables& tables() const { return tables_; }
  MemorySystem& memory() { return mem_; }
  const MemorySystem& memory() const { return mem_; }
  TranslationStructures& tstructs(CpuId cpu) { return ts_.at(cpu); }
  const TranslationStructures& tstructs(CpuId cpu) const { return ts_.at(cpu); }
  std::uint64_t& clock(CpuId cpu) { return clocks_.at(cpu); }
  std::uint64_t clock(CpuId cpu) const { return clocks_.at(cpu); }
  const TCoherenceCounters& counters() const { return counters_; }

  // Called with the machine state just before a remap, and with the record
  // once the remap has completed.
  std::function<void(const Platform&, VmId, Gpp, Spp, CpuId, RemapCause)> before_remap;
  std::function<void(const RemapRecord&)> on_remap;

 private:
  class ModeProbe;

  PlatformConfig cfg_;
  PageTables tables_;
  MemorySystem mem_;
  std::vector<TranslationStructures> ts_;
  std::vector<std::uint64_t> clocks_;
  std::map<VmId, std::vector<VcpuState>> vcpus_;
  TCoherenceCounters counters_;
};

}  // namespace hatric
