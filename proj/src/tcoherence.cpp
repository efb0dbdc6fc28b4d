#include "hatric/tcoherence.hpp"

#include <algorithm>
#include <string>

namespace hatric {

namespace {

constexpr std::array kTlbs = {TStructKind::l1_tlb, TStructKind::l2_tlb};
constexpr std::array kWalkCaches = {TStructKind::mmu_cache, TStructKind::ntlb};

std::uint64_t invalidations_so_far(const std::vector<TranslationStructures>& all) {
  std::uint64_t n = 0;
  for (const auto& ts : all) {
    for (auto k : kAllTStructs) {
      n += ts.get(k).counters().selective_invalidations + ts.get(k).counters().flush_invalidations;
    }
  }
  return n;
}

}  // namespace

const char* to_string(CoherenceMode mode) {
  switch (mode) {
    case CoherenceMode::sw: return "sw";
    case CoherenceMode::hatric: return "hatric";
    case CoherenceMode::tlb_only: return "tlb-only";
    case CoherenceMode::ideal: return "ideal";
  }
  return "?";
}

CoherenceMode parse_mode(std::string_view text) {
  if (text == "sw") return CoherenceMode::sw;
  if (text == "hatric") return CoherenceMode::hatric;
  if (text == "tlb-only" || text == "tlb_only") return CoherenceMode::tlb_only;
  if (text == "ideal") return CoherenceMode::ideal;
  throw ConfigError("unknown coherence mode '" + std::string(text) + "'");
}

void CostModel::validate() const {
  if (probe_energy < 0 || message_energy < 0) throw ConfigError("energies must be non-negative");
}

class Platform::ModeProbe : public TranslationProbe {
 public:
  explicit ModeProbe(Platform& p) : p_(p) {}
  ProbeResult probe(CpuId cpu, LineAddr line, PtKind kind, ProbeCause cause) override {
    return p_.probe(cpu, line, kind, cause);
  }

 private:
  Platform& p_;
};

Platform::Platform(const PlatformConfig& cfg) : cfg_(cfg) {
  if (cfg.cpus == 0 || cfg.cpus > 63) throw ConfigError("cpus must be in 1..63");
  cfg.cost.validate();
  cfg.memory.validate();
  tables_ = PageTables(cfg.memory);
  mem_ = MemorySystem(cfg.cpus + 1, cfg.caches, cfg.latency, cfg.memory,
                      uses_directory_tracking(cfg.mode));
  ts_.assign(cfg.cpus + 1, TranslationStructures(cfg.tstruct));
  clocks_.assign(cfg.cpus + 1, 0);
}

void Platform::add_vm(VmId vm, const std::vector<CpuId>& cpus, bool virtualized) {
  if (vcpus_.contains(vm)) throw ConfigError("vm " + std::to_string(vm) + " already exists");
  std::vector<VcpuState> states;
  for (unsigned i = 0; i < cpus.size(); ++i) {
    if (cpus[i] >= cfg_.cpus) throw ConfigError("vcpu pinned to a cpu that does not exist");
    states.push_back({i, cpus[i], false, true});
  }
  tables_.create_vm(vm, virtualized);
  vcpus_[vm] = std::move(states);
}

const std::vector<VcpuState>& Platform::vcpus(VmId vm) const {
  auto it = vcpus_.find(vm);
  if (it == vcpus_.end()) throw ConfigError("unknown vm " + std::to_string(vm));
  return it->second;
}

std::vector<VmId> Platform::vms() const {
  std::vector<VmId> out;
  for (const auto& [vm, v] : vcpus_) out.push_back(vm);
  return out;
}

void Platform::apply_fill(CpuId cpu, const WalkFill& fill) {
  TranslationStructures& ts = ts_.at(cpu);
  TranslationEntry e;
  e.key = fill.key;
  e.payload = fill.payload;
  e.cotag = cotag_of(fill.source, ts.cotag_bits());
  e.source = fill.source;
  if (fill.target == TStructKind::l2_tlb || fill.target == TStructKind::l1_tlb) {
    ts.l2_tlb().fill(e);
    ts.l1_tlb().fill(e);
  } else {
    ts.get(fill.target).fill(e);
  }
}

Platform::WalkOutcome Platform::walk(CpuId cpu, AddressSpace as, Gvp gvp) {
  WalkOutcome out;
  out.walk = tables_.walk_2d(as, gvp, &ts_.at(cpu));
  ModeProbe mp(*this);
  for (const WalkRef& ref : out.walk.refs) {
    const PtKind kind = is_nested(ref.role) ? PtKind::nested : PtKind::guest;
    out.latency += mem_.walker_read(cpu, ref.spa, kind, ref.was_accessed, &mp);
  }
  for (const WalkFill& f : out.walk.fills) {
    if (mem_.translation_aware()) {
      // A later reference of this walk may have displaced the directory
      // entry of the fill's line; the back-invalidation already happened.
      const DirEntry* e = mem_.dir_entry(line_of(f.source));
      if (e == nullptr || !e->pt() || !e->has(cpu)) continue;
    }
    apply_fill(cpu, f);
  }
  return out;
}

ProbeResult Platform::probe(CpuId cpu, LineAddr line, PtKind /*kind*/, ProbeCause cause) {
  ProbeResult r;
  if (cpu >= ts_.size()) return r;
  TranslationStructures& ts = ts_[cpu];
  const CoTag tag = cotag_of(line, ts.cotag_bits());
  switch (cfg_.mode) {
    case CoherenceMode::hatric: {
      const auto inv = ts.invalidate_by_cotag(tag, kAllTStructs);
      r.entries = inv.total();
      r.matched = r.entries > 0;
      r.cycles = cfg_.cost.per_inv_cost * kAllTStructs.size();
      counters_.selective_invalidations += r.entries;
      break;
    }
    case CoherenceMode::tlb_only: {
      const auto inv = ts.invalidate_by_cotag(tag, kTlbs);
      const auto fl = ts.flush(kWalkCaches);
      r.entries = inv.total() + fl.total();
      r.matched = inv.total() > 0;
      r.cycles = cfg_.cost.per_inv_cost * kAllTStructs.size();
      counters_.selective_invalidations += inv.total();
      counters_.flushed_entries += fl.total();
      break;
    }
    case CoherenceMode::sw:
    case CoherenceMode::ideal:
      return r;
  }
  ++counters_.probes;
  counters_.probe_cycles += r.cycles;
  if (cause != ProbeCause::local_write) clocks_[cpu] += r.cycles;
  return r;
}

std::uint64_t Platform::access(CpuId cpu, Spa spa, bool write) {
  ModeProbe mp(*this);
  return write ? mem_.cpu_write(cpu, spa, &mp) : mem_.cpu_read(cpu, spa, &mp);
}

std::uint64_t Platform::on_pt_line_write(CpuId initiator, Spa entry) {
  ModeProbe mp(*this);
  return mem_.cpu_write(initiator, entry, &mp);
}

std::uint64_t Platform::sw_shootdown(VmId vm, CpuId initiator, RemapCause cause) {
  const auto& targets = vcpus(vm);
  ++counters_.shootdowns;
  const LineAddr none{0};
  std::uint64_t slowest = 0;
  for (const VcpuState& v : targets) {
    ++counters_.ipis;
    mem_.emit(EventKind::Ipi, none, static_cast<int>(initiator), static_cast<int>(v.cpu),
              cfg_.cost.ipi_cost);
  }
  for (VcpuState& v : vcpus_[vm]) {
    v.flush_request = true;
    std::uint64_t cost = 0;
    if (v.cpu != initiator && v.in_vm) {
      if (cause == RemapCause::guest) {
        ++counters_.guest_interrupts;
        cost = cfg_.cost.interrupt_cost;
      } else {
        ++counters_.vm_exits;
        cost = cfg_.cost.vm_exit_cost;
        mem_.emit(EventKind::VmExit, none, static_cast<int>(v.cpu), static_cast<int>(v.cpu), cost);
      }
      clocks_[v.cpu] += cost;
    }
    slowest = std::max(slowest, cost);
    // flushed when the vCPU re-enters the guest
    const auto fl = ts_[v.cpu].flush(kAllTStructs);
    ++counters_.full_flushes;
    counters_.flushed_entries += fl.total();
    mem_.emit(EventKind::Flush, none, static_cast<int>(v.cpu), static_cast<int>(v.cpu));
    v.flush_request = false;
  }
  const std::uint64_t stall =
      targets.size() * cfg_.cost.ipi_cost + slowest + mem_.latency().inv_roundtrip;
  counters_.initiator_stall += stall;
  return stall;
}

std::uint64_t Platform::remap_coherence(VmId vm, Gpp gpp, Spp new_spp, CpuId initiator,
                                        RemapCause cause) {
  if (before_remap) before_remap(*this, vm, gpp, new_spp, initiator, cause);
  const std::uint64_t before = invalidations_so_far(ts_);
  const RemapResult rr = tables_.remap_nested(vm, gpp, new_spp);
  ++counters_.remaps;
  mem_.emit(EventKind::Remap, rr.line, static_cast<int>(initiator), kDirectoryNode);
  std::uint64_t latency = 0;
  switch (cfg_.mode) {
    case CoherenceMode::sw:
      latency = mem_.cpu_write(initiator, rr.entry, nullptr);
      latency += sw_shootdown(vm, initiator, cause);
      break;
    case CoherenceMode::hatric:
    case CoherenceMode::tlb_only:
      latency = on_pt_line_write(initiator, rr.entry);
      break;
    case CoherenceMode::ideal:
      latency = mem_.cpu_write(initiator, rr.entry, nullptr);
      for (auto& ts : ts_) {
        for (auto k : kAllTStructs) counters_.selective_invalidations += ts.get(k).invalidate_source(rr.entry);
      }
      break;
  }
  if (on_remap) {
    on_remap({vm, gpp, rr.old_spp, new_spp, rr.entry, initiator, latency,
              invalidations_so_far(ts_) - before});
  }
  return latency;
}

}  // namespace hatric
