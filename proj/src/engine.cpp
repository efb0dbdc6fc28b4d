#include "hatric/engine.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace hatric {

namespace {

bool pow2(std::uint64_t v) { return v != 0 && std::has_single_bit(v); }

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string num(std::uint64_t v) { return std::to_string(v); }
std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

constexpr std::uint64_t kPidRegionShift = 28;

}  // namespace

void EnergyModel::validate() const {
  for (double v : {tstruct_probe, cache_probe, llc_access, directory_probe, message, dram_fast,
                   dram_slow, cotag_compare, static_per_cycle, tstruct_static_per_cycle,
                   cotag_static_per_byte}) {
    if (v < 0) throw ConfigError("energy parameters must be non-negative");
  }
}

void SimConfig::validate() const {
  if (cpus == 0 || cpus > 32) throw ConfigError("cpus must be in 1..32");
  if (vms == 0 || vcpus_per_vm == 0) throw ConfigError("need at least one vm and one vcpu");
  if (vcpus_per_vm > cpus) throw ConfigError("vcpus must not exceed cpus");
  if (vms * vcpus_per_vm > cpus) throw ConfigError("vms x vcpus exceeds cpus");
  if (vms > kMaxVms) throw ConfigError("too many vms");
  for (unsigned v : {caches.l1_sets, caches.l2_sets, caches.llc_ways, caches.l1_ways,
                     caches.l2_ways, caches.dir_ways}) {
    if (!pow2(v)) throw ConfigError("cache geometry must use powers of two");
  }
  for (unsigned v : {tstruct.l1_tlb_entries, tstruct.l2_tlb_entries, tstruct.ntlb_entries}) {
    if (!pow2(v)) throw ConfigError("translation structure sizes must be powers of two");
  }
  tstruct.validate();
  caches.validate();
  memory.validate();
  cost.validate();
  policy.validate();
  energy.validate();
  if (background_remap_rate < 0) throw ConfigError("background remap rate must be non-negative");
}

PlatformConfig SimConfig::platform() const {
  PlatformConfig p;
  p.cpus = cpus;
  p.mode = mode;
  p.tstruct = tstruct;
  p.caches = caches;
  p.latency = latency;
  p.memory = memory;
  p.cost = cost;
  return p;
}

double SimConfig::cotag_bytes_charged() const {
  switch (mode) {
    case CoherenceMode::hatric: return tstruct.cotag_bits / 8.0;
    case CoherenceMode::tlb_only: return 8.0;  // full physical-address CAM on the TLB
    case CoherenceMode::sw:
    case CoherenceMode::ideal: return 0.0;
  }
  return 0.0;
}

Energy energy_report(const Stats& s, const SimConfig& cfg) {
  const EnergyModel& e = cfg.energy;
  const double bytes = cfg.cotag_bytes_charged();
  Energy out;
  double tlookups = 0, compares = 0;
  for (const auto& c : s.tstruct) {
    tlookups += static_cast<double>(c.hits + c.misses + c.fills);
    compares += static_cast<double>(c.cotag_compares);
  }
  const MemCounters& m = s.memory;
  out.dynamic = e.tstruct_probe * tlookups + e.cotag_compare * compares * bytes +
                cfg.cost.probe_energy * static_cast<double>(s.coherence.probes) +
                e.cache_probe * static_cast<double>(m.l1_hits + m.l2_hits + m.cache_probes) +
                e.llc_access * static_cast<double>(m.llc_hits + m.llc_misses) +
                e.directory_probe * static_cast<double>(m.directory_lookups) +
                e.message * static_cast<double>(m.messages) +
                cfg.cost.message_energy * static_cast<double>(s.coherence.ipis) +
                e.dram_fast * static_cast<double>(m.dram_fast) +
                e.dram_slow * static_cast<double>(m.dram_slow);
  const double per_cycle =
      e.static_per_cycle +
      cfg.cpus * e.tstruct_static_per_cycle * (1.0 + e.cotag_static_per_byte * bytes);
  out.static_ = per_cycle * static_cast<double>(s.cycles);
  return out;
}

std::vector<std::pair<std::string, std::string>> Stats::fields() const {
  std::vector<std::pair<std::string, std::string>> f = {
      {"cycles", num(cycles)},
      {"records", num(records)},
      {"loads", num(loads)},
      {"stores", num(stores)},
      {"translations", num(translations)},
      {"l1_tlb_hits", num(l1_tlb_hits)},
      {"l2_tlb_hits", num(l2_tlb_hits)},
      {"tlb_misses", num(tlb_misses)},
      {"walks", num(walks)},
      {"walk_refs", num(walk_refs)},
      {"walk_cycles", num(walk_cycles)},
      {"mmu_levels_skipped", num(mmu_levels_skipped)},
      {"ntlb_walk_hits", num(ntlb_walk_hits)},
      {"guest_faults", num(guest_faults)},
      {"access_faults", num(access_faults)},
      {"data_cycles", num(data_cycles)},
  };
  for (auto k : kAllTStructs) {
    const TStructCounters& c = tstruct[static_cast<std::size_t>(k)];
    const std::string p = to_string(k);
    f.emplace_back(p + "_hits", num(c.hits));
    f.emplace_back(p + "_misses", num(c.misses));
    f.emplace_back(p + "_fills", num(c.fills));
    f.emplace_back(p + "_evictions", num(c.evictions));
    f.emplace_back(p + "_selective_invalidations", num(c.selective_invalidations));
    f.emplace_back(p + "_flush_invalidations", num(c.flush_invalidations));
  }
  const TCoherenceCounters& t = coherence;
  f.insert(f.end(), {
                        {"remaps", num(t.remaps)},
                        {"shootdowns", num(t.shootdowns)},
                        {"ipis", num(t.ipis)},
                        {"vm_exits", num(t.vm_exits)},
                        {"guest_interrupts", num(t.guest_interrupts)},
                        {"full_flushes", num(t.full_flushes)},
                        {"flushed_entries", num(t.flushed_entries)},
                        {"selective_invalidations", num(t.selective_invalidations)},
                        {"tcoherence_probes", num(t.probes)},
                        {"probe_cycles", num(t.probe_cycles)},
                        {"initiator_stall", num(t.initiator_stall)},
                    });
  const MemCounters& m = memory;
  f.insert(f.end(), {
                        {"l1_hits", num(m.l1_hits)},
                        {"l2_hits", num(m.l2_hits)},
                        {"llc_hits", num(m.llc_hits)},
                        {"llc_misses", num(m.llc_misses)},
                        {"remote_forwards", num(m.remote_forwards)},
                        {"dram_fast", num(m.dram_fast)},
                        {"dram_slow", num(m.dram_slow)},
                        {"directory_lookups", num(m.directory_lookups)},
                        {"directory_evictions", num(m.directory_evictions)},
                        {"back_invalidations", num(m.back_invalidations)},
                        {"inv_messages", num(m.inv_messages)},
                        {"spurious_probes", num(m.spurious_probes)},
                        {"demotions", num(m.demotions)},
                        {"walker_marks", num(m.walker_marks)},
                        {"writebacks", num(m.writebacks)},
                        {"messages", num(m.messages)},
                    });
  const HypervisorCounters& h = paging;
  f.insert(f.end(), {
                        {"faults", num(h.faults)},
                        {"passthrough_faults", num(h.passthrough_faults)},
                        {"migrations_in", num(h.migrations_in)},
                        {"migrations_out", num(h.migrations_out)},
                        {"daemon_evictions", num(h.daemon_evictions)},
                        {"prefetches", num(h.prefetches)},
                        {"avg_fault_latency", num(h.average_fault_latency())},
                        {"background_remaps", num(h.background_remaps)},
                        {"placed_fast", num(h.placed_fast)},
                        {"placed_slow", num(h.placed_slow)},
                        {"energy_dynamic", num(energy.dynamic)},
                        {"energy_static", num(energy.static_)},
                        {"energy_total", num(energy.total())},
                    });
  return f;
}

std::string Stats::to_key_value() const {
  std::string out;
  for (const auto& [k, v] : fields()) out += k + "=" + v + "\n";
  return out;
}

std::string Stats::csv_header() {
  std::string out;
  for (const auto& [k, v] : Stats{}.fields()) {
    if (!out.empty()) out += ',';
    out += k;
  }
  return out;
}

std::string Stats::csv_row() const {
  std::string out;
  for (const auto& [k, v] : fields()) {
    if (!out.empty()) out += ',';
    out += v;
  }
  return out;
}

// -------------------------------------------------------------- simulator

Simulator::Simulator(const SimConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  platform_ = Platform(cfg.platform());
  // paging and remaps act on nested tables; native runs have none
  hv_ = Hypervisor(cfg.memory, cfg.virtualized ? cfg.policy : PagingPolicy::disabled(), cfg.seed);
  for (unsigned v = 0; v < cfg.vms; ++v) {
    std::vector<CpuId> cpus;
    for (unsigned j = 0; j < cfg.vcpus_per_vm; ++j) cpus.push_back(v * cfg.vcpus_per_vm + j);
    platform_.add_vm(static_cast<VmId>(v), cpus, cfg.virtualized);
  }
}

void Simulator::set_event_log(std::ostream* out) {
  if (out == nullptr) {
    platform_.memory().set_event_sink({});
    return;
  }
  platform_.memory().set_event_sink([out](const CoherenceEvent& e) { *out << format_event(e) << '\n'; });
}

void Simulator::guest_fault(AddressSpace as, Gvp gvp) {
  ++stats_.guest_faults;
  if (as.pid >= (kTableGppBase >> kPidRegionShift)) throw ConfigError("pid too large for guest memory layout");
  std::uint64_t& next = next_gpp_[as];
  if (next >= (1ull << kPidRegionShift)) throw AllocationError("guest physical region exhausted");
  const Gpp gpp{(std::uint64_t{as.pid} << kPidRegionShift) + next++};
  const Spp spp = hv_.place_new_page(as.vm, gpp);
  PageTables& pt = platform_.tables();
  if (pt.virtualized(as.vm)) {
    pt.map_guest(as, gvp, gpp);
    pt.map_nested(as.vm, gpp, spp);
  } else {
    pt.map_native(as, gvp, spp);
  }
}

Simulator::Translated Simulator::translate(CpuId cpu, AddressSpace as, Gvp gvp) {
  Translated out;
  TranslationStructures& ts = platform_.tstructs(cpu);
  const TransKey key = TransKey::tlb(as, gvp);
  ++stats_.translations;
  if (auto hit = ts.l1_tlb().lookup(key)) {
    ++stats_.l1_tlb_hits;
    out.spp = Spp{*hit};
    return out;
  }
  if (auto hit = ts.l2_tlb().lookup(key)) {
    ++stats_.l2_tlb_hits;
    ts.l1_tlb().fill(*ts.l2_tlb().peek(key));
    out.spp = Spp{*hit};
    out.latency = cfg_.l2_tlb_latency;
    return out;
  }
  ++stats_.tlb_misses;
  out.latency = cfg_.l2_tlb_latency;
  if (!platform_.tables().translate(as, gvp)) {
    guest_fault(as, gvp);
    out.latency += cfg_.guest_fault_cost;
  }
  const auto w = platform_.walk(cpu, as, gvp);
  ++stats_.walks;
  stats_.walk_refs += w.walk.refs.size();
  stats_.walk_cycles += w.latency;
  stats_.mmu_levels_skipped += w.walk.mmu_levels_skipped;
  stats_.ntlb_walk_hits += w.walk.ntlb_hits;
  out.latency += w.latency;
  out.spp = w.walk.spp;
  return out;
}

std::uint64_t Simulator::translate_and_access(CpuId cpu, const TraceRecord& rec, std::uint64_t index) {
  const AddressSpace as{rec.vm, rec.pid};
  Translated t = translate(cpu, as, rec.gvp);
  std::uint64_t latency = t.latency;
  const MemoryGeometry& geo = cfg_.memory;
  PageTables& pt = platform_.tables();
  if (hv_.policy().enabled() && pt.virtualized(rec.vm) && geo.region_of(t.spp) == Region::slow) {
    const auto gpp = pt.guest_lookup(as, rec.gvp);
    const auto fr = hv_.access_fault(platform_, rec.vm, *gpp, cpu);
    ++stats_.access_faults;
    latency += fr.latency;
    if (!fr.migrated.empty()) {
      t = translate(cpu, as, rec.gvp);
      latency += t.latency;
    }
  }
  if (hv_.pool().contains(t.spp)) {
    if (const auto& r = hv_.pool().at(t.spp)) {
      if (!pt.nested_accessed(r->vm, r->gpp)) pt.set_nested_accessed(r->vm, r->gpp, true);
    }
  }
  const std::uint64_t line = mix(index ^ (cfg_.seed << 32)) % kLinesPerPage;
  const Spa spa{page_base(t.spp).value + line * kLineSize};
  const std::uint64_t data = platform_.access(cpu, spa, rec.op == Op::store);
  stats_.data_cycles += data;
  return latency + data;
}

void Simulator::step(const TraceRecord& rec, std::uint64_t index) {
  if (rec.vm >= cfg_.vms) throw ParseError(index, "vm " + std::to_string(rec.vm) + " not configured");
  if (rec.cpu >= cfg_.vcpus_per_vm) {
    throw ParseError(index, "cpu " + std::to_string(rec.cpu) + " exceeds the vm's vcpus");
  }
  const CpuId cpu = physical_cpu(rec);
  ++stats_.records;
  ++(rec.op == Op::load ? stats_.loads : stats_.stores);
  platform_.memory().set_now(platform_.clock(cpu));
  const std::uint64_t latency = translate_and_access(cpu, rec, index);
  platform_.clock(cpu) += latency;
  platform_.memory().set_now(platform_.clock(cpu));
  hv_.migration_daemon_tick(platform_);
  if (cfg_.background_remap_rate > 0 && cfg_.virtualized) {
    remap_credit_ += cfg_.background_remap_rate / 1e6;
    while (remap_credit_ >= 1.0) {
      remap_credit_ -= 1.0;
      hv_.background_remap(platform_);
    }
  }
  if (on_step) on_step(index, rec);
}

Stats Simulator::run(TraceSource& trace) {
  std::uint64_t index = stats_.records;
  while (auto rec = trace.next()) step(*rec, index++);
  return stats();
}

Stats Simulator::stats() const {
  Stats s = stats_;
  s.cycles = 0;
  for (unsigned c = 0; c < cfg_.vms * cfg_.vcpus_per_vm; ++c) s.cycles = std::max(s.cycles, platform_.clock(c));
  for (CpuId c = 0; c <= cfg_.cpus; ++c) {
    for (auto k : kAllTStructs) {
      s.tstruct[static_cast<std::size_t>(k)] += platform_.tstructs(c).get(k).counters();
    }
  }
  s.coherence = platform_.counters();
  s.memory = platform_.memory().counters();
  s.paging = hv_.counters();
  s.energy = energy_report(s, cfg_);
  return s;
}

std::vector<Simulator::Translation> Simulator::translation_state() const {
  std::vector<Translation> out;
  const PageTables& pt = platform_.tables();
  for (const AddressSpace& as : pt.address_spaces()) {
    for (const auto& [gvp, gpp] : pt.guest_mappings(as)) {
      if (auto spp = pt.translate(as, gvp)) out.push_back({as, gvp, *spp});
    }
  }
  return out;
}

}  // namespace hatric
