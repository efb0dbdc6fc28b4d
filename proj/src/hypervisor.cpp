#include "hatric/hypervisor.hpp"

#include <algorithm>
#include <sstream>

namespace hatric {

PagingPolicy PagingPolicy::disabled() {
  PagingPolicy p;
  p.lru = false;
  return p;
}

PagingPolicy PagingPolicy::parse(std::string_view text) {
  PagingPolicy p = disabled();
  if (text == "none" || text == "no-hbm" || text.empty()) return p;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string_view flag = text.substr(pos, comma - pos);
    if (flag == "lru") {
      p.lru = true;
    } else if (flag == "daemon" || flag == "mig-dmn") {
      p.daemon = true;
    } else if (flag == "prefetch" || flag == "pref") {
      p.prefetch = true;
    } else if (flag == "fifo") {
      p.lru = true;
      p.replacement = Replacement::fifo;
    } else {
      throw ConfigError("unknown paging policy flag '" + std::string(flag) + "'");
    }
    pos = comma + 1;
  }
  p.validate();
  return p;
}

std::string PagingPolicy::to_string() const {
  if (!lru) return "none";
  std::string s = replacement == Replacement::fifo ? "fifo" : "lru";
  if (daemon) s += ",daemon";
  if (prefetch) s += ",prefetch";
  return s;
}

void PagingPolicy::validate() const {
  if (!lru && (daemon || prefetch)) throw ConfigError("daemon and prefetch require lru paging");
  if (low_watermark > high_watermark) throw ConfigError("low watermark above high watermark");
  if (prefetch && prefetch_degree == 0) throw ConfigError("prefetch degree must be positive");
}

// ------------------------------------------------------------------ pool

FastMemPool::FastMemPool(std::uint64_t first, std::uint64_t capacity)
    : first_(first), slots_(capacity), generation_(capacity, 0) {
  for (std::uint64_t i = 0; i < capacity; ++i) free_.push_back(first + i);
}

std::optional<Spp> FastMemPool::take_free() {
  if (free_.empty()) return std::nullopt;
  const std::uint64_t f = free_.front();
  free_.pop_front();
  return Spp{f};
}

void FastMemPool::occupy(Spp spp, Resident who) {
  if (!contains(spp)) throw AllocationError("frame outside the fast pool");
  const std::uint64_t i = spp.value - first_;
  if (slots_[i]) throw AllocationError("fast frame already resident");
  slots_[i] = who;
  ++generation_[i];
  fifo_.emplace_back(i, generation_[i]);
  ++resident_;
}

void FastMemPool::release(Spp spp) {
  if (!contains(spp)) throw AllocationError("frame outside the fast pool");
  const std::uint64_t i = spp.value - first_;
  if (!slots_[i]) throw AllocationError("releasing a free fast frame");
  slots_[i].reset();
  ++generation_[i];
  --resident_;
  free_.push_back(spp.value);
}

std::optional<Spp> FastMemPool::fifo_select() {
  while (!fifo_.empty()) {
    const auto [i, gen] = fifo_.front();
    fifo_.pop_front();
    if (slots_[i] && generation_[i] == gen) return Spp{first_ + i};
  }
  return std::nullopt;
}

std::optional<Spp> SlowFramePool::take() {
  if (!free_.empty()) {
    const std::uint64_t f = free_.back();
    free_.pop_back();
    return Spp{f};
  }
  if (next_ == end_) return std::nullopt;
  return Spp{next_++};
}

// ------------------------------------------------------------ hypervisor

Hypervisor::Hypervisor(const MemoryGeometry& geo, const PagingPolicy& policy, std::uint64_t seed)
    : geo_(geo), policy_(policy), rng_(seed ^ 0x68797076ull) {
  policy.validate();
  const auto [flo, fhi] = geo.data_range(Region::fast);
  pool_ = FastMemPool(flo, fhi - flo);
  const auto [slo, shi] = geo.data_range(Region::slow);
  slow_ = SlowFramePool(slo, shi);
}

Spp Hypervisor::place_new_page(VmId vm, Gpp gpp) {
  pages_.push_back({vm, gpp});
  if (policy_.enabled()) {
    if (auto f = pool_.take_free()) {
      pool_.occupy(*f, {vm, gpp});
      ++counters_.placed_fast;
      return *f;
    }
  }
  auto s = slow_.take();
  if (!s) throw AllocationError("out of physical memory");
  ++counters_.placed_slow;
  return *s;
}

std::optional<Hypervisor::Victim> Hypervisor::clock_select_victim(Platform& p) {
  PageTables& pt = p.tables();
  auto spp = pool_.clock_select([&](const Resident& r) {
    const bool was = pt.nested_accessed(r.vm, r.gpp);
    if (was) pt.set_nested_accessed(r.vm, r.gpp, false);
    return was;
  });
  if (!spp) return std::nullopt;
  const Resident& r = *pool_.at(*spp);
  return Victim{r.vm, r.gpp, *spp};
}

std::optional<Hypervisor::Victim> Hypervisor::select_victim(Platform& p) {
  if (policy_.replacement == Replacement::clock) return clock_select_victim(p);
  auto spp = pool_.fifo_select();
  if (!spp) return std::nullopt;
  const Resident& r = *pool_.at(*spp);
  return Victim{r.vm, r.gpp, *spp};
}

std::uint64_t Hypervisor::evict(Platform& p, const Victim& v, CpuId initiator) {
  auto to = slow_.take();
  if (!to) throw AllocationError("no slow frame for eviction");
  std::uint64_t latency = p.memory().copy_page(v.spp, *to);
  latency += p.remap_coherence(v.vm, v.gpp, *to, initiator);
  pool_.release(v.spp);
  ++counters_.migrations_out;
  return latency;
}

std::optional<std::uint64_t> Hypervisor::migrate_in(Platform& p, VmId vm, Gpp gpp, Spp from,
                                                    CpuId cpu, bool demand) {
  std::uint64_t latency = 0;
  auto frame = pool_.take_free();
  if (!frame) {
    auto v = select_victim(p);
    if (!v) return std::nullopt;
    latency += evict(p, *v, cpu);
    frame = pool_.take_free();
  }
  // occupy first so a victim sweep during the remap cannot pick this frame
  pool_.occupy(*frame, {vm, gpp});
  latency += p.memory().copy_page(from, *frame);
  latency += p.remap_coherence(vm, gpp, *frame, cpu);
  slow_.release(from);
  if (demand) p.tables().set_nested_accessed(vm, gpp, true);
  ++counters_.migrations_in;
  return latency;
}

Hypervisor::FaultResult Hypervisor::access_fault(Platform& p, VmId vm, Gpp gpp, CpuId cpu) {
  FaultResult out;
  ++counters_.faults;
  out.latency = p.cost().vm_exit_cost;
  auto from = p.tables().nested_lookup(vm, gpp);
  if (!from) throw MissingMappingError("fault on unmapped gpp " + std::to_string(gpp.value));
  if (!policy_.enabled() || geo_.region_of(*from) == Region::fast ||
      (pool_.free_count() == 0 && pool_.resident_count() == 0)) {
    ++counters_.passthrough_faults;
    counters_.fault_cycles += out.latency;
    return out;
  }
  auto moved = migrate_in(p, vm, gpp, *from, cpu, true);
  if (!moved) {
    ++counters_.passthrough_faults;
    counters_.fault_cycles += out.latency;
    return out;
  }
  out.latency += *moved;
  out.migrated.push_back(gpp);
  if (policy_.prefetch) {
    for (unsigned d = 1; d <= policy_.prefetch_degree; ++d) {
      const Gpp g{gpp.value + d};
      if (g.value >= kTableGppBase) break;
      auto s = p.tables().nested_lookup(vm, g);
      if (!s || geo_.region_of(*s) == Region::fast) continue;
      auto pre = migrate_in(p, vm, g, *s, cpu, false);
      if (!pre) break;
      out.latency += *pre;
      out.migrated.push_back(g);
      ++counters_.prefetches;
    }
  }
  counters_.fault_cycles += out.latency;
  return out;
}

unsigned Hypervisor::migration_daemon_tick(Platform& p) {
  if (!policy_.enabled() || !policy_.daemon) return 0;
  if (pool_.free_count() >= policy_.low_watermark) return 0;
  const CpuId d = p.daemon_cpu();
  p.clock(d) = std::max(p.clock(d), p.memory().now());
  p.memory().set_now(p.clock(d));
  const std::uint64_t target = std::min(policy_.high_watermark, pool_.capacity());
  unsigned n = 0;
  std::uint64_t latency = 0;
  while (pool_.free_count() < target) {
    auto v = select_victim(p);
    if (!v) break;
    latency += evict(p, *v, d);
    ++n;
  }
  p.clock(d) += latency;
  counters_.daemon_evictions += n;
  return n;
}

bool Hypervisor::background_remap(Platform& p) {
  if (pages_.empty()) return false;
  const Resident r = pages_[rng_() % pages_.size()];
  auto from = p.tables().nested_lookup(r.vm, r.gpp);
  if (!from) return false;
  const CpuId d = p.daemon_cpu();
  p.clock(d) = std::max(p.clock(d), p.memory().now());
  p.memory().set_now(p.clock(d));
  std::uint64_t latency = 0;
  if (geo_.region_of(*from) == Region::fast && pool_.contains(*from)) {
    auto to = pool_.take_free();
    if (!to) return false;
    pool_.occupy(*to, r);
    latency += p.memory().copy_page(*from, *to);
    latency += p.remap_coherence(r.vm, r.gpp, *to, d);
    pool_.release(*from);
  } else {
    auto to = slow_.take();
    if (!to) return false;
    latency += p.memory().copy_page(*from, *to);
    latency += p.remap_coherence(r.vm, r.gpp, *to, d);
    slow_.release(*from);
  }
  p.clock(d) += latency;
  ++counters_.background_remaps;
  return true;
}

}  // namespace hatric
