#include "hatric/coherence.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>

namespace hatric {

namespace {

constexpr std::uint64_t bit(CpuId c) { return 1ull << c; }

}  // namespace

char to_char(Mesi s) {
  switch (s) {
    case Mesi::I: return 'I';
    case Mesi::S: return 'S';
    case Mesi::E: return 'E';
    case Mesi::M: return 'M';
  }
  return '?';
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::GetS: return "GetS";
    case EventKind::GetM: return "GetM";
    case EventKind::Upgrade: return "Upgrade";
    case EventKind::Inv: return "Inv";
    case EventKind::InvAck: return "InvAck";
    case EventKind::Demote: return "Demote";
    case EventKind::BackInv: return "BackInv";
    case EventKind::WalkerMark: return "WalkerMark";
    case EventKind::Evict: return "Evict";
    case EventKind::Writeback: return "Writeback";
    case EventKind::Ipi: return "IPI";
    case EventKind::VmExit: return "VmExit";
    case EventKind::Flush: return "Flush";
    case EventKind::Remap: return "Remap";
  }
  return "?";
}

std::string format_event(const CoherenceEvent& e) {
  auto node = [](int n) { return n == kDirectoryNode ? std::string("dir") : std::to_string(n); };
  char buf[64];
  std::snprintf(buf, sizeof buf, "%llu %s 0x%llx ", static_cast<unsigned long long>(e.cycle),
                to_string(e.kind), static_cast<unsigned long long>(e.line.value));
  return buf + node(e.src) + " " + node(e.dst);
}

void CacheGeometry::validate() const {
  if (l1_sets == 0 || l1_ways == 0 || l2_sets == 0 || l2_ways == 0 || llc_sets == 0 ||
      llc_ways == 0 || dir_ways == 0) {
    throw ConfigError("cache geometry must be non-empty");
  }
  if (l1_sets * l1_ways > l2_sets * l2_ways) throw ConfigError("L2 must be at least as large as L1");
}

// ---------------------------------------------------------------- caches

PrivateCache::PrivateCache(const CacheGeometry& geo)
    : l1_sets_(geo.l1_sets),
      l1_ways_(geo.l1_ways),
      l2_sets_(geo.l2_sets),
      l2_ways_(geo.l2_ways),
      l1_(std::size_t{geo.l1_sets} * geo.l1_ways),
      l2_(std::size_t{geo.l2_sets} * geo.l2_ways) {}

bool PrivateCache::in_l1(LineAddr line) const {
  const std::size_t base = (line.value % l1_sets_) * l1_ways_;
  for (std::size_t i = base; i < base + l1_ways_; ++i) {
    if (l1_[i].valid && l1_[i].line == line.value) return true;
  }
  return false;
}

PrivateCache::Line* PrivateCache::find(LineAddr line) {
  const std::size_t base = (line.value % l2_sets_) * l2_ways_;
  for (std::size_t i = base; i < base + l2_ways_; ++i) {
    if (l2_[i].state != Mesi::I && l2_[i].line == line.value) return &l2_[i];
  }
  return nullptr;
}

const PrivateCache::Line* PrivateCache::find(LineAddr line) const {
  return const_cast<PrivateCache*>(this)->find(line);
}

void PrivateCache::touch_l1(LineAddr line) {
  const std::size_t base = (line.value % l1_sets_) * l1_ways_;
  L1Line* slot = nullptr;
  for (std::size_t i = base; i < base + l1_ways_; ++i) {
    if (l1_[i].valid && l1_[i].line == line.value) {
      l1_[i].stamp = ++clock_;
      return;
    }
    if (!l1_[i].valid && slot == nullptr) slot = &l1_[i];
  }
  if (slot == nullptr) {
    slot = &*std::min_element(l1_.begin() + static_cast<std::ptrdiff_t>(base),
                              l1_.begin() + static_cast<std::ptrdiff_t>(base + l1_ways_),
                              [](const auto& a, const auto& b) { return a.stamp < b.stamp; });
  }
  *slot = {line.value, true, ++clock_};
}

void PrivateCache::drop_l1(LineAddr line) {
  const std::size_t base = (line.value % l1_sets_) * l1_ways_;
  for (std::size_t i = base; i < base + l1_ways_; ++i) {
    if (l1_[i].valid && l1_[i].line == line.value) l1_[i].valid = false;
  }
}

std::optional<PrivateCache::Line> PrivateCache::insert(LineAddr line, Mesi state, bool pt) {
  const std::size_t base = (line.value % l2_sets_) * l2_ways_;
  Line* slot = nullptr;
  std::optional<Line> victim;
  for (std::size_t i = base; i < base + l2_ways_; ++i) {
    if (l2_[i].state != Mesi::I && l2_[i].line == line.value) {
      slot = &l2_[i];
      break;
    }
  }
  if (slot == nullptr) {
    for (std::size_t i = base; i < base + l2_ways_; ++i) {
      if (l2_[i].state == Mesi::I) {
        slot = &l2_[i];
        break;
      }
    }
  }
  if (slot == nullptr) {
    slot = &*std::min_element(l2_.begin() + static_cast<std::ptrdiff_t>(base),
                              l2_.begin() + static_cast<std::ptrdiff_t>(base + l2_ways_),
                              [](const auto& a, const auto& b) { return a.stamp < b.stamp; });
    victim = *slot;
    drop_l1(LineAddr{slot->line});
  }
  *slot = {line.value, state, pt, ++clock_};
  touch_l1(line);
  return victim;
}

Mesi PrivateCache::invalidate(LineAddr line) {
  Line* l = find(line);
  if (l == nullptr) return Mesi::I;
  const Mesi prior = l->state;
  l->state = Mesi::I;
  drop_l1(line);
  return prior;
}

// ------------------------------------------------------------- directory

Directory::Directory(std::uint64_t entries, unsigned ways, bool infinite) : infinite_(infinite) {
  if (infinite_) return;
  if (ways == 0 || entries < ways) throw ConfigError("directory too small for its associativity");
  ways_ = ways;
  sets_ = static_cast<unsigned>(entries / ways);
  slots_.resize(std::size_t{sets_} * ways_);
}

DirEntry* Directory::find(LineAddr line) {
  if (infinite_) {
    auto it = map_.find(line.value);
    return it == map_.end() ? nullptr : &it->second;
  }
  const std::size_t base = (line.value % sets_) * ways_;
  for (std::size_t i = base; i < base + ways_; ++i) {
    if (slots_[i].valid && slots_[i].line == line.value) {
      slots_[i].stamp = ++clock_;
      return &slots_[i];
    }
  }
  return nullptr;
}

const DirEntry* Directory::find(LineAddr line) const {
  if (infinite_) {
    auto it = map_.find(line.value);
    return it == map_.end() ? nullptr : &it->second;
  }
  const std::size_t base = (line.value % sets_) * ways_;
  for (std::size_t i = base; i < base + ways_; ++i) {
    if (slots_[i].valid && slots_[i].line == line.value) return &slots_[i];
  }
  return nullptr;
}

DirEntry& Directory::allocate(LineAddr line, std::optional<DirEntry>& victim) {
  DirEntry fresh;
  fresh.line = line.value;
  fresh.valid = true;
  fresh.stamp = ++clock_;
  if (infinite_) return map_.insert_or_assign(line.value, fresh).first->second;
  const std::size_t base = (line.value % sets_) * ways_;
  DirEntry* slot = nullptr;
  for (std::size_t i = base; i < base + ways_; ++i) {
    if (!slots_[i].valid) {
      slot = &slots_[i];
      break;
    }
  }
  if (slot == nullptr) {
    slot = &*std::min_element(slots_.begin() + static_cast<std::ptrdiff_t>(base),
                              slots_.begin() + static_cast<std::ptrdiff_t>(base + ways_),
                              [](const auto& a, const auto& b) { return a.stamp < b.stamp; });
    victim = *slot;
  }
  *slot = fresh;
  return *slot;
}

void Directory::release(LineAddr line) {
  if (infinite_) {
    map_.erase(line.value);
    return;
  }
  if (DirEntry* e = find(line)) e->valid = false;
}

// --------------------------------------------------------- memory system

MemorySystem::MemorySystem(unsigned nodes, const CacheGeometry& caches, const LatencyModel& lat,
                           const MemoryGeometry& mem, bool translation_aware)
    : lat_(lat), mem_(mem), aware_(translation_aware) {
  caches.validate();
  if (nodes == 0 || nodes > 64) throw ConfigError("1..64 cache agents supported");
  caches_.assign(nodes, PrivateCache(caches));
  std::uint64_t dir_entries = caches.dir_entries;
  if (dir_entries == 0) {
    dir_entries = 2ull * nodes * caches.l2_sets * caches.l2_ways;
  }
  dir_ = Directory(dir_entries, caches.dir_ways, caches.infinite_directory);
  llc_sets_ = caches.llc_sets;
  llc_ways_ = caches.llc_ways;
  llc_tags_.assign(std::size_t{llc_sets_} * llc_ways_, 0);
  llc_stamps_.assign(llc_tags_.size(), 0);
  fast_ = {lat.fast_bytes_per_cycle, lat.fast_dram, 0};
  slow_ = {lat.slow_bytes_per_cycle, lat.slow_dram, 0};
}

void MemorySystem::emit(EventKind kind, LineAddr line, int src, int dst, std::uint64_t cost) {
  if (sink_) sink_(CoherenceEvent{now_, kind, line, src, dst, cost});
}

bool MemorySystem::llc_access(LineAddr line) {
  const std::size_t base = (line.value % llc_sets_) * llc_ways_;
  std::size_t lru = base;
  for (std::size_t i = base; i < base + llc_ways_; ++i) {
    if (llc_tags_[i] == line.value + 1) {
      llc_stamps_[i] = ++llc_clock_;
      return true;
    }
    if (llc_stamps_[i] < llc_stamps_[lru]) lru = i;
  }
  llc_tags_[lru] = line.value + 1;
  llc_stamps_[lru] = ++llc_clock_;
  return false;
}

std::uint64_t MemorySystem::transfer(Region region, std::uint64_t bytes, bool with_base) {
  Channel& ch = region == Region::fast ? fast_ : slow_;
  const auto service = static_cast<std::uint64_t>(std::ceil(static_cast<double>(bytes) / ch.bytes_per_cycle));
  const std::uint64_t queued = ch.busy_until > now_ ? ch.busy_until - now_ : 0;
  const std::uint64_t delay = std::min(queued, lat_.max_queue_delay);
  ch.busy_until = now_ + delay + service;
  const std::uint64_t transfers = (bytes + kLineSize - 1) / kLineSize;
  (region == Region::fast ? counters_.dram_fast : counters_.dram_slow) += transfers;
  return (with_base ? ch.base : 0) + delay + service;
}

std::uint64_t MemorySystem::fetch(LineAddr line) {
  if (llc_access(line)) {
    ++counters_.llc_hits;
    return 0;
  }
  ++counters_.llc_misses;
  return transfer(mem_.region_of(page_of(line_base(line))), kLineSize, true);
}

std::uint64_t MemorySystem::copy_page(Spp from, Spp to) {
  const std::uint64_t rd = transfer(mem_.region_of(from), kPageSize, true);
  const std::uint64_t wr = transfer(mem_.region_of(to), kPageSize, false);
  return rd + wr;
}

void MemorySystem::back_invalidate(const DirEntry& victim, TranslationProbe* probe) {
  ++counters_.directory_evictions;
  const LineAddr line{victim.line};
  std::uint64_t targets = victim.sharers;
  if (victim.owner >= 0) targets |= bit(static_cast<CpuId>(victim.owner));
  while (targets != 0) {
    const auto t = static_cast<CpuId>(std::countr_zero(targets));
    targets &= targets - 1;
    ++counters_.back_invalidations;
    ++counters_.messages;
    ++counters_.cache_probes;
    emit(EventKind::BackInv, line, kDirectoryNode, static_cast<int>(t));
    if (caches_[t].invalidate(line) == Mesi::M) {
      ++counters_.writebacks;
      llc_access(line);
    }
    if (aware_ && victim.pt() && probe != nullptr) {
      probe->probe(t, line, victim.kind(), ProbeCause::back_invalidate);
    }
  }
}

DirEntry& MemorySystem::dir_lookup_or_allocate(LineAddr line, TranslationProbe* probe) {
  ++counters_.directory_lookups;
  if (DirEntry* e = dir_.find(line)) return *e;
  std::optional<DirEntry> victim;
  DirEntry& fresh = dir_.allocate(line, victim);
  if (victim) back_invalidate(*victim, probe);
  return fresh;
}

void MemorySystem::install(CpuId cpu, LineAddr line, Mesi state, bool pt, TranslationProbe* probe) {
  (void)probe;
  if (auto victim = caches_[cpu].insert(line, state, pt)) {
    // Remove the victim first so evict_line sees consistent state.
    const LineAddr vline{victim->line};
    if (victim->state == Mesi::M) {
      ++counters_.writebacks;
      emit(EventKind::Writeback, vline, static_cast<int>(cpu), kDirectoryNode);
      llc_access(vline);
    }
    DirEntry* e = dir_.find(vline);
    ++counters_.messages;
    emit(EventKind::Evict, vline, static_cast<int>(cpu), kDirectoryNode);
    if (e == nullptr) return;
    if (e->owner == static_cast<int>(cpu)) e->owner = -1;
    if (aware_ && e->pt()) return;  // sharer list left untouched
    e->sharers &= ~bit(cpu);
    if (e->sharers == 0 && e->owner < 0) dir_.release(vline);
  }
}

void MemorySystem::evict_line(CpuId cpu, LineAddr line) {
  PrivateCache::Line* l = caches_.at(cpu).find(line);
  if (l == nullptr) return;
  const Mesi prior = caches_[cpu].invalidate(line);
  if (prior == Mesi::M) {
    ++counters_.writebacks;
    emit(EventKind::Writeback, line, static_cast<int>(cpu), kDirectoryNode);
    llc_access(line);
  }
  ++counters_.messages;
  emit(EventKind::Evict, line, static_cast<int>(cpu), kDirectoryNode);
  DirEntry* e = dir_.find(line);
  if (e == nullptr) return;
  if (e->owner == static_cast<int>(cpu)) e->owner = -1;
  if (aware_ && e->pt()) return;
  e->sharers &= ~bit(cpu);
  if (e->sharers == 0 && e->owner < 0) dir_.release(line);
}

void MemorySystem::demote_sharer(CpuId cpu, LineAddr line) {
  ++counters_.demotions;
  ++counters_.messages;
  emit(EventKind::Demote, line, static_cast<int>(cpu), kDirectoryNode);
  if (DirEntry* e = dir_.find(line)) {
    e->sharers &= ~bit(cpu);
    if (e->owner == static_cast<int>(cpu)) e->owner = -1;
  }
}

void MemorySystem::directory_evict(LineAddr line, TranslationProbe* probe) {
  DirEntry* e = dir_.find(line);
  if (e == nullptr) return;
  const DirEntry victim = *e;
  dir_.release(line);
  back_invalidate(victim, probe);
}

std::uint64_t MemorySystem::cpu_read(CpuId cpu, Spa spa, TranslationProbe* probe) {
  const LineAddr line = line_of(spa);
  PrivateCache& pc = caches_.at(cpu);
  if (pc.in_l1(line)) {
    ++counters_.l1_hits;
    pc.touch_l1(line);
    return lat_.l1;
  }
  if (pc.find(line) != nullptr) {
    ++counters_.l2_hits;
    pc.touch_l1(line);
    return lat_.l2;
  }
  std::uint64_t latency = lat_.l2 + lat_.llc;
  ++counters_.messages;
  emit(EventKind::GetS, line, static_cast<int>(cpu), kDirectoryNode);
  DirEntry& e = dir_lookup_or_allocate(line, probe);
  if (e.owner >= 0 && e.owner != static_cast<int>(cpu)) {
    const auto o = static_cast<CpuId>(e.owner);
    PrivateCache::Line* ol = caches_[o].find(line);
    if (ol != nullptr) {
      if (ol->state == Mesi::M) {
        ++counters_.writebacks;
        llc_access(line);
      }
      ol->state = Mesi::S;
    }
    e.owner = -1;
    ++counters_.remote_forwards;
    ++counters_.cache_probes;
    latency += lat_.remote_forward;
  } else {
    latency += fetch(line);
  }
  const std::uint64_t others = e.sharers & ~bit(cpu);
  const Mesi granted = others == 0 ? Mesi::E : Mesi::S;
  if (granted == Mesi::E) e.owner = static_cast<int>(cpu);
  e.sharers |= bit(cpu);
  const bool pt = aware_ && e.pt();
  install(cpu, line, granted, pt, probe);
  return latency;
}

std::uint64_t MemorySystem::walker_read(CpuId cpu, Spa spa, PtKind kind, bool access_was_set,
                                        TranslationProbe* probe) {
  const LineAddr line = line_of(spa);
  PrivateCache& pc = caches_.at(cpu);
  const bool cached = pc.find(line) != nullptr;
  std::uint64_t latency = 0;
  if (cached) {
    latency = cpu_read(cpu, spa, probe);
  } else {
    latency = cpu_read(cpu, spa, probe);
    if (aware_) {
      // The walker's GetS carries the page-table type.
      DirEntry* e = dir_.find(line);
      if (e != nullptr) {
        (kind == PtKind::nested ? e->npt : e->gpt) = true;
        if (PrivateCache::Line* l = pc.find(line)) l->pt = true;
      }
    }
  }
  if (!aware_) return latency;
  PrivateCache::Line* l = pc.find(line);
  if (!access_was_set || (l != nullptr && !l->pt)) {
    ++counters_.walker_marks;
    ++counters_.messages;
    emit(EventKind::WalkerMark, line, static_cast<int>(cpu), kDirectoryNode);
    if (DirEntry* e = dir_.find(line)) (kind == PtKind::nested ? e->npt : e->gpt) = true;
    if (l != nullptr) l->pt = true;
  }
  return latency;
}

std::uint64_t MemorySystem::cpu_write(CpuId cpu, Spa spa, TranslationProbe* probe) {
  const LineAddr line = line_of(spa);
  PrivateCache& pc = caches_.at(cpu);
  PrivateCache::Line* mine = pc.find(line);
  if (mine != nullptr && (mine->state == Mesi::M || mine->state == Mesi::E)) {
    std::uint64_t latency = lat_.l2;
    if (pc.in_l1(line)) {
      ++counters_.l1_hits;
      latency = lat_.l1;
    } else {
      ++counters_.l2_hits;
    }
    pc.touch_l1(line);
    mine->state = Mesi::M;
    if (aware_ && mine->pt && probe != nullptr) {
      const DirEntry* e = dir_.find(line);
      latency += probe->probe(cpu, line, e ? e->kind() : PtKind::nested, ProbeCause::local_write).cycles;
    }
    return latency;
  }

  const bool upgrade = mine != nullptr;
  std::uint64_t latency = lat_.l2 + lat_.llc;
  ++counters_.messages;
  emit(upgrade ? EventKind::Upgrade : EventKind::GetM, line, static_cast<int>(cpu), kDirectoryNode);
  DirEntry& e = dir_lookup_or_allocate(line, probe);
  const bool pt = aware_ && e.pt();
  std::uint64_t targets = e.sharers;
  if (e.owner >= 0) targets |= bit(static_cast<CpuId>(e.owner));
  targets &= ~bit(cpu);
  bool forwarded = false;
  std::uint64_t slowest_ack = 0;
  while (targets != 0) {
    const auto t = static_cast<CpuId>(std::countr_zero(targets));
    targets &= targets - 1;
    ++counters_.inv_messages;
    ++counters_.messages;
    ++counters_.cache_probes;
    emit(EventKind::Inv, line, kDirectoryNode, static_cast<int>(t));
    const Mesi had = caches_[t].invalidate(line);
    if (had == Mesi::M || had == Mesi::E) forwarded = true;
    ProbeResult pr;
    if (pt && probe != nullptr) pr = probe->probe(t, line, e.kind(), ProbeCause::invalidate);
    if (pt && had == Mesi::I) ++counters_.spurious_probes;
    if (pt && had == Mesi::I && !pr.matched) {
      demote_sharer(t, line);
    } else {
      ++counters_.messages;
      emit(EventKind::InvAck, line, static_cast<int>(t), kDirectoryNode);
    }
    slowest_ack = std::max(slowest_ack, lat_.inv_roundtrip + pr.cycles);
  }
  latency += slowest_ack;
  if (!upgrade) {
    if (forwarded) {
      ++counters_.remote_forwards;
      latency += lat_.remote_forward;
    } else {
      latency += fetch(line);
    }
  }
  e.sharers = bit(cpu);
  e.owner = static_cast<int>(cpu);
  if (upgrade) {
    mine->state = Mesi::M;
    mine->pt = pt;
    pc.touch_l1(line);
  } else {
    install(cpu, line, Mesi::M, pt, probe);
  }
  if (pt && probe != nullptr) {
    latency += probe->probe(cpu, line, e.kind(), ProbeCause::local_write).cycles;
  }
  return latency;
}

Mesi MemorySystem::state(CpuId cpu, LineAddr line) const {
  const PrivateCache::Line* l = caches_.at(cpu).find(line);
  return l == nullptr ? Mesi::I : l->state;
}

bool MemorySystem::in_l1(CpuId cpu, LineAddr line) const { return caches_.at(cpu).in_l1(line); }

}  // namespace hatric
