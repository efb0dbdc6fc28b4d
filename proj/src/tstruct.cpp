#include "hatric/tstruct.hpp"

#include <algorithm>

namespace hatric {

TStructCounters& TStructCounters::operator+=(const TStructCounters& o) {
  hits += o.hits;
  misses += o.misses;
  fills += o.fills;
  evictions += o.evictions;
  selective_invalidations += o.selective_invalidations;
  flush_invalidations += o.flush_invalidations;
  cotag_probes += o.cotag_probes;
  cotag_compares += o.cotag_compares;
  return *this;
}

TranslationCache::TranslationCache(unsigned entries, unsigned ways) {
  if (entries == 0) throw ConfigError("translation structure needs at least one entry");
  if (ways == 0 || ways > entries) ways = entries;
  if (entries % ways != 0) throw ConfigError("entry count must be a multiple of associativity");
  ways_ = ways;
  sets_ = entries / ways;
  slots_.resize(entries);
  filter_.assign(kFilterBuckets, 0);
}

std::size_t TranslationCache::set_of(TransKey key) const {
  if (sets_ == 1) return 0;
  // splitmix-style finalizer, keeps consecutive pages spread across sets
  std::uint64_t x = key.bits();
  x ^= x >> 31;
  x *= 0x7fb5d329728ea185ull;
  x ^= x >> 27;
  return static_cast<std::size_t>(x % sets_);
}

void TranslationCache::filter_add(const TranslationEntry& e) {
  ++filter_[e.cotag.line_key() % kFilterBuckets];
}

void TranslationCache::filter_remove(const TranslationEntry& e) {
  --filter_[e.cotag.line_key() % kFilterBuckets];
}

void TranslationCache::invalidate_slot(TranslationEntry& e) {
  filter_remove(e);
  e.valid = false;
}

std::optional<std::uint64_t> TranslationCache::lookup(TransKey key) {
  const std::size_t base = set_of(key) * ways_;
  for (std::size_t i = base; i < base + ways_; ++i) {
    TranslationEntry& e = slots_[i];
    if (e.valid && e.key == key) {
      e.stamp = ++clock_;
      ++counters_.hits;
      return e.payload;
    }
  }
  ++counters_.misses;
  return std::nullopt;
}

const TranslationEntry* TranslationCache::peek(TransKey key) const {
  const std::size_t base = set_of(key) * ways_;
  for (std::size_t i = base; i < base + ways_; ++i) {
    if (slots_[i].valid && slots_[i].key == key) return &slots_[i];
  }
  return nullptr;
}

std::optional<TranslationEntry> TranslationCache::fill(const TranslationEntry& entry) {
  const std::size_t base = set_of(entry.key) * ways_;
  TranslationEntry* target = nullptr;
  for (std::size_t i = base; i < base + ways_; ++i) {
    if (slots_[i].valid && slots_[i].key == entry.key) {
      target = &slots_[i];
      break;
    }
  }
  std::optional<TranslationEntry> victim;
  if (target != nullptr) {
    invalidate_slot(*target);
  } else {
    for (std::size_t i = base; i < base + ways_; ++i) {
      if (!slots_[i].valid) {
        target = &slots_[i];
        break;
      }
    }
    if (target == nullptr) {
      target = &*std::min_element(slots_.begin() + static_cast<std::ptrdiff_t>(base),
                                  slots_.begin() + static_cast<std::ptrdiff_t>(base + ways_),
                                  [](const auto& a, const auto& b) { return a.stamp < b.stamp; });
      victim = *target;
      invalidate_slot(*target);
      ++counters_.evictions;
    }
  }
  *target = entry;
  target->valid = true;
  target->stamp = ++clock_;
  filter_add(*target);
  ++counters_.fills;
  return victim;
}

unsigned TranslationCache::invalidate_by_cotag(CoTag request) {
  ++counters_.cotag_probes;
  if (filter_[request.line_key() % kFilterBuckets] == 0) return 0;
  counters_.cotag_compares += slots_.size();
  unsigned n = 0;
  for (auto& e : slots_) {
    if (e.valid && e.cotag.same_line(request)) {
      invalidate_slot(e);
      ++n;
    }
  }
  counters_.selective_invalidations += n;
  return n;
}

unsigned TranslationCache::invalidate_source_line(LineAddr line) {
  unsigned n = 0;
  for (auto& e : slots_) {
    if (e.valid && line_of(e.source) == line) {
      invalidate_slot(e);
      ++n;
    }
  }
  counters_.selective_invalidations += n;
  return n;
}

unsigned TranslationCache::invalidate_source(Spa source) {
  unsigned n = 0;
  for (auto& e : slots_) {
    if (e.valid && e.source == source) {
      invalidate_slot(e);
      ++n;
    }
  }
  counters_.selective_invalidations += n;
  return n;
}

unsigned TranslationCache::flush() {
  unsigned n = 0;
  for (auto& e : slots_) {
    if (e.valid) {
      e.valid = false;
      ++n;
    }
  }
  std::fill(filter_.begin(), filter_.end(), 0);
  counters_.flush_invalidations += n;
  return n;
}

unsigned TranslationCache::valid_count() const {
  return static_cast<unsigned>(
      std::count_if(slots_.begin(), slots_.end(), [](const auto& e) { return e.valid; }));
}

void TstructConfig::validate() const {
  if (size_multiplier != 1 && size_multiplier != 2 && size_multiplier != 4) {
    throw ConfigError("translation structure size multiplier must be 1, 2 or 4");
  }
  if (!valid_cotag_width(cotag_bits)) throw ConfigError("co-tag width must be 8, 16 or 24 bits");
  if (l1_tlb_entries == 0 || l2_tlb_entries == 0 || ntlb_entries == 0 || mmu_cache_entries == 0) {
    throw ConfigError("translation structure entry counts must be positive");
  }
}

const char* to_string(TStructKind kind) {
  switch (kind) {
    case TStructKind::l1_tlb: return "l1_tlb";
    case TStructKind::l2_tlb: return "l2_tlb";
    case TStructKind::mmu_cache: return "mmu_cache";
    case TStructKind::ntlb: return "ntlb";
  }
  return "?";
}

TranslationStructures::TranslationStructures(const TstructConfig& cfg) : cotag_bits_(cfg.cotag_bits) {
  cfg.validate();
  const unsigned m = cfg.size_multiplier;
  get(TStructKind::l1_tlb) = TranslationCache(cfg.l1_tlb_entries * m, cfg.l1_tlb_ways);
  get(TStructKind::l2_tlb) = TranslationCache(cfg.l2_tlb_entries * m, cfg.l2_tlb_ways);
  get(TStructKind::mmu_cache) = TranslationCache(cfg.mmu_cache_entries * m, cfg.mmu_cache_ways);
  get(TStructKind::ntlb) = TranslationCache(cfg.ntlb_entries * m, cfg.ntlb_ways);
}

TranslationStructures::Invalidated TranslationStructures::invalidate_by_cotag(
    CoTag request, std::span<const TStructKind> which) {
  Invalidated out;
  for (auto k : which) out.per_struct[static_cast<std::size_t>(k)] = get(k).invalidate_by_cotag(request);
  return out;
}

TranslationStructures::Invalidated TranslationStructures::flush(std::span<const TStructKind> which) {
  Invalidated out;
  for (auto k : which) out.per_struct[static_cast<std::size_t>(k)] = get(k).flush();
  return out;
}

unsigned TranslationStructures::valid_count() const {
  unsigned n = 0;
  for (const auto& c : caches_) n += c.valid_count();
  return n;
}

}  // namespace hatric
