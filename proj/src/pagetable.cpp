#include "hatric/pagetable.hpp"

#include <algorithm>
#include <cstdio>

namespace hatric {

namespace {

bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

void dedup(std::vector<LineAddr>& lines) {
  std::sort(lines.begin(), lines.end());
  lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
}

}  // namespace

std::pair<std::uint64_t, std::uint64_t> MemoryGeometry::data_range(Region r) const {
  const std::uint64_t f = fast_pages();
  const std::uint64_t total = total_pages();
  if (r == Region::fast) return {0, tables_in_fast ? f - table_reserve_pages : f};
  return {f, tables_in_fast ? total : total - table_reserve_pages};
}

std::pair<std::uint64_t, std::uint64_t> MemoryGeometry::table_range() const {
  if (tables_in_fast) return {fast_pages() - table_reserve_pages, fast_pages()};
  return {total_pages() - table_reserve_pages, total_pages()};
}

void MemoryGeometry::validate() const {
  if (!is_pow2(fast_bytes) || !is_pow2(slow_bytes)) {
    throw ConfigError("memory region sizes must be powers of two");
  }
  if (fast_bytes < kPageSize || slow_bytes < kPageSize) throw ConfigError("memory regions too small");
  const std::uint64_t host = tables_in_fast ? fast_pages() : slow_pages();
  if (table_reserve_pages == 0 || table_reserve_pages >= host) {
    throw ConfigError("table reserve must be positive and smaller than its region");
  }
  if (total_pages() > (1ull << 40)) throw ConfigError("physical memory too large");
}

Pte Pte::decode(std::uint64_t raw) {
  Pte p;
  p.present = (raw & kPresent) != 0;
  p.accessed = (raw & kAccessed) != 0;
  p.dirty = (raw & kDirty) != 0;
  p.target = (raw & kFrameMask) >> kPageShift;
  return p;
}

std::uint64_t Pte::encode() const {
  std::uint64_t raw = (target << kPageShift) & kFrameMask;
  if (present) raw |= kPresent;
  if (accessed) raw |= kAccessed;
  if (dirty) raw |= kDirty;
  return raw;
}

PhysMem::PhysMem(const MemoryGeometry& geo) : geo_(geo) {
  geo_.validate();
  const auto [lo, hi] = geo_.table_range();
  table_floor_ = lo;
  next_table_ = hi;
}

Spp PhysMem::allocate_table_page() {
  if (next_table_ == table_floor_) throw AllocationError("out of page-table memory");
  --next_table_;
  pages_.emplace(next_table_, TablePage{});
  return Spp{next_table_};
}

const TablePage& PhysMem::page_for(Spa spa) const {
  if (spa.value % kPteSize != 0) throw AlignmentError("page-table access not 8-byte aligned");
  auto it = pages_.find(spa.value >> kPageShift);
  if (it == pages_.end()) throw FaultError("page-table access outside an allocated table page");
  return it->second;
}

TablePage& PhysMem::page_for(Spa spa) {
  return const_cast<TablePage&>(std::as_const(*this).page_for(spa));
}

std::uint64_t PhysMem::read_raw(Spa spa) const {
  return page_for(spa)[(spa.value & (kPageSize - 1)) / kPteSize];
}

Pte PhysMem::read_pte(Spa spa) const { return Pte::decode(read_raw(spa)); }

LineAddr PhysMem::write_pte(Spa spa, const Pte& pte) {
  page_for(spa)[(spa.value & (kPageSize - 1)) / kPteSize] = pte.encode();
  return line_of(spa);
}

const char* to_string(WalkRole role) {
  static constexpr const char* kNames[] = {"nL4", "nL3", "nL2", "nL1", "gL4", "gL3", "gL2", "gL1"};
  return kNames[static_cast<unsigned>(role)];
}

PageTables::PageTables(const MemoryGeometry& geo) : mem_(geo) {}

void PageTables::create_vm(VmId vm, bool virtualized) {
  if (vm >= kMaxVms) throw ConfigError("vm id out of range");
  if (vms_.contains(vm)) return;
  VmTables t;
  t.virtualized = virtualized;
  t.nested_root = mem_.allocate_table_page();
  vms_.emplace(vm, t);
}

bool PageTables::virtualized(VmId vm) const { return vm_tables(vm).virtualized; }

const PageTables::VmTables& PageTables::vm_tables(VmId vm) const {
  auto it = vms_.find(vm);
  if (it == vms_.end()) throw ConfigError("unknown vm " + std::to_string(vm));
  return it->second;
}

Spp PageTables::table_spp_of(VmId vm, std::uint64_t target, bool guest) const {
  if (!guest || !vm_tables(vm).virtualized) return Spp{target};
  auto spp = nested_lookup(vm, Gpp{target});
  if (!spp) throw MissingMappingError("guest table page has no nested mapping");
  return *spp;
}

PageTables::TableRef PageTables::new_guest_table(VmId vm, std::vector<LineAddr>& lines) {
  VmTables& t = vms_.at(vm);
  const Spp spp = mem_.allocate_table_page();
  if (!t.virtualized) return {spp, spp.value};
  const Gpp gpp{t.next_table_gpp++};
  auto nested = map_nested(vm, gpp, spp);
  lines.insert(lines.end(), nested.begin(), nested.end());
  return {spp, gpp.value};
}

std::vector<LineAddr> PageTables::insert(VmId vm, Spp root, std::uint64_t page,
                                         std::uint64_t target, bool guest) {
  std::vector<LineAddr> lines;
  const auto idx = pt_indices(page);
  Spp table = root;
  for (unsigned level = kLevels; level > 1; --level) {
    const Spa spa = entry_spa(table, idx[kLevels - level]);
    const Pte pte = mem_.read_pte(spa);
    if (pte.present) {
      table = table_spp_of(vm, pte.target, guest);
      continue;
    }
    TableRef child;
    if (guest) {
      child = new_guest_table(vm, lines);
    } else {
      const Spp spp = mem_.allocate_table_page();
      child = {spp, spp.value};
    }
    lines.push_back(mem_.write_pte(spa, Pte{child.target, true, false, false}));
    table = child.spp;
  }
  const Spa leaf = entry_spa(table, idx[kLevels - 1]);
  const Pte old = mem_.read_pte(leaf);
  if (!(old.present && old.target == target)) {
    lines.push_back(mem_.write_pte(leaf, Pte{target, true, false, false}));
  }
  dedup(lines);
  return lines;
}

std::vector<LineAddr> PageTables::map_guest(AddressSpace as, Gvp gvp, Gpp gpp) {
  if (!vm_tables(as.vm).virtualized) throw ConfigError("map_guest on a non-virtualized vm");
  if (as.pid >= kMaxPids) throw ConfigError("pid out of range");
  if (gvp.value >= kMaxPageNumber) throw ConfigError("gvp outside the 48-bit address space");
  if (gpp.value >= kTableGppBase) throw ConfigError("gpp collides with the page-table gpp range");
  std::vector<LineAddr> lines;
  auto it = guest_roots_.find(as);
  if (it == guest_roots_.end()) {
    const TableRef root = new_guest_table(as.vm, lines);
    it = guest_roots_.emplace(as, root.target).first;
  }
  auto more = insert(as.vm, table_spp_of(as.vm, it->second, true), gvp.value, gpp.value, true);
  lines.insert(lines.end(), more.begin(), more.end());
  dedup(lines);
  return lines;
}

std::vector<LineAddr> PageTables::map_native(AddressSpace as, Gvp gvp, Spp spp) {
  if (vm_tables(as.vm).virtualized) throw ConfigError("map_native on a virtualized vm");
  if (gvp.value >= kMaxPageNumber) throw ConfigError("gvp outside the 48-bit address space");
  if (spp.value >= geometry().total_pages()) throw ConfigError("spp outside physical memory");
  auto it = guest_roots_.find(as);
  if (it == guest_roots_.end()) {
    it = guest_roots_.emplace(as, mem_.allocate_table_page().value).first;
  }
  return insert(as.vm, Spp{it->second}, gvp.value, spp.value, false);
}

std::vector<LineAddr> PageTables::map_nested(VmId vm, Gpp gpp, Spp spp) {
  const VmTables& t = vm_tables(vm);
  if (!t.virtualized) throw ConfigError("map_nested on a non-virtualized vm");
  if (gpp.value >= kMaxPageNumber) throw ConfigError("gpp outside the guest physical space");
  if (spp.value >= geometry().total_pages()) throw ConfigError("spp outside physical memory");
  return insert(vm, t.nested_root, gpp.value, spp.value, false);
}

RemapResult PageTables::remap_nested(VmId vm, Gpp gpp, Spp new_spp) {
  if (new_spp.value >= geometry().total_pages()) throw ConfigError("spp outside physical memory");
  auto leaf = nested_leaf(vm, gpp);
  if (!leaf) throw MissingMappingError("remap of unmapped gpp " + std::to_string(gpp.value));
  const Pte old = mem_.read_pte(*leaf);
  if (!old.present) throw MissingMappingError("remap of unmapped gpp " + std::to_string(gpp.value));
  const LineAddr line = mem_.write_pte(*leaf, Pte{new_spp.value, true, false, false});
  return {Spp{old.target}, line, *leaf};
}

std::optional<Spa> PageTables::leaf_entry(Spp root, std::uint64_t page, bool guest, VmId vm) const {
  const auto idx = pt_indices(page);
  Spp table = root;
  for (unsigned level = kLevels; level > 1; --level) {
    const Pte pte = mem_.read_pte(entry_spa(table, idx[kLevels - level]));
    if (!pte.present) return std::nullopt;
    if (guest && vm_tables(vm).virtualized) {
      auto spp = nested_lookup(vm, Gpp{pte.target});
      if (!spp) return std::nullopt;
      table = *spp;
    } else {
      table = Spp{pte.target};
    }
  }
  return entry_spa(table, idx[kLevels - 1]);
}

std::optional<Spa> PageTables::nested_leaf(VmId vm, Gpp gpp) const {
  if (gpp.value >= kMaxPageNumber) return std::nullopt;
  return leaf_entry(vm_tables(vm).nested_root, gpp.value, false, vm);
}

std::optional<Spp> PageTables::nested_lookup(VmId vm, Gpp gpp) const {
  auto leaf = nested_leaf(vm, gpp);
  if (!leaf) return std::nullopt;
  const Pte pte = mem_.read_pte(*leaf);
  if (!pte.present) return std::nullopt;
  return Spp{pte.target};
}

Spp PageTables::guest_root_spp(AddressSpace as) const {
  auto it = guest_roots_.find(as);
  if (it == guest_roots_.end()) throw MissingMappingError("address space has no guest page table");
  return table_spp_of(as.vm, it->second, true);
}

std::optional<Spa> PageTables::guest_leaf(AddressSpace as, Gvp gvp) const {
  if (!guest_roots_.contains(as) || gvp.value >= kMaxPageNumber) return std::nullopt;
  return leaf_entry(guest_root_spp(as), gvp.value, true, as.vm);
}

std::optional<Gpp> PageTables::guest_lookup(AddressSpace as, Gvp gvp) const {
  auto leaf = guest_leaf(as, gvp);
  if (!leaf) return std::nullopt;
  const Pte pte = mem_.read_pte(*leaf);
  if (!pte.present) return std::nullopt;
  return Gpp{pte.target};
}

std::optional<Spp> PageTables::translate(AddressSpace as, Gvp gvp) const {
  auto g = guest_lookup(as, gvp);
  if (!g) return std::nullopt;
  if (!vm_tables(as.vm).virtualized) return Spp{g->value};
  return nested_lookup(as.vm, *g);
}

bool PageTables::nested_accessed(VmId vm, Gpp gpp) const {
  auto leaf = nested_leaf(vm, gpp);
  if (!leaf) throw MissingMappingError("no nested entry for gpp");
  return mem_.read_pte(*leaf).accessed;
}

void PageTables::set_nested_accessed(VmId vm, Gpp gpp, bool accessed) {
  auto leaf = nested_leaf(vm, gpp);
  if (!leaf) throw MissingMappingError("no nested entry for gpp");
  Pte pte = mem_.read_pte(*leaf);
  pte.accessed = accessed;
  mem_.write_pte(*leaf, pte);
}

Spp PageTables::nested_translate_walk(VmId vm, Gpp gpp, TranslationStructures* ts, WalkResult& out,
                                      Spa& leaf_source) {
  const TransKey key = TransKey::ntlb(vm, gpp);
  if (ts != nullptr) {
    if (auto hit = ts->ntlb().lookup(key)) {
      leaf_source = ts->ntlb().peek(key)->source;
      ++out.ntlb_hits;
      return Spp{*hit};
    }
  }
  const auto idx = pt_indices(gpp.value);
  Spp table = vm_tables(vm).nested_root;
  Pte pte;
  Spa spa;
  for (unsigned level = kLevels; level >= 1; --level) {
    spa = entry_spa(table, idx[kLevels - level]);
    pte = mem_.read_pte(spa);
    out.refs.push_back({spa, nested_role(level), pte.accessed});
    if (!pte.present) throw TranslationFault(nested_role(level), "gpp " + std::to_string(gpp.value));
    if (!pte.accessed) {
      Pte marked = pte;
      marked.accessed = true;
      mem_.write_pte(spa, marked);
    }
    table = Spp{pte.target};
  }
  leaf_source = spa;
  out.fills.push_back({TStructKind::ntlb, key, pte.target, spa});
  return Spp{pte.target};
}

WalkResult PageTables::walk_2d(AddressSpace as, Gvp gvp, TranslationStructures* ts) {
  WalkResult out;
  out.refs.reserve(24);
  const bool virt = vm_tables(as.vm).virtualized;
  auto root_it = guest_roots_.find(as);
  if (root_it == guest_roots_.end()) throw TranslationFault(WalkRole::gL4, "no guest page table");

  // Longest-prefix MMU cache hit decides the first guest level to read.
  unsigned level = kLevels;
  Spp table;
  bool have_table = false;
  if (ts != nullptr) {
    for (unsigned skipped = kLevels - 1; skipped >= 1; --skipped) {
      const TransKey key = TransKey::mmu(as, gvp, skipped);
      if (ts->mmu_cache().peek(key) != nullptr) {
        table = Spp{*ts->mmu_cache().lookup(key)};
        level = kLevels - skipped;
        out.mmu_levels_skipped = skipped;
        have_table = true;
        break;
      }
    }
    if (!have_table) ts->mmu_cache().lookup(TransKey::mmu(as, gvp, 1));  // counts the miss
  }
  if (!have_table) {
    if (virt) {
      Spa unused;
      table = nested_translate_walk(as.vm, Gpp{root_it->second}, ts, out, unused);
    } else {
      table = Spp{root_it->second};
    }
  }

  const auto idx = pt_indices(gvp.value);
  for (; level >= 1; --level) {
    const Spa spa = entry_spa(table, idx[kLevels - level]);
    const Pte pte = mem_.read_pte(spa);
    out.refs.push_back({spa, guest_role(level), pte.accessed});
    if (!pte.present) throw TranslationFault(guest_role(level), "gvp " + std::to_string(gvp.value));
    if (!pte.accessed) {
      Pte marked = pte;
      marked.accessed = true;
      mem_.write_pte(spa, marked);
    }
    if (level > 1) {
      Spp next;
      if (virt) {
        Spa unused;
        next = nested_translate_walk(as.vm, Gpp{pte.target}, ts, out, unused);
      } else {
        next = Spp{pte.target};
      }
      out.fills.push_back({TStructKind::mmu_cache, TransKey::mmu(as, gvp, kLevels + 1 - level),
                           next.value, spa});
      table = next;
      continue;
    }
    out.gpp = Gpp{pte.target};
    Spa source = spa;
    if (virt) {
      out.spp = nested_translate_walk(as.vm, out.gpp, ts, out, source);
    } else {
      out.spp = Spp{pte.target};
    }
    out.fills.push_back({TStructKind::l2_tlb, TransKey::tlb(as, gvp), out.spp.value, source});
    break;
  }
  return out;
}

std::vector<std::pair<Gvp, Gpp>> PageTables::guest_mappings(AddressSpace as) const {
  std::vector<std::pair<Gvp, Gpp>> out;
  if (!guest_roots_.contains(as)) return out;
  const bool virt = vm_tables(as.vm).virtualized;
  struct Frame {
    Spp table;
    unsigned level;
    std::uint64_t prefix;
  };
  std::vector<Frame> stack{{guest_root_spp(as), kLevels, 0}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    for (unsigned i = kEntriesPerTable; i-- > 0;) {
      const Pte pte = mem_.read_pte(entry_spa(f.table, i));
      if (!pte.present) continue;
      const std::uint64_t prefix = (f.prefix << kLevelBits) | i;
      if (f.level == 1) {
        out.emplace_back(Gvp{prefix}, Gpp{pte.target});
      } else {
        stack.push_back({table_spp_of(as.vm, pte.target, virt), f.level - 1, prefix});
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<AddressSpace> PageTables::address_spaces() const {
  std::vector<AddressSpace> out;
  for (const auto& [as, root] : guest_roots_) out.push_back(as);
  return out;
}

void PageTables::dump_tree(std::string& out, VmId vm, Spp table, unsigned level, bool guest,
                           std::string path) const {
  for (unsigned i = 0; i < kEntriesPerTable; ++i) {
    const Pte pte = mem_.read_pte(entry_spa(table, i));
    if (!pte.present) continue;
    const std::string here = path.empty() ? std::to_string(i) : path + "/" + std::to_string(i);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s %s -> 0x%llx%s%s\n",
                  to_string(guest ? guest_role(level) : nested_role(level)), here.c_str(),
                  static_cast<unsigned long long>(pte.target), pte.accessed ? " A" : "",
                  pte.dirty ? " D" : "");
    out += buf;
    if (level > 1) dump_tree(out, vm, table_spp_of(vm, pte.target, guest), level - 1, guest, here);
  }
}

std::string PageTables::dump(VmId vm) const {
  std::string out;
  const VmTables& t = vm_tables(vm);
  if (t.virtualized) {
    out += "nested\n";
    dump_tree(out, vm, t.nested_root, kLevels, false, "");
  }
  for (const auto& [as, root] : guest_roots_) {
    if (as.vm != vm) continue;
    out += "guest pid " + std::to_string(as.pid) + "\n";
    dump_tree(out, vm, guest_root_spp(as), kLevels, true, "");
  }
  return out;
}

}  // namespace hatric
