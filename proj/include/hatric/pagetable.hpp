#pragma once

// Simulated physical memory holding guest and nested 4-level radix page
// tables, two-dimensional walks, and mapping mutation. Every mutation
// reports the cache lines whose bytes changed; those lines drive coherence.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hatric/addr.hpp"
#include "hatric/tstruct.hpp"

namespace hatric {

enum class Region : std::uint8_t { fast, slow };

struct MemoryGeometry {
  std::uint64_t fast_bytes = 2ull << 30;
  std::uint64_t slow_bytes = 8ull << 30;
  // Frames reserved for page-table pages at the top of their region.
  std::uint64_t table_reserve_pages = 16384;
  bool tables_in_fast = false;

  std::uint64_t fast_pages() const { return fast_bytes >> kPageShift; }
  std::uint64_t slow_pages() const { return slow_bytes >> kPageShift; }
  std::uint64_t total_pages() const { return fast_pages() + slow_pages(); }
  Region region_of(Spp spp) const { return spp.value < fast_pages() ? Region::fast : Region::slow; }

  // Half-open frame ranges.
  std::pair<std::uint64_t, std::uint64_t> data_range(Region r) const;
  std::pair<std::uint64_t, std::uint64_t> table_range() const;

  void validate() const;
};

struct Pte {
  std::uint64_t target = 0;  // page number (GPP or SPP)
  bool present = false;
  bool accessed = false;
  bool dirty = false;

  static constexpr std::uint64_t kPresent = 1ull << 0;
  static constexpr std::uint64_t kAccessed = 1ull << 5;
  static constexpr std::uint64_t kDirty = 1ull << 6;
  static constexpr std::uint64_t kFrameMask = ((1ull << 52) - 1) & ~(kPageSize - 1);

  static Pte decode(std::uint64_t raw);
  std::uint64_t encode() const;
  bool operator==(const Pte&) const = default;
};

using TablePage = std::array<std::uint64_t, kEntriesPerTable>;

// Sparse system memory: only frames holding page tables carry contents.
class PhysMem {
 public:
  PhysMem() = default;
  explicit PhysMem(const MemoryGeometry& geo);

  Spp allocate_table_page();
  bool is_table_page(Spp spp) const { return pages_.contains(spp.value); }

  Pte read_pte(Spa spa) const;
  LineAddr write_pte(Spa spa, const Pte& pte);
  std::uint64_t read_raw(Spa spa) const;

  const MemoryGeometry& geometry() const { return geo_; }
  std::size_t table_pages() const { return pages_.size(); }
  const std::unordered_map<std::uint64_t, TablePage>& pages() const { return pages_; }

 private:
  const TablePage& page_for(Spa spa) const;
  TablePage& page_for(Spa spa);

  MemoryGeometry geo_;
  std::uint64_t next_table_ = 0;  // counts down
  std::uint64_t table_floor_ = 0;
  std::unordered_map<std::uint64_t, TablePage> pages_;
};

enum class WalkRole : std::uint8_t { nL4, nL3, nL2, nL1, gL4, gL3, gL2, gL1 };
const char* to_string(WalkRole role);
constexpr bool is_nested(WalkRole r) { return r <= WalkRole::nL1; }
// WalkRole for nested / guest level 4..1.
constexpr WalkRole nested_role(unsigned level) { return static_cast<WalkRole>(4 - level); }
constexpr WalkRole guest_role(unsigned level) { return static_cast<WalkRole>(8 - level); }

class TranslationFault : public SimError {
 public:
  TranslationFault(WalkRole role, const std::string& what)
      : SimError(std::string("translation fault at ") + to_string(role) + ": " + what), role_(role) {}
  WalkRole role() const { return role_; }

 private:
  WalkRole role_;
};

struct WalkRef {
  Spa spa;
  WalkRole role = WalkRole::nL4;
  bool was_accessed = false;
};

struct WalkFill {
  TStructKind target = TStructKind::l2_tlb;  // l2_tlb stands for the whole TLB hierarchy
  TransKey key;
  std::uint64_t payload = 0;
  Spa source;
};

struct WalkResult {
  std::vector<WalkRef> refs;
  std::vector<WalkFill> fills;
  Gpp gpp;  // data GPP (equals the SPP value for native address spaces)
  Spp spp;
  unsigned mmu_levels_skipped = 0;
  unsigned ntlb_hits = 0;
};

struct RemapResult {
  Spp old_spp;
  LineAddr line;
  Spa entry;
};

// GPPs at or above this value hold guest page-table pages; the hypervisor
// never migrates them.
inline constexpr std::uint64_t kTableGppBase = 1ull << 35;

class PageTables {
 public:
  PageTables() = default;
  explicit PageTables(const MemoryGeometry& geo);

  // Creates the nested root for `vm`. Non-virtualized VMs keep a single
  // level of tables mapping GVP straight to SPP.
  void create_vm(VmId vm, bool virtualized = true);
  bool has_vm(VmId vm) const { return vms_.contains(vm); }
  bool virtualized(VmId vm) const;

  std::vector<LineAddr> map_guest(AddressSpace as, Gvp gvp, Gpp gpp);
  std::vector<LineAddr> map_guest(VmId vm, Gvp gvp, Gpp gpp) { return map_guest({vm, 0}, gvp, gpp); }
  std::vector<LineAddr> map_native(AddressSpace as, Gvp gvp, Spp spp);
  std::vector<LineAddr> map_nested(VmId vm, Gpp gpp, Spp spp);
  RemapResult remap_nested(VmId vm, Gpp gpp, Spp new_spp);

  // Two-dimensional walk. MMU-cache and nTLB hits in `ts` elide the
  // corresponding references; pass nullptr for a walk with no structures.
  WalkResult walk_2d(AddressSpace as, Gvp gvp, TranslationStructures* ts);

  Pte read_pte(Spa spa) const { return mem_.read_pte(spa); }
  LineAddr write_pte(Spa spa, const Pte& pte) { return mem_.write_pte(spa, pte); }

  // Side-effect-free lookups.
  std::optional<Gpp> guest_lookup(AddressSpace as, Gvp gvp) const;
  std::optional<Spp> nested_lookup(VmId vm, Gpp gpp) const;
  std::optional<Spa> nested_leaf(VmId vm, Gpp gpp) const;
  std::optional<Spp> translate(AddressSpace as, Gvp gvp) const;
  std::vector<std::pair<Gvp, Gpp>> guest_mappings(AddressSpace as) const;
  std::vector<AddressSpace> address_spaces() const;

  bool nested_accessed(VmId vm, Gpp gpp) const;
  void set_nested_accessed(VmId vm, Gpp gpp, bool accessed);

  // `role path -> target flags`, one line per present entry.
  std::string dump(VmId vm) const;

  const PhysMem& mem() const { return mem_; }
  const MemoryGeometry& geometry() const { return mem_.geometry(); }

 private:
  struct VmTables {
    bool virtualized = true;
    Spp nested_root;
    std::uint64_t next_table_gpp = kTableGppBase;
  };
  struct TableRef {
    Spp spp;               // where the table lives
    std::uint64_t target;  // what the parent entry stores (GPP or SPP)
  };

  const VmTables& vm_tables(VmId vm) const;
  TableRef new_guest_table(VmId vm, std::vector<LineAddr>& lines);
  Spp guest_root_spp(AddressSpace as) const;
  std::optional<Spa> guest_leaf(AddressSpace as, Gvp gvp) const;
  std::optional<Spa> leaf_entry(Spp root, std::uint64_t page, bool guest, VmId vm) const;
  Spp table_spp_of(VmId vm, std::uint64_t target, bool guest) const;
  void dump_tree(std::string& out, VmId vm, Spp table, unsigned level, bool guest,
                 std::string path) const;

  // Shared radix insert. `guest` selects whether intermediate tables are
  // guest tables (addressed by GPP) or nested/native tables (by SPP).
  std::vector<LineAddr> insert(VmId vm, Spp root, std::uint64_t page, std::uint64_t target,
                               bool guest);

  Spp nested_translate_walk(VmId vm, Gpp gpp, TranslationStructures* ts, WalkResult& out,
                            Spa& leaf_source);

  PhysMem mem_;
  std::map<VmId, VmTables> vms_;
  // Root table per address space, stored as the CR3 value (GPP for
  // virtualized VMs, SPP otherwise).
  std::map<AddressSpace, std::uint64_t> guest_roots_;
};

}  // namespace hatric
