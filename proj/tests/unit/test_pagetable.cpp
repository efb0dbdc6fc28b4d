#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "hatric/pagetable.hpp"

using namespace hatric;

namespace {

MemoryGeometry small_geo() {
  MemoryGeometry g;
  g.fast_bytes = 1ull << 20;
  g.slow_bytes = 16ull << 20;
  g.table_reserve_pages = 512;
  return g;
}

PageTables fresh(bool virtualized = true) {
  PageTables pt(small_geo());
  pt.create_vm(0, virtualized);
  return pt;
}

void map_page(PageTables& pt, Gvp gvp, Gpp gpp, Spp spp) {
  pt.map_guest(VmId{0}, gvp, gpp);
  pt.map_nested(0, gpp, spp);
}

void apply(TranslationStructures& ts, const WalkResult& w) {
  for (const WalkFill& f : w.fills) {
    TranslationEntry e;
    e.key = f.key;
    e.payload = f.payload;
    e.source = f.source;
    e.cotag = cotag_of(f.source, ts.cotag_bits());
    e.valid = true;
    if (f.target == TStructKind::l2_tlb) {
      ts.l2_tlb().fill(e);
      ts.l1_tlb().fill(e);
    } else {
      ts.get(f.target).fill(e);
    }
  }
}

// Byte-level diff of table memory at line granularity.
std::set<std::uint64_t> changed_lines(const std::unordered_map<std::uint64_t, TablePage>& before,
                                      const std::unordered_map<std::uint64_t, TablePage>& after) {
  std::set<std::uint64_t> out;
  for (const auto& [page, contents] : after) {
    auto it = before.find(page);
    for (unsigned i = 0; i < kEntriesPerTable; ++i) {
      const std::uint64_t old = it == before.end() ? 0 : it->second[i];
      if (old != contents[i]) out.insert(((page << kPageShift) + i * kPteSize) >> kLineShift);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("map_guest examples") {
  PageTables pt = fresh();
  pt.map_guest(VmId{0}, Gvp{3}, Gpp{8});
  CHECK(pt.guest_lookup({0, 0}, Gvp{3}) == Gpp{8});
  CHECK(pt.map_guest(VmId{0}, Gvp{3}, Gpp{8}).empty());
}

TEST_CASE("GVPs sharing the upper indices share the intermediate chain") {
  PageTables pt = fresh();
  pt.map_guest(VmId{0}, Gvp{0}, Gpp{1});
  const auto pages = pt.mem().table_pages();
  const auto lines = pt.map_guest(VmId{0}, Gvp{1}, Gpp{2});
  CHECK(pt.mem().table_pages() == pages);
  CHECK(lines.size() == 1);
  // a different leaf table needs exactly one more guest table page
  const auto lines2 = pt.map_guest(VmId{0}, Gvp{512}, Gpp{3});
  CHECK(pt.mem().table_pages() == pages + 1);
  CHECK(lines2.size() >= 2);
}

TEST_CASE("map_nested examples") {
  PageTables pt = fresh();
  pt.map_nested(0, Gpp{8}, Spp{5});
  CHECK(pt.nested_lookup(0, Gpp{8}) == Spp{5});
  CHECK(pt.map_nested(0, Gpp{8}, Spp{5}).empty());

  std::set<std::uint64_t> later;
  for (std::uint64_t g = 16; g < 24; ++g) {
    const auto lines = pt.map_nested(0, Gpp{g}, Spp{100 + g});
    if (g > 16) {
      for (auto l : lines) later.insert(l.value);
    }
  }
  const LineAddr leaf = line_of(*pt.nested_leaf(0, Gpp{16}));
  for (std::uint64_t g = 16; g < 24; ++g) CHECK(line_of(*pt.nested_leaf(0, Gpp{g})) == leaf);
  CHECK(later == std::set<std::uint64_t>{leaf.value});
}

TEST_CASE("remap_nested examples") {
  PageTables pt = fresh();
  map_page(pt, Gvp{3}, Gpp{8}, Spp{5});
  pt.walk_2d({0, 0}, Gvp{3}, nullptr);
  CHECK(pt.nested_accessed(0, Gpp{8}));
  const RemapResult r = pt.remap_nested(0, Gpp{8}, Spp{512});
  CHECK(r.old_spp == Spp{5});
  CHECK(pt.walk_2d({0, 0}, Gvp{3}, nullptr).spp == Spp{512});
  CHECK(r.line == line_of(*pt.nested_leaf(0, Gpp{8})));
  CHECK(r.entry == *pt.nested_leaf(0, Gpp{8}));
  const Pte leaf = pt.read_pte(r.entry);
  CHECK(leaf.target == 512);
  CHECK(leaf.dirty == false);
  CHECK_THROWS_AS(pt.remap_nested(0, Gpp{99}, Spp{1}), MissingMappingError);
}

TEST_CASE("remap of a leaf sharing a line with seven others") {
  PageTables pt = fresh();
  for (std::uint64_t g = 8; g < 16; ++g) pt.map_nested(0, Gpp{g}, Spp{g});
  const RemapResult r = pt.remap_nested(0, Gpp{11}, Spp{700});
  for (std::uint64_t g = 8; g < 16; ++g) CHECK(line_of(*pt.nested_leaf(0, Gpp{g})) == r.line);
}

TEST_CASE("cold two-dimensional walk issues 24 references in grid order") {
  PageTables pt = fresh();
  map_page(pt, Gvp{3}, Gpp{8}, Spp{5});
  const WalkResult w = pt.walk_2d({0, 0}, Gvp{3}, nullptr);
  REQUIRE(w.refs.size() == 24);
  std::vector<WalkRole> expect;
  for (unsigned g = 4; g >= 1; --g) {
    for (unsigned n = 4; n >= 1; --n) expect.push_back(nested_role(n));
    expect.push_back(guest_role(g));
  }
  for (unsigned n = 4; n >= 1; --n) expect.push_back(nested_role(n));
  for (std::size_t i = 0; i < 24; ++i) CHECK(w.refs[i].role == expect[i]);
  CHECK(w.spp == Spp{5});
  CHECK(w.gpp == Gpp{8});
  std::set<std::uint64_t> ref_spas;
  for (const auto& r : w.refs) {
    ref_spas.insert(r.spa.value);
    CHECK(pt.read_pte(r.spa).accessed);
  }
  for (const auto& f : w.fills) CHECK(ref_spas.contains(f.source.value));
  // TLB fill is sourced from the data page's nested leaf entry
  bool tlb = false;
  for (const auto& f : w.fills) {
    if (f.target == TStructKind::l2_tlb) {
      tlb = true;
      CHECK(f.source == *pt.nested_leaf(0, Gpp{8}));
      CHECK(f.payload == 5);
    }
  }
  CHECK(tlb);
}

TEST_CASE("native walk issues 4 references") {
  PageTables pt = fresh(false);
  pt.map_native({0, 0}, Gvp{3}, Spp{5});
  const WalkResult w = pt.walk_2d({0, 0}, Gvp{3}, nullptr);
  CHECK(w.refs.size() == 4);
  CHECK(w.spp == Spp{5});
}

TEST_CASE("warm MMU cache and nTLB elide references") {
  PageTables pt = fresh();
  map_page(pt, Gvp{3}, Gpp{8}, Spp{5});
  map_page(pt, Gvp{4}, Gpp{9}, Spp{6});
  TranslationStructures ts{TstructConfig{}};
  const WalkResult cold = pt.walk_2d({0, 0}, Gvp{3}, &ts);
  CHECK(cold.refs.size() == 24);
  apply(ts, cold);
  // same leaf table: MMU cache skips 3 levels, only gL1 and gpp 9's nested walk remain
  const WalkResult warm = pt.walk_2d({0, 0}, Gvp{4}, &ts);
  CHECK(warm.mmu_levels_skipped == 3);
  CHECK(warm.refs.size() == 5);
  CHECK(warm.refs[0].role == WalkRole::gL1);
  apply(ts, warm);
  // now everything but the gL1 read hits
  ts.l1_tlb().flush();
  ts.l2_tlb().flush();
  const WalkResult hot = pt.walk_2d({0, 0}, Gvp{4}, &ts);
  CHECK(hot.refs.size() == 1);
  CHECK(hot.ntlb_hits == 1);
  CHECK(hot.spp == Spp{6});
}

TEST_CASE("walk determinism") {
  PageTables a = fresh();
  for (std::uint64_t v = 0; v < 40; ++v) map_page(a, Gvp{v * 37}, Gpp{v}, Spp{v + 3});
  TranslationStructures ta{TstructConfig{}};
  for (std::uint64_t v = 0; v < 20; ++v) apply(ta, a.walk_2d({0, 0}, Gvp{v * 37}, &ta));
  PageTables b = a;
  TranslationStructures tb = ta;
  for (std::uint64_t v = 0; v < 40; ++v) {
    const WalkResult x = a.walk_2d({0, 0}, Gvp{v * 37}, &ta);
    const WalkResult y = b.walk_2d({0, 0}, Gvp{v * 37}, &tb);
    REQUIRE(x.refs.size() == y.refs.size());
    for (std::size_t i = 0; i < x.refs.size(); ++i) {
      CHECK(x.refs[i].spa == y.refs[i].spa);
      CHECK(x.refs[i].role == y.refs[i].role);
    }
    CHECK(x.spp == y.spp);
  }
}

TEST_CASE("radix consistency and modified-line completeness under random mutation") {
  std::mt19937_64 rng(17);
  PageTables pt = fresh();
  std::map<std::uint64_t, std::uint64_t> guest, nested;  // gvp->gpp, gpp->spp
  for (int i = 0; i < 1500; ++i) {
    const auto before = pt.mem().pages();
    std::vector<LineAddr> lines;
    const unsigned op = rng() % 3;
    if (op == 0 || nested.empty()) {
      const std::uint64_t gvp = rng() % 5000;
      const std::uint64_t gpp = rng() % 3000;
      lines = pt.map_guest(VmId{0}, Gvp{gvp}, Gpp{gpp});
      guest[gvp] = gpp;
    } else if (op == 1) {
      const std::uint64_t gpp = rng() % 3000;
      const std::uint64_t spp = rng() % 2000;
      lines = pt.map_nested(0, Gpp{gpp}, Spp{spp});
      nested[gpp] = spp;
    } else {
      auto it = nested.begin();
      std::advance(it, static_cast<long>(rng() % nested.size()));
      const std::uint64_t spp = rng() % 2000;
      const auto r = pt.remap_nested(0, Gpp{it->first}, Spp{spp});
      CHECK(r.old_spp.value == it->second);
      it->second = spp;
      lines = {r.line};
    }
    std::set<std::uint64_t> reported;
    for (auto l : lines) reported.insert(l.value);
    for (auto l : changed_lines(before, pt.mem().pages())) CHECK(reported.contains(l));
  }
  for (const auto& [gvp, gpp] : guest) {
    auto n = nested.find(gpp);
    if (n == nested.end()) continue;
    CHECK(pt.translate({0, 0}, Gvp{gvp}) == Spp{n->second});
    CHECK(pt.walk_2d({0, 0}, Gvp{gvp}, nullptr).spp == Spp{n->second});
  }
}

TEST_CASE("read_pte / write_pte") {
  PageTables pt = fresh();
  map_page(pt, Gvp{3}, Gpp{8}, Spp{5});
  const Spa e = *pt.nested_leaf(0, Gpp{8});
  Pte p{77, true, true, true};
  CHECK(pt.write_pte(e, p) == line_of(e));
  CHECK(pt.read_pte(e) == p);
  // identical bytes still report the line
  CHECK(pt.write_pte(e, p) == line_of(e));
  CHECK_THROWS_AS(pt.read_pte(Spa{0}), FaultError);
  CHECK_THROWS_AS(pt.read_pte(Spa{e.value + 4}), AlignmentError);
}

TEST_CASE("walk of an unmapped page faults at the missing level") {
  PageTables pt = fresh();
  map_page(pt, Gvp{3}, Gpp{8}, Spp{5});
  try {
    pt.walk_2d({0, 0}, Gvp{4}, nullptr);
    FAIL("expected a fault");
  } catch (const TranslationFault& f) {
    CHECK(f.role() == WalkRole::gL1);
  }
  pt.map_guest(VmId{0}, Gvp{4}, Gpp{9});
  try {
    pt.walk_2d({0, 0}, Gvp{4}, nullptr);
    FAIL("expected a fault");
  } catch (const TranslationFault& f) {
    CHECK(is_nested(f.role()));
  }
}

TEST_CASE("debug dump lists present entries") {
  PageTables pt = fresh();
  map_page(pt, Gvp{3}, Gpp{8}, Spp{5});
  const std::string d = pt.dump(0);
  CHECK(d.find("nested") != std::string::npos);
  CHECK(d.find("guest pid 0") != std::string::npos);
  CHECK(d.find("gL1 0/0/0/3 -> 0x8\n") != std::string::npos);
  CHECK(d.find("nL1 0/0/0/8 -> 0x5\n") != std::string::npos);
  CHECK(d == pt.dump(0));
}
