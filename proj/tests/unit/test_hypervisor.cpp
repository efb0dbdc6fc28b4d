#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <utility>

#include "hatric/hypervisor.hpp"

using namespace hatric;

namespace {

MemoryGeometry geo(std::uint64_t fast_pages) {
  MemoryGeometry g;
  g.fast_bytes = fast_pages * kPageSize;
  g.slow_bytes = 4ull << 20;
  g.table_reserve_pages = 256;
  return g;
}

struct Rig {
  Platform p;
  Hypervisor hv;

  Rig(std::uint64_t fast_pages, PagingPolicy policy, CoherenceMode mode = CoherenceMode::hatric) {
    PlatformConfig c;
    c.cpus = 2;
    c.mode = mode;
    c.memory = geo(fast_pages);
    p = Platform(c);
    p.add_vm(0, {0, 1});
    hv = Hypervisor(c.memory, policy, 1);
  }
  Spp place(std::uint64_t gpp) {
    const Spp s = hv.place_new_page(0, Gpp{gpp});
    p.tables().map_nested(0, Gpp{gpp}, s);
    return s;
  }
  Region region(std::uint64_t gpp) const {
    return p.tables().geometry().region_of(*p.tables().nested_lookup(0, Gpp{gpp}));
  }
};

// Textbook CLOCK over a slot array.
struct ClockModel {
  std::vector<int> slot;  // -1 empty, else page id
  std::vector<bool> ref;
  std::size_t hand = 0;

  std::optional<std::size_t> select() {
    for (std::size_t step = 0; step < 2 * slot.size() + 1; ++step) {
      const std::size_t i = hand;
      hand = (hand + 1) % slot.size();
      if (slot[i] < 0) continue;
      if (!ref[i]) return i;
      ref[i] = false;
    }
    return std::nullopt;
  }
};

}  // namespace

TEST_CASE("policy parsing") {
  const PagingPolicy p = PagingPolicy::parse("lru,mig-dmn,pref");
  CHECK(p.lru);
  CHECK(p.daemon);
  CHECK(p.prefetch);
  CHECK(p.to_string() == "lru,daemon,prefetch");
  CHECK_FALSE(PagingPolicy::parse("none").enabled());
  CHECK_FALSE(PagingPolicy::parse("no-hbm").enabled());
  CHECK(PagingPolicy::parse("fifo").replacement == Replacement::fifo);
  CHECK_THROWS_AS(PagingPolicy::parse("lru,bogus"), ConfigError);
  PagingPolicy bad = PagingPolicy::disabled();
  bad.daemon = true;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("CLOCK: all bits set sweeps once then takes the first slot") {
  FastMemPool pool(0, 4);
  std::map<std::uint64_t, bool> abit;
  for (std::uint64_t g = 0; g < 4; ++g) {
    const Spp s = *pool.take_free();
    pool.occupy(s, {0, Gpp{g}});
    abit[g] = true;
  }
  auto referenced = [&](const Resident& r) {
    const bool was = abit[r.gpp.value];
    abit[r.gpp.value] = false;
    return was;
  };
  const auto v = pool.clock_select(referenced);
  REQUIRE(v.has_value());
  CHECK(v->value == 0);
  for (auto& [g, b] : abit) CHECK_FALSE(b);
  CHECK(pool.hand() == 1);
}

TEST_CASE("CLOCK: the one untouched slot is chosen") {
  FastMemPool pool(0, 5);
  std::map<std::uint64_t, bool> abit;
  for (std::uint64_t g = 0; g < 5; ++g) {
    pool.occupy(*pool.take_free(), {0, Gpp{g}});
    abit[g] = g != 3;
  }
  const auto v = pool.clock_select([&](const Resident& r) {
    const bool was = abit[r.gpp.value];
    abit[r.gpp.value] = false;
    return was;
  });
  CHECK(v == Spp{3});
}

TEST_CASE("CLOCK: single page pool") {
  FastMemPool pool(10, 1);
  pool.occupy(*pool.take_free(), {0, Gpp{7}});
  bool abit = true;
  CHECK(pool.clock_select([&](const Resident&) { return std::exchange(abit, false); }) == Spp{10});
}

TEST_CASE("CLOCK matches the reference model") {
  std::mt19937_64 rng(13);
  constexpr std::size_t kCap = 16;
  FastMemPool pool(100, kCap);
  ClockModel model{std::vector<int>(kCap, -1), std::vector<bool>(kCap, false), 0};
  std::map<std::uint64_t, bool> abit;
  int next = 0;
  for (int i = 0; i < 5000; ++i) {
    const unsigned op = rng() % 4;
    if (op == 0 && pool.free_count() > 0) {
      const Spp s = *pool.take_free();
      pool.occupy(s, {0, Gpp{static_cast<std::uint64_t>(next)}});
      model.slot[s.value - 100] = next;
      model.ref[s.value - 100] = true;
      abit[static_cast<std::uint64_t>(next)] = true;
      ++next;
    } else if (op == 1) {
      for (std::size_t k = 0; k < kCap; ++k) {
        if (model.slot[k] >= 0 && rng() % 3 == 0) {
          abit[static_cast<std::uint64_t>(model.slot[k])] = true;
          model.ref[k] = true;
        }
      }
    } else if (pool.resident_count() > 0) {
      const auto got = pool.clock_select([&](const Resident& r) {
        const bool was = abit[r.gpp.value];
        abit[r.gpp.value] = false;
        return was;
      });
      const auto want = model.select();
      REQUIRE(got.has_value());
      REQUIRE(want.has_value());
      CHECK(got->value - 100 == *want);
      // second chance: the victim was unreferenced when the hand reached it
      if (op == 3) {
        pool.release(*got);
        model.slot[*want] = -1;
      }
    }
    CHECK(pool.resident_count() + pool.free_count() == kCap);
  }
}

TEST_CASE("first-touch placement fills fast memory first") {
  Rig r(4, PagingPolicy{});
  for (std::uint64_t g = 0; g < 6; ++g) r.place(g);
  for (std::uint64_t g = 0; g < 4; ++g) CHECK(r.region(g) == Region::fast);
  CHECK(r.region(4) == Region::slow);
  CHECK(r.hv.counters().placed_slow == 2);
  Rig off(4, PagingPolicy::disabled());
  CHECK(off.p.tables().geometry().region_of(off.hv.place_new_page(0, Gpp{0})) == Region::slow);
}

TEST_CASE("fault with a free frame migrates one page with one remap") {
  Rig r(4, PagingPolicy{});
  for (std::uint64_t g = 0; g < 5; ++g) r.place(g);
  const auto victim = r.hv.clock_select_victim(r.p);
  REQUIRE(victim.has_value());
  r.hv.evict(r.p, *victim, 0);
  const auto remaps = r.p.counters().remaps;
  const auto res = r.hv.access_fault(r.p, 0, Gpp{4}, 0);
  CHECK(res.migrated == std::vector<Gpp>{Gpp{4}});
  CHECK(r.p.counters().remaps - remaps == 1);
  CHECK(r.region(4) == Region::fast);
  CHECK(res.latency > r.p.cost().vm_exit_cost);
  CHECK(r.p.tables().nested_accessed(0, Gpp{4}));
}

TEST_CASE("prefetch degree 2 migrates up to three pages") {
  PagingPolicy pol;
  pol.prefetch = true;
  pol.prefetch_degree = 2;
  Rig r(8, pol);
  // 8 fast pages taken by gpps 100.., then slow gpps 0..3
  for (std::uint64_t g = 100; g < 108; ++g) r.place(g);
  for (std::uint64_t g = 0; g < 4; ++g) r.place(g);
  const auto remaps = r.p.counters().remaps;
  const auto res = r.hv.access_fault(r.p, 0, Gpp{0}, 1);
  CHECK(res.migrated == std::vector<Gpp>{Gpp{0}, Gpp{1}, Gpp{2}});
  CHECK(r.region(3) == Region::slow);
  // pool was full: each migration also evicted one victim
  CHECK(r.p.counters().remaps - remaps == 6);
  CHECK(r.hv.counters().prefetches == 2);
}

TEST_CASE("fault with a full pool evicts then migrates: two remaps") {
  Rig r(4, PagingPolicy{});
  for (std::uint64_t g = 0; g < 5; ++g) r.place(g);
  REQUIRE(r.hv.pool().free_count() == 0);
  std::set<std::uint64_t> before;
  for (std::uint64_t g = 0; g < 5; ++g) {
    if (r.region(g) == Region::fast) before.insert(g);
  }
  const auto remaps = r.p.counters().remaps;
  r.hv.access_fault(r.p, 0, Gpp{4}, 0);
  CHECK(r.p.counters().remaps - remaps == 2);
  std::set<std::uint64_t> after;
  for (std::uint64_t g = 0; g < 5; ++g) {
    if (r.region(g) == Region::fast) after.insert(g);
  }
  CHECK(after.size() == 4);
  CHECK(after.contains(4));
  std::set<std::uint64_t> out;
  for (auto g : before) {
    if (!after.contains(g)) out.insert(g);
  }
  CHECK(out.size() == 1);
}

TEST_CASE("fault with paging disabled passes through") {
  Rig r(4, PagingPolicy::disabled());
  r.place(0);
  const auto res = r.hv.access_fault(r.p, 0, Gpp{0}, 0);
  CHECK(res.migrated.empty());
  CHECK(res.latency == r.p.cost().vm_exit_cost);
  CHECK(r.hv.counters().passthrough_faults == 1);
}

TEST_CASE("daemon watermarks") {
  PagingPolicy pol;
  pol.daemon = true;
  pol.low_watermark = 16;
  pol.high_watermark = 32;
  Rig r(64, pol);
  for (std::uint64_t g = 0; g < 64; ++g) r.place(g);
  REQUIRE(r.hv.pool().free_count() == 0);
  CHECK(r.hv.migration_daemon_tick(r.p) == 32);
  CHECK(r.hv.pool().free_count() == 32);
  CHECK(r.hv.migration_daemon_tick(r.p) == 0);
  CHECK(r.p.clock(r.p.daemon_cpu()) > 0);
  CHECK(r.p.clock(0) == 0);

  PagingPolicy off;
  off.low_watermark = 16;
  off.high_watermark = 32;
  Rig q(64, off);
  for (std::uint64_t g = 0; g < 64; ++g) q.place(g);
  CHECK(q.hv.migration_daemon_tick(q.p) == 0);
}

TEST_CASE("daemon stops at the low watermark boundary") {
  PagingPolicy pol;
  pol.daemon = true;
  pol.low_watermark = 4;
  pol.high_watermark = 8;
  Rig r(16, pol);
  for (std::uint64_t g = 0; g < 12; ++g) r.place(g);
  CHECK(r.hv.pool().free_count() == 4);
  CHECK(r.hv.migration_daemon_tick(r.p) == 0);
}

TEST_CASE("residency agrees with translation under random faults") {
  for (auto repl : {Replacement::clock, Replacement::fifo}) {
    std::mt19937_64 rng(23);
    PagingPolicy pol;
    pol.replacement = repl;
    pol.prefetch = true;
    pol.prefetch_degree = 3;
    pol.daemon = true;
    pol.low_watermark = 2;
    pol.high_watermark = 4;
    Rig r(16, pol);
    for (std::uint64_t g = 0; g < 64; ++g) r.place(g);
    for (int i = 0; i < 2000; ++i) {
      const std::uint64_t g = rng() % 64;
      if (r.region(g) == Region::slow) {
        r.hv.access_fault(r.p, 0, Gpp{g}, static_cast<CpuId>(rng() % 2));
      } else {
        r.p.tables().set_nested_accessed(0, Gpp{g}, true);
      }
      if (i % 7 == 0) r.hv.migration_daemon_tick(r.p);
      if (i % 13 == 0) r.hv.background_remap(r.p);
      const FastMemPool& pool = r.hv.pool();
      std::set<std::uint64_t> frames;
      std::uint64_t resident = 0;
      for (std::uint64_t s = 0; s < pool.capacity(); ++s) {
        const auto& who = pool.at(Spp{s});
        if (!who) continue;
        ++resident;
        CHECK(r.p.tables().nested_lookup(0, who->gpp) == Spp{s});
      }
      for (auto f : pool.free_list()) {
        CHECK(frames.insert(f).second);
        CHECK_FALSE(pool.at(Spp{f}).has_value());
      }
      CHECK(resident + pool.free_count() == pool.capacity());
      for (std::uint64_t x = 0; x < 64; ++x) {
        const Spp s = *r.p.tables().nested_lookup(0, Gpp{x});
        if (r.p.tables().geometry().region_of(s) == Region::fast) {
          REQUIRE(pool.at(s).has_value());
          CHECK(pool.at(s)->gpp == Gpp{x});
        }
      }
    }
    CHECK(r.hv.counters().migrations_in > 0);
    CHECK(r.hv.counters().background_remaps > 0);
  }
}
