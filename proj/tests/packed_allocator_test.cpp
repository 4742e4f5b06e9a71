#include "nbuddy/packed_allocator.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "nbuddy/config.hpp"
#include "nbuddy/geometry.hpp"
#include "nbuddy/packed_layout.hpp"
#include "nbuddy/status_bits.hpp"

namespace nbuddy {
namespace {

constexpr std::uint64_t b = busy_mask;

tree_config depth2() { return tree_config::create(32, 8, 32); }
tree_config depth7() { return tree_config::create(1024, 8, 1024); }

TEST(packed_allocator, starts_all_zero) {
  packed_allocator<> a(depth2());
  ASSERT_EQ(a.layout().tiles(), 1u);
  const std::vector<std::uint64_t> tiles = a.snapshot_tiles();
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0], 0u);
  const std::vector<std::uint64_t> snap = a.snapshot();
  ASSERT_EQ(snap.size(), 8u);
  for (std::uint64_t n = 1; n <= 7; ++n) EXPECT_EQ(snap[n], 0u) << "node " << n;
}

// A leaf grant is one CAS on its slot; the in-tile ancestors need no write
// because their statuses are derived from the cover.
TEST(packed_allocator, leaf_grant_is_one_cas) {
  packed_allocator<> a(depth2());
  const alloc_result r = a.allocate(8, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.offset, 0u);
  EXPECT_EQ(r.node, 4u);
  EXPECT_EQ(r.size, 8u);

  EXPECT_EQ(a.snapshot_tiles()[0], b);

  const counter_totals c = a.counters();
  EXPECT_EQ(c.allocs, 1u);
  EXPECT_EQ(c.occupy_cas, 1u);
  EXPECT_EQ(c.climb_cas, 0u);
  EXPECT_EQ(c.cas_retries(), 0u);

  const std::vector<std::uint64_t> snap = a.snapshot();
  EXPECT_EQ(snap[4], busy_mask);
  EXPECT_EQ(snap[2], occ_left);
  EXPECT_EQ(snap[1], occ_left);
  EXPECT_EQ(snap[3], 0u);
  EXPECT_EQ(snap[5], 0u);
  EXPECT_EQ(snap[6], 0u);
  EXPECT_EQ(snap[7], 0u);
}

// The level scan reads blockage straight out of the tile word, so a busy
// cover is skipped without an acquire attempt or a restart.
TEST(packed_allocator, scan_skips_busy_cover_in_tile) {
  packed_allocator<> a(depth2());
  ASSERT_TRUE(a.allocate(8, 0));  // node 4: slot of node 2's cover is busy

  const alloc_result r = a.allocate(16, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.node, 3u);
  EXPECT_EQ(r.offset, 16u);
  EXPECT_EQ(a.snapshot_tiles()[0], b | b << 10 | b << 15);

  const counter_totals c = a.counters();
  EXPECT_EQ(c.occupy_cas, 2u);
  EXPECT_EQ(c.climb_cas, 0u);
  EXPECT_EQ(c.alloc_restart, 0u);

  // Granting an interior node stamps busy on every covered bunch-leaf slot,
  // so the derived view shows the whole subtree occupied.
  const std::vector<std::uint64_t> snap = a.snapshot();
  EXPECT_EQ(snap[3], busy_mask);
  EXPECT_EQ(snap[6], busy_mask);
  EXPECT_EQ(snap[7], busy_mask);
  EXPECT_EQ(snap[2], occ_left);
  EXPECT_EQ(snap[1], occ_left | occ_right);

  const alloc_result r5 = a.allocate(8, 0);
  ASSERT_TRUE(r5);
  EXPECT_EQ(r5.node, 5u);
  EXPECT_EQ(r5.offset, 8u);
  EXPECT_EQ(a.snapshot_tiles()[0], b | b << 5 | b << 10 | b << 15);

  EXPECT_EQ(a.allocate(8, 0).status, alloc_status::exhausted);
  EXPECT_EQ(a.counters().exhausted, 1u);
  EXPECT_EQ(a.allocate(33, 0).status, alloc_status::too_large);
}

TEST(packed_allocator, whole_region_grant_and_drain) {
  packed_allocator<> a(depth2());
  const alloc_result r = a.allocate(32, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.node, 1u);
  EXPECT_EQ(r.size, 32u);
  EXPECT_EQ(a.snapshot_tiles()[0], b | b << 5 | b << 10 | b << 15);

  counter_totals c = a.counters();
  EXPECT_EQ(c.occupy_cas, 1u);
  EXPECT_EQ(c.climb_cas, 0u);

  const std::vector<std::uint64_t> snap = a.snapshot();
  for (std::uint64_t n = 1; n <= 7; ++n)
    EXPECT_EQ(snap[n], busy_mask) << "node " << n;

  ASSERT_EQ(a.release(0), free_status::ok);
  EXPECT_EQ(a.snapshot_tiles()[0], 0u);
  c = a.counters();
  EXPECT_EQ(c.frees, 1u);
  EXPECT_EQ(c.reset_cas, 1u);
  EXPECT_EQ(c.coal_cas, 0u);   // root release has no path above to flag
  EXPECT_EQ(c.unmark_cas, 0u);
}

// Freeing one of two sibling leaves must leave the word showing exactly the
// survivor: the marker travels with the freed cover and is retired by the
// reset, and the release walk stops at the occupied buddy.
TEST(packed_allocator, sibling_free_settles_word_exactly) {
  packed_allocator<> a(depth2());
  ASSERT_TRUE(a.allocate(8, 0));  // node 4
  ASSERT_TRUE(a.allocate(8, 1));  // node 5

  ASSERT_EQ(a.release(0), free_status::ok);
  EXPECT_EQ(a.snapshot_tiles()[0], b << 5);

  counter_totals c = a.counters();
  EXPECT_EQ(c.coal_cas, 1u);  // in-tile marker, wiped by the cover reset
  EXPECT_EQ(c.reset_cas, 1u);
  EXPECT_EQ(c.unmark_cas, 0u);

  const std::vector<std::uint64_t> snap = a.snapshot();
  EXPECT_EQ(snap[4], 0u);
  EXPECT_EQ(snap[5], busy_mask);
  EXPECT_EQ(snap[2], occ_right);
  EXPECT_EQ(snap[1], occ_left);

  ASSERT_EQ(a.release(8), free_status::ok);
  EXPECT_EQ(a.snapshot_tiles()[0], 0u);
  EXPECT_EQ(a.counters().frees, 2u);
}

// A blocker in a tile above is invisible to the level scan, so the claim
// succeeds and the climb discovers the occupied ancestor, reverts, and the
// scan skips that ancestor's subtree.  Node 2's grant covers level-3 nodes
// 8..11, so the leaf scan is turned away once per such subtree before
// reaching the free half.
TEST(packed_allocator, cross_tile_blocked_climb_reverts_and_skips) {
  packed_allocator<> a(depth7());
  ASSERT_EQ(a.layout().tiles(), 17u);

  const alloc_result big = a.allocate(512, 0);
  ASSERT_TRUE(big);
  EXPECT_EQ(big.node, 2u);
  EXPECT_EQ(a.snapshot_tiles()[0], b | b << 5 | b << 10 | b << 15);

  const alloc_result leaf = a.allocate(8, 0);
  ASSERT_TRUE(leaf);
  EXPECT_EQ(leaf.node, 192u);
  EXPECT_EQ(leaf.offset, 512u);

  counter_totals c = a.counters();
  EXPECT_EQ(c.allocs, 2u);
  EXPECT_EQ(c.alloc_restart, 4u);  // turned away under nodes 8, 9, 10, 11
  EXPECT_EQ(c.occupy_cas, 6u);
  EXPECT_EQ(c.occupy_fail, 0u);
  EXPECT_EQ(c.climb_cas, 1u);  // lone successful climb marks node 12's slot
  EXPECT_EQ(c.coal_cas, 4u);   // one in-tile marker per revert
  EXPECT_EQ(c.reset_cas, 4u);
  EXPECT_EQ(c.unmark_cas, 0u);
  EXPECT_EQ(c.cas_retries(), 0u);

  std::vector<std::uint64_t> tiles = a.snapshot_tiles();
  EXPECT_EQ(tiles[0], b | b << 5 | b << 10 | b << 15 |
                          std::uint64_t{occ_left} << 20);
  // Leaf 192 lives in the tile rooted at its level-4 ancestor, node 24,
  // which is tile 1 + (24 - 16).  Tiles 1..8 root the skipped subtrees
  // under nodes 8..11 and stay untouched.
  EXPECT_EQ(tiles[9], b);
  for (std::uint64_t t = 1; t < tiles.size(); ++t) {
    if (t == 9) continue;
    EXPECT_EQ(tiles[t], 0u) << "tile " << t;
  }

  ASSERT_EQ(a.release(512), free_status::ok);
  ASSERT_EQ(a.release(0), free_status::ok);
  tiles = a.snapshot_tiles();
  for (std::uint64_t t = 0; t < tiles.size(); ++t)
    EXPECT_EQ(tiles[t], 0u) << "tile " << t;

  c = a.counters();
  EXPECT_EQ(c.frees, 2u);
  EXPECT_EQ(c.coal_cas, 7u);   // +2 for the leaf release, +1 for node 2's
  EXPECT_EQ(c.reset_cas, 6u);
  EXPECT_EQ(c.unmark_cas, 1u);  // only the leaf release had marks above
  EXPECT_EQ(c.cas_retries(), 0u);
}

// Full leaf cycle in an otherwise empty tree, counted per pass: the climb
// and both release walks pay one CAS per tile boundary instead of one per
// level.
TEST(packed_allocator, leaf_cycle_rmw_counts) {
  packed_allocator<> a(depth7());
  ASSERT_TRUE(a.allocate(8, 0));  // node 128, rows 4..7 live in one tile

  counter_totals c = a.counters();
  EXPECT_EQ(c.occupy_cas, 1u);
  EXPECT_EQ(c.climb_cas, 1u);

  ASSERT_EQ(a.release(0), free_status::ok);
  c = a.counters();
  EXPECT_EQ(c.coal_cas, 2u);    // in-tile marker + entry slot above
  EXPECT_EQ(c.reset_cas, 1u);
  EXPECT_EQ(c.unmark_cas, 1u);
  EXPECT_EQ(c.cas_retries(), 0u);

  for (std::uint64_t w : a.snapshot_tiles()) EXPECT_EQ(w, 0u);
}

// Sixteen levels compress into five bands of tiles; a leaf cycle touches
// one tile per band.
TEST(packed_allocator, deep_tree_climb_compression) {
  const tree_config cfg = tree_config::create(std::uint64_t{8} << 16, 8,
                                              std::uint64_t{8} << 16);
  packed_allocator<> a(cfg);
  ASSERT_EQ(a.layout().tiles(), 69905u);  // 1 + 16 + 256 + 4096 + 65536

  const alloc_result r = a.allocate(8, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.node, std::uint64_t{1} << 16);
  EXPECT_EQ(r.offset, 0u);

  counter_totals c = a.counters();
  EXPECT_EQ(c.occupy_cas, 1u);
  EXPECT_EQ(c.climb_cas, 4u);  // one per band above the leaf's

  ASSERT_EQ(a.release(0), free_status::ok);
  c = a.counters();
  EXPECT_EQ(c.coal_cas, 4u);
  EXPECT_EQ(c.reset_cas, 1u);
  EXPECT_EQ(c.unmark_cas, 4u);
  EXPECT_EQ(c.cas_retries(), 0u);

  const std::vector<std::uint64_t> tiles = a.snapshot_tiles();
  EXPECT_TRUE(std::all_of(tiles.begin(), tiles.end(),
                          [](std::uint64_t w) { return w == 0; }));
}

TEST(packed_allocator, invalid_releases_rejected) {
  packed_allocator<> a(tree_config::create(64, 8, 64),
                       packed_allocator<>::options{.shadow_live_set = false});
  ASSERT_TRUE(a.allocate(8, 0));
  EXPECT_EQ(a.release(4), free_status::invalid_address);   // misaligned
  EXPECT_EQ(a.release(8), free_status::invalid_address);   // never granted
  EXPECT_EQ(a.release(64), free_status::invalid_address);  // out of range
  EXPECT_EQ(a.release(0), free_status::ok);

  // The index slot is reused by a grant of a different level at the same
  // offset.
  const alloc_result r = a.allocate(16, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.offset, 0u);
  EXPECT_EQ(r.node, 4u);
  ASSERT_EQ(a.release(0), free_status::ok);
  EXPECT_EQ(a.snapshot_tiles()[0], 0u);
}

TEST(packed_allocator, base_offset_grants_absolute_addresses) {
  packed_allocator<> a(tree_config::create(32, 8, 32, 4096));
  const alloc_result r = a.allocate(8, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.offset, 4096u);
  EXPECT_EQ(a.release(0), free_status::invalid_address);
  ASSERT_EQ(a.release(4096), free_status::ok);
  EXPECT_EQ(a.snapshot_tiles()[0], 0u);
}

TEST(packed_allocator, mixed_churn_drains_to_zero) {
  packed_allocator<> a(depth7());
  const std::uint64_t sizes[] = {8, 24, 16, 128, 8, 64, 100, 8};
  std::vector<std::pair<std::uint64_t, std::uint64_t>> live;  // offset, size
  std::uint64_t hint = 0;
  for (std::uint64_t req : sizes) {
    const alloc_result r = a.allocate(req, hint);
    hint += 7;
    ASSERT_TRUE(r) << "request " << req;
    EXPECT_GE(r.size, std::max<std::uint64_t>(req, 8));
    EXPECT_EQ(r.offset % r.size, 0u) << "offset " << r.offset;
    live.emplace_back(r.offset, r.size);
  }
  const std::size_t order[] = {3, 0, 6, 1, 7, 2, 5, 4};
  for (std::size_t i : order)
    ASSERT_EQ(a.release(live[i].first), free_status::ok) << "chunk " << i;

  for (std::uint64_t w : a.snapshot_tiles()) EXPECT_EQ(w, 0u);
  const counter_totals c = a.counters();
  EXPECT_EQ(c.allocs, 8u);
  EXPECT_EQ(c.frees, 8u);
  EXPECT_EQ(c.exhausted, 0u);
}

TEST(packed_allocator_death, shadow_catches_double_release) {
  ::testing::FLAGS_gtest_death_test_style = "threadsafe";
  packed_allocator<> a(depth2(),
                       packed_allocator<>::options{.shadow_live_set = true});
  ASSERT_TRUE(a.allocate(8, 0));
  ASSERT_EQ(a.release(0), free_status::ok);
  EXPECT_DEATH(a.release(0), "non-live offset");
}

}  // namespace
}  // namespace nbuddy
