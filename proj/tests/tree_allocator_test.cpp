#include "nbuddy/tree_allocator.hpp"

#include <gtest/gtest.h>

#include <vector>

namespace nbuddy {
namespace {

// depth 2: total 32, leaves of 8 at nodes 4..7, max_level 0.
tree_config cfg32() { return tree_config::create(32, 8, 32); }

TEST(tree_allocator, starts_all_zero) {
  tree_allocator<> a(cfg32());
  for (const std::uint64_t w : a.snapshot()) EXPECT_EQ(w, 0u);
  EXPECT_EQ(a.snapshot().size(), 8u);  // 7 nodes + unused element 0
}

TEST(tree_allocator, leaf_grant_marks_path) {
  tree_allocator<> a(cfg32());
  const alloc_result r = a.allocate(8, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.offset, 0u);
  EXPECT_EQ(r.node, 4u);
  EXPECT_EQ(r.size, 8u);
  const auto snap = a.snapshot();
  EXPECT_EQ(snap[4], busy_mask);
  EXPECT_EQ(snap[2], occ_left);
  EXPECT_EQ(snap[1], occ_left);
  EXPECT_EQ(snap[3], 0u);
  EXPECT_EQ(snap[5], 0u);

  // The root is partially occupied now: a whole-region request cannot fit.
  EXPECT_EQ(a.allocate(32, 0).status, alloc_status::exhausted);
}

TEST(tree_allocator, whole_region_grant) {
  tree_allocator<> a(cfg32());
  const alloc_result r = a.allocate(32, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.node, 1u);
  EXPECT_EQ(r.offset, 0u);
  EXPECT_EQ(r.size, 32u);
  EXPECT_EQ(a.snapshot()[1], busy_mask);
  EXPECT_EQ(a.allocate(8, 0).status, alloc_status::exhausted);
  ASSERT_EQ(a.release(0), free_status::ok);
  for (const std::uint64_t w : a.snapshot()) EXPECT_EQ(w, 0u);
}

TEST(tree_allocator, oversize_request_rejected) {
  tree_allocator<> a(cfg32());
  EXPECT_EQ(a.allocate(33, 0).status, alloc_status::too_large);
  const tree_config capped = tree_config::create(1024, 8, 256);
  tree_allocator<> b(capped);
  EXPECT_EQ(b.allocate(257, 0).status, alloc_status::too_large);
  EXPECT_TRUE(b.allocate(256, 0));
}

TEST(tree_allocator, sub_minimum_rounds_up) {
  tree_allocator<> a(cfg32());
  EXPECT_EQ(a.allocate(0, 0).size, 8u);
  EXPECT_EQ(a.allocate(5, 0).size, 8u);
  // 17 bytes take the 32-byte bucket, which is already gone.
  EXPECT_EQ(a.allocate(17, 0).status, alloc_status::exhausted);
}

TEST(tree_allocator, granted_size_covers_request) {
  tree_allocator<> a(tree_config::create(1024, 8, 1024));
  const alloc_result r = a.allocate(100, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.size, 128u);
  EXPECT_EQ(r.offset % r.size, 0u);
}

TEST(tree_allocator, hint_scatters_scan_start) {
  tree_allocator<> a(cfg32());
  const alloc_result r = a.allocate(8, 3);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.node, 7u);
  EXPECT_EQ(r.offset, 24u);
  // Same hint again: start node occupied, scan wraps to the level's front.
  const alloc_result r2 = a.allocate(8, 3);
  ASSERT_TRUE(r2);
  EXPECT_EQ(r2.node, 4u);
}

TEST(tree_allocator, blocked_climb_reverts_and_skips) {
  tree_allocator<> a(cfg32());
  ASSERT_EQ(a.allocate(16, 0).node, 2u);  // holds leaves 4 and 5 hostage
  const alloc_result r = a.allocate(8, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.node, 6u);  // claim of 4 reverted, subtree of 2 skipped
  const auto snap = a.snapshot();
  EXPECT_EQ(snap[4], 0u);  // reverted claim left no trace
  EXPECT_EQ(snap[2], busy_mask);
  EXPECT_EQ(snap[6], busy_mask);
  EXPECT_EQ(snap[3], occ_left);
  EXPECT_EQ(snap[1], occ_left | occ_right);
  EXPECT_GE(a.counters().alloc_restart, 1u);
}

TEST(tree_allocator, sibling_free_keeps_buddy_bits) {
  tree_allocator<> a(cfg32());
  ASSERT_EQ(a.allocate(8, 0).node, 4u);
  ASSERT_EQ(a.allocate(8, 0).node, 5u);
  EXPECT_EQ(a.snapshot()[2], occ_left | occ_right);

  ASSERT_EQ(a.release(0), free_status::ok);
  const auto snap = a.snapshot();
  EXPECT_EQ(snap[4], 0u);
  EXPECT_EQ(snap[2], occ_right);  // buddy still live, climb stopped here
  EXPECT_EQ(snap[1], occ_left);

  ASSERT_EQ(a.release(8), free_status::ok);
  for (const std::uint64_t w : a.snapshot()) EXPECT_EQ(w, 0u);
}

TEST(tree_allocator, fill_level_then_exhausted) {
  tree_allocator<> a(cfg32());
  std::vector<std::uint64_t> offs;
  for (int i = 0; i < 4; ++i) {
    const alloc_result r = a.allocate(8, 0);
    ASSERT_TRUE(r);
    offs.push_back(r.offset);
  }
  EXPECT_EQ(a.allocate(8, 0).status, alloc_status::exhausted);
  EXPECT_EQ(a.allocate(8, 2).status, alloc_status::exhausted);  // any hint
  for (const std::uint64_t off : offs) ASSERT_EQ(a.release(off), free_status::ok);
  for (const std::uint64_t w : a.snapshot()) EXPECT_EQ(w, 0u);
}

TEST(tree_allocator, mixed_sizes_drain_to_zero) {
  tree_allocator<> a(tree_config::create(1024, 8, 1024));
  std::vector<std::uint64_t> offs;
  for (const std::uint64_t size : {8u, 100u, 16u, 256u, 8u, 64u}) {
    const alloc_result r = a.allocate(size, 0);
    ASSERT_TRUE(r);
    offs.push_back(r.offset);
  }
  // Free in an order that exercises both buddy-present and buddy-free paths.
  for (const std::size_t i : {1u, 4u, 0u, 5u, 2u, 3u})
    ASSERT_EQ(a.release(offs[i]), free_status::ok);
  for (const std::uint64_t w : a.snapshot()) EXPECT_EQ(w, 0u);
}

TEST(tree_allocator, invalid_frees_rejected) {
  tree_allocator<> a(cfg32());
  ASSERT_TRUE(a.allocate(8, 0));
  EXPECT_EQ(a.release(3), free_status::invalid_address);    // misaligned
  EXPECT_EQ(a.release(32), free_status::invalid_address);   // past the end
  EXPECT_EQ(a.release(24), free_status::invalid_address);   // never granted
  EXPECT_EQ(a.release(0), free_status::ok);
}

TEST(tree_allocator, base_offset_grants_absolute_addresses) {
  const std::uint64_t base = 1 << 20;
  tree_allocator<> a(tree_config::create(32, 8, 32, base));
  const alloc_result r = a.allocate(8, 0);
  ASSERT_TRUE(r);
  EXPECT_EQ(r.offset, base);
  EXPECT_EQ(a.release(base - 8), free_status::invalid_address);
  EXPECT_EQ(a.release(base), free_status::ok);
}

TEST(tree_allocator, index_slot_reused_after_free) {
  tree_allocator<> a(cfg32());
  ASSERT_EQ(a.allocate(8, 0).node, 4u);
  ASSERT_EQ(a.release(0), free_status::ok);
  ASSERT_EQ(a.allocate(16, 0).node, 2u);  // same offset, different node
  ASSERT_EQ(a.release(0), free_status::ok);
  for (const std::uint64_t w : a.snapshot()) EXPECT_EQ(w, 0u);
}

// One leaf round trip in an empty deep tree: the climb pays one CAS per
// level above the leaf, the release pays the same in each walking pass, and
// nothing retries.
TEST(tree_allocator, rmw_counts_on_empty_tree) {
  const std::uint32_t depth = 8;
  tree_allocator<> a(tree_config::create(std::uint64_t{8} << depth, 8, 8 << depth));
  ASSERT_TRUE(a.allocate(8, 0));
  counter_totals c = a.counters();
  EXPECT_EQ(c.occupy_cas, 1u);
  EXPECT_EQ(c.climb_cas, depth);
  EXPECT_EQ(c.climb_retry, 0u);

  ASSERT_EQ(a.release(0), free_status::ok);
  c = a.counters();
  EXPECT_EQ(c.coal_cas, depth);
  EXPECT_EQ(c.unmark_cas, depth);
  EXPECT_EQ(c.reset_cas, 0u);  // flat reset is a plain store
  EXPECT_EQ(c.cas_retries(), 0u);
  EXPECT_EQ(c.allocs, 1u);
  EXPECT_EQ(c.frees, 1u);
}

TEST(tree_allocator_death, shadow_catches_double_free) {
  ::testing::FLAGS_gtest_death_test_style = "threadsafe";
  tree_allocator<>::options opt;
  opt.shadow_live_set = true;
  tree_allocator<> a(cfg32(), opt);
  ASSERT_TRUE(a.allocate(8, 0));
  ASSERT_EQ(a.release(0), free_status::ok);
  EXPECT_DEATH(a.release(0), "non-live offset");
}

}  // namespace
}  // namespace nbuddy
