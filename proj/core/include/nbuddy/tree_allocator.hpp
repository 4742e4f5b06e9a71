#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <vector>

#include "nbuddy/access.hpp"
#include "nbuddy/config.hpp"
#include "nbuddy/geometry.hpp"
#include "nbuddy/stats.hpp"
#include "nbuddy/status_bits.hpp"

namespace nbuddy {

// Lock-free buddy allocator over an implicit binary tree of status words.
//
// Allocation claims a node with a single 0 -> busy CAS, then climbs toward
// the root marking the side-occupancy bit for the child it came through.
// If the climb runs into a fully occupied ancestor the claim is reverted
// and the scan skips that ancestor's whole subtree.  Release flags the path
// with coalescing bits, resets the node word, then clears the side bits
// back up; a competing allocation revokes the coalescing flags it passes
// (clean_coal), which makes the releasing thread stop clearing early and
// leaves the competitor's marks intact.  No operation blocks: every word
// transition is one CAS, and a failed CAS means another thread's same-word
// transition succeeded.
//
// The tree holds metadata only; payload memory is the caller's business.
template <class Access = direct_access>
class tree_allocator {
 public:
  struct options {
    // Track live grants in a shadow bitmap and abort on double/foreign
    // release.  Costs one atomic RMW per operation, so it defaults to on
    // only in debug builds.
#ifdef NDEBUG
    bool shadow_live_set = false;
#else
    bool shadow_live_set = true;
#endif
  };

  explicit tree_allocator(const tree_config& cfg, options opt = {})
      : cfg_(cfg),
        tree_(new std::atomic<std::uint64_t>[(cfg.node_count() + 1) * word_stride]()),
        index_(new std::atomic<std::uint64_t>[cfg.leaf_count()]()),
        shadow_(opt.shadow_live_set ? new std::atomic<std::uint8_t>[cfg.leaf_count()]()
                                    : nullptr) {}

  const tree_config& config() const { return cfg_; }
  counter_totals counters() const { return counters_.totals(); }

  alloc_result allocate(std::uint64_t size) { return allocate(size, thread_ordinal()); }

  // Scans the target level starting at first + (hint mod width), wrapping
  // once, so every node of the level is considered at most once modulo
  // subtree skips.  Returns a typed result; offset 0 is a valid grant.
  alloc_result allocate(std::uint64_t size, std::uint64_t hint) {
    typename Access::fn_guard fg(step_fn::alloc);
    if (size > cfg_.max_size) return {alloc_status::too_large, 0, 0, 0};
    const std::uint32_t level = target_level(size, cfg_);
    const auto [first, last] = level_nodes(level);
    const std::uint64_t width = last - first + 1;

    std::uint64_t i = first + (hint % width);
    std::uint64_t seg_end = last;
    bool wrapped = (i == first);
    const std::uint64_t wrap_start = i;
    for (;;) {
      while (i <= seg_end) {
        const std::uint64_t w =
            Access::load(word(i), std::memory_order_relaxed, step_site::scan_load,
                         step_space::tree_word, i);
        if (!is_free(w)) {
          ++i;
          continue;
        }
        const std::uint64_t blocker = try_acquire(i);
        if (blocker == 0) {
          const std::uint64_t off = offset_of(i, cfg_);
          const std::uint64_t slot = (off - cfg_.base_offset) / cfg_.min_size;
          if (shadow_) claim_shadow(slot, off);
          Access::store(index_[slot], i, std::memory_order_release,
                        step_site::index_store, step_space::index_slot, slot);
          counters_.inc(counter_set::allocs);
          return {alloc_status::ok, off, i, size_of(i, cfg_)};
        }
        counters_.inc(counter_set::alloc_restart);
        i = skip_subtree(i, blocker);
      }
      if (wrapped) break;
      wrapped = true;
      i = first;
      seg_end = wrap_start - 1;
    }
    counters_.inc(counter_set::exhausted);
    return {alloc_status::exhausted, 0, 0, 0};
  }

  free_status release(std::uint64_t offset) {
    typename Access::fn_guard fg(step_fn::release);
    const std::uint64_t slot = index_slot(offset, cfg_);
    if (slot == invalid_slot) return free_status::invalid_address;
    const std::uint64_t n =
        Access::load(index_[slot], std::memory_order_acquire, step_site::index_load,
                     step_space::index_slot, slot);
    if (n == 0 || n > cfg_.node_count() || offset_of(n, cfg_) != offset)
      return free_status::invalid_address;
    if (shadow_) release_shadow(slot, offset);
    free_node(n, cfg_.max_level);
    counters_.inc(counter_set::frees);
    return free_status::ok;
  }

  // Status words indexed by node (element 0 unused), read without
  // synchronization beyond per-word atomicity.  Exact only at quiescence.
  std::vector<std::uint64_t> snapshot() const {
    std::vector<std::uint64_t> out(cfg_.node_count() + 1, 0);
    for (std::uint64_t n = 1; n <= cfg_.node_count(); ++n)
      out[n] = word(n).load(std::memory_order_acquire);
    return out;
  }

 private:
#ifdef NBUDDY_PADDED_TREE
  static constexpr std::uint64_t word_stride = 8;  // one cache line per node
#else
  static constexpr std::uint64_t word_stride = 1;
#endif

  std::atomic<std::uint64_t>& word(std::uint64_t n) { return tree_[n * word_stride]; }
  const std::atomic<std::uint64_t>& word(std::uint64_t n) const {
    return tree_[n * word_stride];
  }

  // Claim node n and mark the path above it.  Returns 0 on success or the
  // node that blocked the climb; the claim is already reverted by then.
  std::uint64_t try_acquire(std::uint64_t n) {
    typename Access::fn_guard fg(step_fn::try_alloc);
    std::uint64_t expected = 0;
    counters_.inc(counter_set::occupy_cas);
    if (!Access::cas(word(n), expected, busy_mask, step_site::occupy_cas,
                     step_space::tree_word, n)) {
      counters_.inc(counter_set::occupy_fail);
      return n;
    }
    std::uint64_t child = n;
    std::uint64_t cur = n >> 1;
    while (level_of(child) > cfg_.max_level) {
      std::uint64_t v = Access::load(word(cur), std::memory_order_acquire,
                                     step_site::climb_load, step_space::tree_word, cur);
      for (;;) {
        if (v & occ) {
          free_node(n, level_of(child));
          return cur;
        }
        const std::uint64_t nv = mark(clean_coal(v, child), child);
        counters_.inc(counter_set::climb_cas);
        if (Access::cas(word(cur), v, nv, step_site::climb_cas, step_space::tree_word,
                        cur))
          break;
        counters_.inc(counter_set::climb_retry);  // v now holds the fresh value
      }
      child = cur;
      cur >>= 1;
    }
    return 0;
  }

  // Release node n, clearing path marks up to (and including) the level
  // upper_level.  Also serves as the revert path for a blocked climb, with
  // upper_level naming the deepest level the climb had marked.
  void free_node(std::uint64_t n, std::uint32_t upper_level) {
    typename Access::fn_guard fg(step_fn::free_node);
    // Pass 1: flag the release along the path so concurrent releases of a
    // buddy subtree know a coalescing partner is in flight.  Stop early if
    // the buddy side is occupied with no release pending there; nothing
    // above can coalesce in that case.
    std::uint64_t runner = n;
    std::uint64_t cur = n >> 1;
    while (level_of(runner) > upper_level) {
      const std::uint64_t or_val = coal_left >> side(runner);
      std::uint64_t v = Access::load(word(cur), std::memory_order_acquire,
                                     step_site::coal_load, step_space::tree_word, cur);
      for (;;) {
        counters_.inc(counter_set::coal_cas);
        if (Access::cas(word(cur), v, v | or_val, step_site::coal_cas,
                        step_space::tree_word, cur))
          break;
        counters_.inc(counter_set::coal_retry);
      }
      if (is_occ_buddy(v, runner) && !is_coal_buddy(v, runner)) break;
      runner = cur;
      cur >>= 1;
    }
    // Pass 2: the node itself becomes grantable here.
    Access::store(word(n), 0, std::memory_order_release, step_site::node_reset_store,
                  step_space::tree_word, n);
    // Pass 3: clear the side bits our allocation had set.
    if (level_of(n) != upper_level) unmark_path(n, upper_level);
  }

  void unmark_path(std::uint64_t n, std::uint32_t upper_level) {
    typename Access::fn_guard fg(step_fn::unmark);
    std::uint64_t child = n;
    std::uint64_t cur = n >> 1;
    for (;;) {
      std::uint64_t v = Access::load(word(cur), std::memory_order_acquire,
                                     step_site::unmark_load, step_space::tree_word, cur);
      std::uint64_t nv;
      for (;;) {
        // Our coalescing flag gone means a competing allocation took over
        // this path; its marks are live, leave everything to it.
        if (!is_coal(v, child)) return;
        nv = unmark(v, child);
        counters_.inc(counter_set::unmark_cas);
        if (Access::cas(word(cur), v, nv, step_site::unmark_cas, step_space::tree_word,
                        cur))
          break;
        counters_.inc(counter_set::unmark_retry);
      }
      if (level_of(cur) <= upper_level || is_occ_buddy(nv, child)) return;
      child = cur;
      cur >>= 1;
    }
  }

  void claim_shadow(std::uint64_t slot, std::uint64_t off) {
    if (shadow_[slot].exchange(1, std::memory_order_acq_rel) != 0) {
      std::fprintf(stderr, "nbuddy: double grant of offset %llu\n",
                   static_cast<unsigned long long>(off));
      std::abort();
    }
  }

  void release_shadow(std::uint64_t slot, std::uint64_t off) {
    if (shadow_[slot].exchange(0, std::memory_order_acq_rel) != 1) {
      std::fprintf(stderr, "nbuddy: release of non-live offset %llu\n",
                   static_cast<unsigned long long>(off));
      std::abort();
    }
  }

  tree_config cfg_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> tree_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> index_;
  std::unique_ptr<std::atomic<std::uint8_t>[]> shadow_;
  counter_set counters_;
};

}  // namespace nbuddy
