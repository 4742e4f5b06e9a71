#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <thread>
#include <vector>

#include "nbuddy/config.hpp"
#include "nbuddy/geometry.hpp"
#include "nbuddy/packed_layout.hpp"
#include "nbuddy/stats.hpp"
#include "nbuddy/status_bits.hpp"

namespace nbuddy {

// Plain test-and-set spin-lock with capped exponential pause backoff.  It
// never yields to the scheduler: this is the baseline whose behavior under
// preemption the non-blocking design exists to avoid, so handing the
// scheduler a cooperative lock would measure something else.
class spin_lock {
 public:
  bool try_lock() {
    return !flag_.load(std::memory_order_relaxed) &&
           flag_.exchange(1, std::memory_order_acquire) == 0;
  }

  // Returns the number of rounds that found the lock held.
  std::uint64_t lock() {
    std::uint64_t waited = 0;
    for (std::uint32_t round = 0; !try_lock(); ++round, ++waited) {
      const std::uint32_t exp = round < 10 ? round : 10;
      for (std::uint32_t i = 0; i < (1u << exp); ++i) pause();
    }
    return waited;
  }

  void unlock() { flag_.store(0, std::memory_order_release); }

 private:
  static void pause() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_ia32_pause();
#else
    std::atomic_signal_fence(std::memory_order_seq_cst);
#endif
  }

  std::atomic<std::uint32_t> flag_{0};
};

namespace detail {

struct locked_scope {
  locked_scope(spin_lock& l, counter_set& c) : lk(l) {
    const std::uint64_t spins = lk.lock();
    if (spins) c.inc(counter_set::lock_spin, spins);
  }
  ~locked_scope() { lk.unlock(); }
  locked_scope(const locked_scope&) = delete;
  locked_scope& operator=(const locked_scope&) = delete;
  spin_lock& lk;
};

}  // namespace detail

// Blocking comparator: the flat status-word tree behind one global
// spin-lock.  Inside the critical section the release walk can settle the
// side bits exactly, so the coalescing bits stay zero and the quiescent
// tree matches the non-blocking variant's word for word.
class locked_tree_allocator {
 public:
  struct options {
#ifdef NDEBUG
    bool shadow_live_set = false;
#else
    bool shadow_live_set = true;
#endif
  };

  explicit locked_tree_allocator(const tree_config& cfg)
      : locked_tree_allocator(cfg, options{}) {}

  locked_tree_allocator(const tree_config& cfg, options opt)
      : cfg_(cfg),
        tree_(new std::uint64_t[cfg.node_count() + 1]()),
        index_(new std::uint64_t[cfg.leaf_count()]()),
        shadow_(opt.shadow_live_set ? new std::uint8_t[cfg.leaf_count()]()
                                    : nullptr) {}

  const tree_config& config() const { return cfg_; }
  counter_totals counters() const { return counters_.totals(); }

  alloc_result allocate(std::uint64_t size) { return allocate(size, thread_ordinal()); }

  alloc_result allocate(std::uint64_t size, std::uint64_t hint) {
    if (size > cfg_.max_size) return {alloc_status::too_large, 0, 0, 0};
    detail::locked_scope guard(lock_, counters_);
    const std::uint32_t level = target_level(size, cfg_);
    const auto [first, last] = level_nodes(level);
    const std::uint64_t width = last - first + 1;
    std::uint64_t i = first + (hint % width);
    std::uint64_t seg_end = last;
    bool wrapped = (i == first);
    const std::uint64_t wrap_start = i;
    for (;;) {
      while (i <= seg_end) {
        const std::uint64_t blocker = available(i);
        if (blocker == 0) {
          commit(i);
          const std::uint64_t off = offset_of(i, cfg_);
          const std::uint64_t slot = (off - cfg_.base_offset) / cfg_.min_size;
          if (shadow_) claim_shadow(slot, off);
          index_[slot] = i;
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
    const std::uint64_t slot = index_slot(offset, cfg_);
    if (slot == invalid_slot) return free_status::invalid_address;
    detail::locked_scope guard(lock_, counters_);
    const std::uint64_t n = index_[slot];
    if (n == 0 || n > cfg_.node_count() || offset_of(n, cfg_) != offset)
      return free_status::invalid_address;
    if (shadow_) release_shadow(slot, offset);
    tree_[n] = 0;
    std::uint64_t child = n;
    for (std::uint64_t a = n >> 1; level_of(child) > cfg_.max_level;
         child = a, a >>= 1) {
      if (tree_[child] & busy_mask) break;  // still something under child
      tree_[a] &= ~(std::uint64_t{occ_left} >> side(child));
    }
    counters_.inc(counter_set::frees);
    return free_status::ok;
  }

  std::vector<std::uint64_t> snapshot() const {
    detail::locked_scope guard(lock_, counters_);
    return std::vector<std::uint64_t>(tree_.get(), tree_.get() + cfg_.node_count() + 1);
  }

 private:
  // 0 when n is grantable, else the node whose state blocks it.
  std::uint64_t available(std::uint64_t n) const {
    if (tree_[n] != 0) return n;
    for (std::uint64_t a = n >> 1; a >= 1 && level_of(a) >= cfg_.max_level; a >>= 1)
      if (tree_[a] & occ) return a;
    return 0;
  }

  void commit(std::uint64_t n) {
    tree_[n] = busy_mask;
    std::uint64_t child = n;
    for (std::uint64_t a = n >> 1; level_of(child) > cfg_.max_level;
         child = a, a >>= 1)
      tree_[a] |= std::uint64_t{occ_left} >> side(child);
  }

  void claim_shadow(std::uint64_t slot, std::uint64_t off) {
    if (shadow_[slot] != 0) {
      std::fprintf(stderr, "nbuddy: double grant of offset %llu\n",
                   static_cast<unsigned long long>(off));
      std::abort();
    }
    shadow_[slot] = 1;
  }

  void release_shadow(std::uint64_t slot, std::uint64_t off) {
    if (shadow_[slot] != 1) {
      std::fprintf(stderr, "nbuddy: release of non-live offset %llu\n",
                   static_cast<unsigned long long>(off));
      std::abort();
    }
    shadow_[slot] = 0;
  }

  tree_config cfg_;
  std::unique_ptr<std::uint64_t[]> tree_;
  std::unique_ptr<std::uint64_t[]> index_;
  std::unique_ptr<std::uint8_t[]> shadow_;
  mutable spin_lock lock_;
  mutable counter_set counters_;
};

// Blocking comparator over the packed tile layout.  Same critical-section
// logic as locked_tree_allocator, with the per-level checks read off the
// derived statuses and the physical writes landing on covers and entry
// slots, so the quiescent tiles match the non-blocking packed variant's.
class locked_packed_allocator {
 public:
  struct options {
#ifdef NDEBUG
    bool shadow_live_set = false;
#else
    bool shadow_live_set = true;
#endif
  };

  explicit locked_packed_allocator(const tree_config& cfg)
      : locked_packed_allocator(cfg, options{}) {}

  locked_packed_allocator(const tree_config& cfg, options opt)
      : cfg_(cfg),
        layout_(cfg),
        tiles_(new std::uint64_t[layout_.tiles()]()),
        index_(new std::uint64_t[cfg.leaf_count()]()),
        shadow_(opt.shadow_live_set ? new std::uint8_t[cfg.leaf_count()]()
                                    : nullptr) {}

  const tree_config& config() const { return cfg_; }
  const packed_layout& layout() const { return layout_; }
  counter_totals counters() const { return counters_.totals(); }

  alloc_result allocate(std::uint64_t size) { return allocate(size, thread_ordinal()); }

  alloc_result allocate(std::uint64_t size, std::uint64_t hint) {
    if (size > cfg_.max_size) return {alloc_status::too_large, 0, 0, 0};
    detail::locked_scope guard(lock_, counters_);
    const std::uint32_t level = target_level(size, cfg_);
    const auto [first, last] = level_nodes(level);
    const std::uint64_t width = last - first + 1;
    std::uint64_t i = first + (hint % width);
    std::uint64_t seg_end = last;
    bool wrapped = (i == first);
    const std::uint64_t wrap_start = i;
    for (;;) {
      while (i <= seg_end) {
        const std::uint64_t blocker = available(i);
        if (blocker == 0) {
          commit(i);
          const std::uint64_t off = offset_of(i, cfg_);
          const std::uint64_t slot = (off - cfg_.base_offset) / cfg_.min_size;
          if (shadow_) claim_shadow(slot, off);
          index_[slot] = i;
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
    const std::uint64_t slot = index_slot(offset, cfg_);
    if (slot == invalid_slot) return free_status::invalid_address;
    detail::locked_scope guard(lock_, counters_);
    const std::uint64_t n = index_[slot];
    if (n == 0 || n > cfg_.node_count() || offset_of(n, cfg_) != offset)
      return free_status::invalid_address;
    if (shadow_) release_shadow(slot, offset);
    const tile_place tp = layout_.place(n);
    tiles_[tp.tile] &= ~pos_mask_table[tp.pos].field;
    for (std::uint64_t c = n; level_of(c) > cfg_.max_level; c >>= 1) {
      const tile_place cp = layout_.place(c);
      if (tiles_[cp.tile] & pos_mask_table[cp.pos].busy) break;
      if (cp.row == 0) {
        const tile_place sp = layout_.place(c >> 1);
        tiles_[sp.tile] = set_slot(
            tiles_[sp.tile], sp.pos,
            get_slot(tiles_[sp.tile], sp.pos) & ~(occ_left >> side(c)));
      }
    }
    counters_.inc(counter_set::frees);
    return free_status::ok;
  }

  std::vector<std::uint64_t> snapshot_tiles() const {
    detail::locked_scope guard(lock_, counters_);
    return std::vector<std::uint64_t>(tiles_.get(), tiles_.get() + layout_.tiles());
  }

  std::vector<std::uint64_t> snapshot() const {
    const std::vector<std::uint64_t> tiles = snapshot_tiles();
    std::vector<std::uint64_t> out(cfg_.node_count() + 1, 0);
    for (std::uint64_t n = 1; n <= cfg_.node_count(); ++n) {
      const tile_place tp = layout_.place(n);
      out[n] = derive_status(tiles[tp.tile], tp.pos);
    }
    return out;
  }

 private:
  std::uint64_t available(std::uint64_t n) const {
    const tile_place tp = layout_.place(n);
    if (tiles_[tp.tile] & pos_mask_table[tp.pos].field) {
      for (std::uint32_t k = tp.row;; --k) {
        const std::uint64_t m_occ = pos_mask_table[tp.pos >> k].occ_all;
        if ((tiles_[tp.tile] & m_occ) == m_occ) return n >> k;
        if (k == 0) break;
      }
      return n;
    }
    std::uint64_t r = n >> tp.row;
    while (level_of(r) > cfg_.max_level) {
      const std::uint64_t s = r >> 1;
      const tile_place sp = layout_.place(s);
      const std::uint64_t w = tiles_[sp.tile];
      std::uint32_t p = sp.pos;
      for (std::uint64_t m = s;; p >>= 1, m >>= 1) {
        if (level_of(m) < cfg_.max_level) break;
        if (derive_status(w, p) & occ) return m;
        if (p == 1) break;
      }
      r = s >> 3;
    }
    return 0;
  }

  void commit(std::uint64_t n) {
    const tile_place tp = layout_.place(n);
    tiles_[tp.tile] |= pos_mask_table[tp.pos].busy_pat;
    for (std::uint64_t r = n >> tp.row; level_of(r) > cfg_.max_level; r >>= 4) {
      const tile_place sp = layout_.place(r >> 1);
      tiles_[sp.tile] = set_slot(
          tiles_[sp.tile], sp.pos,
          get_slot(tiles_[sp.tile], sp.pos) | (occ_left >> side(r)));
    }
  }

  void claim_shadow(std::uint64_t slot, std::uint64_t off) {
    if (shadow_[slot] != 0) {
      std::fprintf(stderr, "nbuddy: double grant of offset %llu\n",
                   static_cast<unsigned long long>(off));
      std::abort();
    }
    shadow_[slot] = 1;
  }

  void release_shadow(std::uint64_t slot, std::uint64_t off) {
    if (shadow_[slot] != 1) {
      std::fprintf(stderr, "nbuddy: release of non-live offset %llu\n",
                   static_cast<unsigned long long>(off));
      std::abort();
    }
    shadow_[slot] = 0;
  }

  tree_config cfg_;
  packed_layout layout_;
  std::unique_ptr<std::uint64_t[]> tiles_;
  std::unique_ptr<std::uint64_t[]> index_;
  std::unique_ptr<std::uint8_t[]> shadow_;
  mutable spin_lock lock_;
  mutable counter_set counters_;
};

}  // namespace nbuddy
