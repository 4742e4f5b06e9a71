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
#include "nbuddy/packed_layout.hpp"
#include "nbuddy/stats.hpp"
#include "nbuddy/status_bits.hpp"

namespace nbuddy {

// Lock-free buddy allocator over the packed tile layout: one CAS moves a
// path walk four levels at a time.
//
// Same protocol as tree_allocator, transposed onto tiles.  Claiming node n
// CASes its covered slots from all-zero to busy in one step; n's in-tile
// ancestors need no write because their status is derived from the cover.
// The climb then spends one CAS per tile above, at the slot where the path
// enters the tile, after scanning the derived statuses along the in-tile
// path for an occupied ancestor.  Release mirrors this shape: one marker
// CAS per tile on the way up, one reset CAS for the cover, one side-bit
// clearing CAS per tile on the way up again.  The per-level checks of the
// flat walk are simulated in-tile against the word each CAS replaced or
// installed, which is exact: that word is an atomic snapshot of all four
// levels at the step's linearization point.
template <class Access = direct_access>
class packed_allocator {
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

  explicit packed_allocator(const tree_config& cfg, options opt = {})
      : cfg_(cfg),
        layout_(cfg),
        tiles_(new std::atomic<std::uint64_t>[layout_.tiles() * word_stride]()),
        index_(new std::atomic<std::uint64_t>[cfg.leaf_count()]()),
        shadow_(opt.shadow_live_set ? new std::atomic<std::uint8_t>[cfg.leaf_count()]()
                                    : nullptr) {}

  const tree_config& config() const { return cfg_; }
  const packed_layout& layout() const { return layout_; }
  counter_totals counters() const { return counters_.totals(); }

  alloc_result allocate(std::uint64_t size) { return allocate(size, thread_ordinal()); }

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
        const tile_place tp = layout_.place(i);
        const std::uint64_t w =
            Access::load(word(tp.tile), std::memory_order_relaxed, step_site::scan_load,
                         step_space::tree_word, tp.tile);
        if (w & pos_mask_table[tp.pos].busy) {
          ++i;
          continue;
        }
        const std::uint64_t blocker = try_acquire(i, tp, w);
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

  // Raw tile words, read without synchronization beyond per-word atomicity.
  // Exact only at quiescence.
  std::vector<std::uint64_t> snapshot_tiles() const {
    std::vector<std::uint64_t> out(layout_.tiles(), 0);
    for (std::uint64_t t = 0; t < layout_.tiles(); ++t)
      out[t] = word(t).load(std::memory_order_acquire);
    return out;
  }

  // Per-node statuses derived from the tiles, shaped like the flat
  // allocator's snapshot (element 0 unused) for shared diffing.
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
#ifdef NBUDDY_PADDED_TREE
  static constexpr std::uint64_t word_stride = 8;  // one cache line per tile
#else
  static constexpr std::uint64_t word_stride = 1;
#endif

  std::atomic<std::uint64_t>& word(std::uint64_t t) { return tiles_[t * word_stride]; }
  const std::atomic<std::uint64_t>& word(std::uint64_t t) const {
    return tiles_[t * word_stride];
  }

  // Claim node n and mark the path above it.  Returns 0 on success or the
  // node that blocked the climb; the claim is already reverted by then.
  // w is the tile word the scan just read.
  std::uint64_t try_acquire(std::uint64_t n, const tile_place& tp, std::uint64_t w) {
    typename Access::fn_guard fg(step_fn::try_alloc);
    const pos_masks& pm = pos_mask_table[tp.pos];
    for (;;) {
      counters_.inc(counter_set::occupy_cas);
      if (w & pm.field) {
        counters_.inc(counter_set::occupy_fail);
        // Blame the widest fully-occupied in-tile ancestor when there is
        // one, so the scan skips its whole subtree instead of failing the
        // same way on every sibling.
        for (std::uint32_t k = tp.row;; --k) {
          const std::uint64_t m_occ = pos_mask_table[tp.pos >> k].occ_all;
          if ((w & m_occ) == m_occ) return n >> k;
          if (k == 0) break;
        }
        return n;
      }
      if (Access::cas(word(tp.tile), w, w | pm.busy_pat, step_site::occupy_cas,
                      step_space::tree_word, tp.tile))
        break;
      counters_.inc(counter_set::occupy_fail);
    }

    // One CAS per tile above, at the slot where the path enters it.  The
    // claim already proves n's in-tile ancestors are not fully occupied:
    // their covers contain n's, which was all-zero.
    std::uint64_t r = n >> tp.row;
    while (level_of(r) > cfg_.max_level) {
      const std::uint64_t s = r >> 1;
      const tile_place sp = layout_.place(s);
      std::uint64_t v = Access::load(word(sp.tile), std::memory_order_acquire,
                                     step_site::climb_load, step_space::tree_word,
                                     sp.tile);
      for (;;) {
        const std::uint64_t blocker = path_occ(v, sp.pos, s);
        if (blocker != 0) {
          free_node(n, level_of(r));
          return blocker;
        }
        const std::uint64_t nv =
            set_slot(v, sp.pos, mark(clean_coal(get_slot(v, sp.pos), r), r));
        counters_.inc(counter_set::climb_cas);
        if (Access::cas(word(sp.tile), v, nv, step_site::climb_cas,
                        step_space::tree_word, sp.tile))
          break;
        counters_.inc(counter_set::climb_retry);  // v now holds the fresh value
      }
      r = s >> 3;
    }
    return 0;
  }

  // Lowest node on the in-tile path from position p upward whose derived
  // status shows fully occupied, or 0.  Nodes above max_level never hold a
  // grant, so the walk stops there.
  std::uint64_t path_occ(std::uint64_t w, std::uint32_t p, std::uint64_t m) const {
    for (;;) {
      if (level_of(m) < cfg_.max_level) return 0;
      if (derive_status(w, p) & occ) return m;
      if (p == 1) return 0;
      p >>= 1;
      m >>= 1;
    }
  }

  // Release node n, clearing path marks up to (and including) level
  // upper_level.  Also the revert path for a blocked climb, with
  // upper_level naming the root level of the last tile the climb marked.
  void free_node(std::uint64_t n, std::uint32_t upper_level) {
    typename Access::fn_guard fg(step_fn::free_node);
    const tile_place tp = layout_.place(n);
    const pos_masks& pm = pos_mask_table[tp.pos];
    const std::uint64_t r0 = n >> tp.row;

    // Pass 1: flag the release along the path so concurrent releases of a
    // buddy subtree know a coalescing partner is in flight.  One marker bit
    // on n's cover stands for the whole in-tile stretch; each tile above
    // takes the side coalescing bit at its entry slot.  The flat walk's
    // early stop (buddy occupied, no release pending there) is evaluated
    // against the word each CAS replaced.
    bool cont = level_of(n) > upper_level;
    if (cont && tp.row != 0) {
      std::uint64_t v = Access::load(word(tp.tile), std::memory_order_acquire,
                                     step_site::coal_load, step_space::tree_word,
                                     tp.tile);
      for (;;) {
        counters_.inc(counter_set::coal_cas);
        if (Access::cas(word(tp.tile), v, v | pm.marker, step_site::coal_cas,
                        step_space::tree_word, tp.tile))
          break;
        counters_.inc(counter_set::coal_retry);
      }
      cont = coal_walk(v, tp.pos >> 1, n, tp.pos >> tp.row, upper_level);
    }
    std::uint64_t r = r0;
    while (cont && level_of(r) > upper_level) {
      const std::uint64_t s = r >> 1;
      const tile_place sp = layout_.place(s);
      std::uint64_t v = Access::load(word(sp.tile), std::memory_order_acquire,
                                     step_site::coal_load, step_space::tree_word,
                                     sp.tile);
      for (;;) {
        const std::uint64_t nv =
            set_slot(v, sp.pos, get_slot(v, sp.pos) | (coal_left >> side(r)));
        counters_.inc(counter_set::coal_cas);
        if (Access::cas(word(sp.tile), v, nv, step_site::coal_cas,
                        step_space::tree_word, sp.tile))
          break;
        counters_.inc(counter_set::coal_retry);
      }
      cont = coal_walk(v, sp.pos, r, 1, upper_level);
      r = s >> 3;
    }

    // Pass 2: the covered slots go back to zero in one step, which also
    // retires the in-tile marker and this tile's share of pass 3.
    std::uint64_t v = Access::load(word(tp.tile), std::memory_order_acquire,
                                   step_site::node_reset_store, step_space::tree_word,
                                   tp.tile);
    for (;;) {
      counters_.inc(counter_set::reset_cas);
      if (Access::cas(word(tp.tile), v, v & ~pm.field, step_site::node_reset_store,
                      step_space::tree_word, tp.tile))
        break;
      counters_.inc(counter_set::reset_retry);
    }

    // Pass 3: clear the side bits our allocation had set.
    if (level_of(n) != upper_level) unmark_path(n, tp, v & ~pm.field, upper_level);
  }

  // Simulate pass-1 early-stop checks along the in-tile path, starting at
  // the step that examines child ch's buddy at position p, against the
  // statuses derived from w.  anchor is the tile root's position.  Returns
  // whether the walk leaves the tile.
  bool coal_walk(std::uint64_t w, std::uint32_t p, std::uint64_t ch,
                 std::uint32_t anchor, std::uint32_t upper_level) const {
    for (;;) {
      if (level_of(ch) <= upper_level) return false;
      const std::uint32_t st = derive_status(w, p);
      if (is_occ_buddy(st, ch) && !is_coal_buddy(st, ch)) return false;
      if (p == anchor) return true;
      p >>= 1;
      ch >>= 1;
    }
  }

  void unmark_path(std::uint64_t n, const tile_place& tp, std::uint64_t w0,
                   std::uint32_t upper_level) {
    typename Access::fn_guard fg(step_fn::unmark);
    // The reset performed this tile's share of the walk; its result decides
    // whether the walk continues above the tile.
    if (tp.row != 0 &&
        !unmark_walk(w0, tp.pos >> 1, n, tp.pos >> tp.row, upper_level))
      return;
    std::uint64_t r = n >> tp.row;
    while (level_of(r) > upper_level) {
      const std::uint64_t s = r >> 1;
      const tile_place sp = layout_.place(s);
      std::uint64_t v = Access::load(word(sp.tile), std::memory_order_acquire,
                                     step_site::unmark_load, step_space::tree_word,
                                     sp.tile);
      std::uint64_t nv;
      for (;;) {
        const std::uint32_t bits = get_slot(v, sp.pos);
        // Our coalescing flag gone means a competing allocation took over
        // this path; its marks are live, leave everything to it.
        if (!is_coal(bits, r)) return;
        nv = set_slot(v, sp.pos, unmark(bits, r));
        counters_.inc(counter_set::unmark_cas);
        if (Access::cas(word(sp.tile), v, nv, step_site::unmark_cas,
                        step_space::tree_word, sp.tile))
          break;
        counters_.inc(counter_set::unmark_retry);
      }
      if (!unmark_walk(nv, sp.pos, r, 1, upper_level)) return;
      r = s >> 3;
    }
  }

  // Simulate pass-3 stop checks along the in-tile path, starting after the
  // step that cleared child ch's side bits at position p, against the
  // statuses derived from w.  Returns whether the walk leaves the tile.
  bool unmark_walk(std::uint64_t w, std::uint32_t p, std::uint64_t ch,
                   std::uint32_t anchor, std::uint32_t upper_level) const {
    for (;;) {
      const std::uint32_t st = derive_status(w, p);
      if (level_of(ch) - 1 <= upper_level || is_occ_buddy(st, ch)) return false;
      if (p == anchor) return true;
      p >>= 1;
      ch >>= 1;
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
  packed_layout layout_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> tiles_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> index_;
  std::unique_ptr<std::atomic<std::uint8_t>[]> shadow_;
  counter_set counters_;
};

}  // namespace nbuddy
