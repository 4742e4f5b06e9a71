#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "nbuddy/config.hpp"
#include "nbuddy/geometry.hpp"
#include "nbuddy/status_bits.hpp"

namespace nbuddy {

// Packed layout: four consecutive tree levels fold into one 64-bit word
// (a "tile"). Only the tile's deepest row is stored, eight 5-bit slots in
// bits [0, 40); the three rows above it are never written and their status
// is derived from the slots they cover. One CAS on the word therefore
// updates four levels of the tree at once.
//
// Tiles are arranged in bands of four levels. Band b holds the subtrees
// rooted at tree level 4b. Every band is full except possibly the last:
// when depth mod 4 < 3 the bottom band's subtrees are shallow, and their
// nodes anchor at the slot row so that real leaves still land on stored
// slots (positions above the anchor row stay permanently zero).

inline constexpr std::uint32_t tile_levels = 4;
inline constexpr std::uint32_t slots_per_tile = 8;
inline constexpr std::uint32_t slot_row = 8;  // heap position of the stored row

constexpr std::uint32_t slot_shift(std::uint32_t pos) {
  return 5 * (pos - slot_row);
}

constexpr std::uint64_t slot_field(std::uint32_t pos) {
  return std::uint64_t{status_mask} << slot_shift(pos);
}

constexpr std::uint32_t get_slot(std::uint64_t w, std::uint32_t pos) {
  return static_cast<std::uint32_t>(w >> slot_shift(pos)) & status_mask;
}

constexpr std::uint64_t set_slot(std::uint64_t w, std::uint32_t pos,
                                 std::uint32_t bits) {
  return (w & ~slot_field(pos)) | (std::uint64_t{bits} << slot_shift(pos));
}

// Stored-row span covered by an in-tile position. Position p at in-tile
// position-depth d covers slots [p*2^(3-d), (p+1)*2^(3-d) - 1].
constexpr std::pair<std::uint32_t, std::uint32_t> cover_of(std::uint32_t pos) {
  const std::uint32_t d = static_cast<std::uint32_t>(level_of(pos));
  return {pos << (3 - d), ((pos + 1) << (3 - d)) - 1};
}

// Same span expressed through the node's tree level: a node of a full tile
// at tree level d sits at in-tile row d mod 4.
constexpr std::pair<std::uint32_t, std::uint32_t> bunch_leaf_range(
    std::uint32_t pos, std::uint32_t tree_level) {
  const std::uint32_t j = tree_level % tile_levels;
  return {pos << (3 - j), ((pos + 1) << (3 - j)) - 1};
}

// Per-position bit masks over the tile word, precomputed so derived checks
// cost one AND each.
struct pos_masks {
  std::uint64_t field = 0;    // full 5-bit field of every covered slot
  std::uint64_t occ_all = 0;  // whole-node-occupied bit of every covered slot
  std::uint64_t busy = 0;     // occupancy bits (owner plus side) of the cover
  std::uint64_t coal = 0;     // coalescing bits of the cover
  std::uint64_t busy_pat = 0; // value installed when occupying the position
  std::uint64_t marker = 0;   // release marker: coal_left on the first slot
};

constexpr std::array<pos_masks, 16> make_pos_masks() {
  std::array<pos_masks, 16> m{};
  for (std::uint32_t p = 1; p < 16; ++p) {
    const auto [lo, hi] = cover_of(p);
    for (std::uint32_t s = lo; s <= hi; ++s) {
      m[p].field |= slot_field(s);
      m[p].occ_all |= std::uint64_t{occ} << slot_shift(s);
      m[p].busy |= std::uint64_t{busy_mask} << slot_shift(s);
      m[p].coal |= std::uint64_t{coal_left | coal_right} << slot_shift(s);
      m[p].busy_pat |= std::uint64_t{busy_mask} << slot_shift(s);
    }
    m[p].marker = std::uint64_t{coal_left} << slot_shift(lo);
  }
  return m;
}

inline constexpr std::array<pos_masks, 16> pos_mask_table = make_pos_masks();

// Reconstruct the 5-bit status of any in-tile position. A stored-row
// position returns its slot verbatim. A derived position is occupied iff
// every covered slot is occupied, carries a side occupancy bit iff the
// matching half of its cover holds any occupancy bit, and a side
// coalescing bit iff that half holds any coalescing bit.
constexpr std::uint32_t derive_status(std::uint64_t w, std::uint32_t pos) {
  if (pos >= slot_row) return get_slot(w, pos);
  std::uint32_t st = 0;
  const pos_masks& l = pos_mask_table[2 * pos];
  const pos_masks& r = pos_mask_table[2 * pos + 1];
  const std::uint64_t all = l.occ_all | r.occ_all;
  if ((w & all) == all) st |= occ;
  if (w & l.busy) st |= occ_left;
  if (w & r.busy) st |= occ_right;
  if (w & l.coal) st |= coal_left;
  if (w & r.coal) st |= coal_right;
  return st;
}

struct tile_place {
  std::uint64_t tile;  // index into the tile array
  std::uint32_t pos;   // heap position inside the tile, 1..15
  std::uint32_t row;   // node's depth below its tile root, 0..3
};

class packed_layout {
 public:
  explicit packed_layout(const tree_config& cfg) : cfg_(cfg) {
    n_bands_ = cfg.depth / tile_levels + 1;
    bottom_rows_ = cfg.depth % tile_levels;
    std::uint64_t base = 0;
    for (std::uint32_t b = 0; b < n_bands_; ++b) {
      band_base_[b] = base;
      base += std::uint64_t{1} << (tile_levels * b);
    }
    n_tiles_ = base;
  }

  const tree_config& config() const { return cfg_; }
  std::uint64_t tiles() const { return n_tiles_; }
  std::uint32_t bands() const { return n_bands_; }
  std::uint32_t bottom_rows() const { return bottom_rows_; }
  std::uint64_t band_base(std::uint32_t band) const { return band_base_[band]; }

  // Anchor position of a tile root. Full tiles anchor at position 1; the
  // ragged bottom band anchors deeper so its leaves land on stored slots.
  std::uint32_t band_anchor(std::uint32_t band) const {
    return band + 1 == n_bands_ ? 1u << (3 - bottom_rows_) : 1u;
  }

  tile_place place(std::uint64_t n) const {
    const std::uint32_t lvl = level_of(n);
    const std::uint32_t band = lvl / tile_levels;
    const std::uint32_t row = lvl % tile_levels;
    const std::uint64_t root = n >> row;
    const std::uint64_t first_root = std::uint64_t{1} << (band * tile_levels);
    const std::uint32_t pos =
        (band_anchor(band) << row) + static_cast<std::uint32_t>(n - (root << row));
    return {band_base_[band] + (root - first_root), pos, row};
  }

  // Root node of the tile containing n.
  static std::uint64_t tile_root(std::uint64_t n) {
    return n >> (level_of(n) % tile_levels);
  }

 private:
  tree_config cfg_;
  std::uint32_t n_bands_ = 0;
  std::uint32_t bottom_rows_ = 0;
  std::uint64_t n_tiles_ = 0;
  std::uint64_t band_base_[9] = {};
};

}  // namespace nbuddy
