#pragma once

#include <bit>
#include <cstdint>
#include <utility>

#include "nbuddy/config.hpp"

namespace nbuddy {

// Node index math for the implicit binary tree.  Nodes are 1-indexed in
// heap order: root is 1, children of n are 2n and 2n+1, the buddy of n is
// n^1.  Everything here is shift/mask arithmetic on 64-bit values.

inline constexpr std::uint32_t level_of(std::uint64_t n) {
  return static_cast<std::uint32_t>(std::bit_width(n) - 1);
}

inline constexpr std::uint64_t buddy_of(std::uint64_t n) { return n ^ 1; }

inline constexpr std::uint64_t parent_of(std::uint64_t n) { return n >> 1; }

// Bytes covered by a node: the total span halves at each level.
inline constexpr std::uint64_t size_of(std::uint64_t n, const tree_config& cfg) {
  return cfg.total_size >> level_of(n);
}

// Absolute offset of the first byte a node covers.
inline constexpr std::uint64_t offset_of(std::uint64_t n, const tree_config& cfg) {
  const std::uint32_t level = level_of(n);
  return cfg.base_offset + (n - (std::uint64_t{1} << level)) * (cfg.total_size >> level);
}

// Level whose nodes serve a request of `size` bytes.  Sub-minimum requests
// (including size 0) round up to min_size, i.e. clamp to the leaf level.
inline constexpr std::uint32_t target_level(std::uint64_t size, const tree_config& cfg) {
  if (size <= cfg.min_size) return cfg.depth;
  const std::uint32_t level =
      static_cast<std::uint32_t>(std::bit_width(cfg.total_size / size) - 1);
  return level < cfg.depth ? level : cfg.depth;
}

// Inclusive [first, last] node index range of one level.
inline constexpr std::pair<std::uint64_t, std::uint64_t> level_nodes(std::uint32_t level) {
  const std::uint64_t first = std::uint64_t{1} << level;
  return {first, (first << 1) - 1};
}

// Index of the min_size-granular slot an offset falls in, or UINT64_MAX if
// the offset is outside the region or not min_size aligned.
inline constexpr std::uint64_t invalid_slot = ~std::uint64_t{0};

inline constexpr std::uint64_t index_slot(std::uint64_t offset, const tree_config& cfg) {
  if (offset < cfg.base_offset) return invalid_slot;
  const std::uint64_t rel = offset - cfg.base_offset;
  if (rel >= cfg.total_size || (rel & (cfg.min_size - 1)) != 0) return invalid_slot;
  return rel / cfg.min_size;
}

// First index at level_of(i) past the subtree of `blocker`, an ancestor of
// (or equal to) i whose occupancy made the whole subtree unusable.  May
// exceed the level's last index; the scan then wraps or terminates.
inline constexpr std::uint64_t skip_subtree(std::uint64_t i, std::uint64_t blocker) {
  return (blocker + 1) << (level_of(i) - level_of(blocker));
}

}  // namespace nbuddy
