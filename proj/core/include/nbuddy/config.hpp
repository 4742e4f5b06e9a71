#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nbuddy {

// Geometry of one managed region.  The region is a power-of-two span of
// total_size bytes carved into a complete binary tree: the root (node 1)
// covers the whole span, each node's children cover its halves, and the
// leaves cover min_size bytes each.  depth is the leaf level, so the tree
// has depth+1 levels and 2^(depth+1)-1 nodes.
//
// max_size caps a single request; max_level is the level that serves it.
// Offsets handed out are absolute, i.e. they include base_offset.
struct tree_config {
  std::uint32_t depth = 0;
  std::uint64_t total_size = 0;
  std::uint64_t min_size = 0;
  std::uint64_t max_size = 0;
  std::uint32_t max_level = 0;
  std::uint64_t base_offset = 0;

  // All integer level math below assumes depth fits comfortably in 64-bit
  // shifts; 31 keeps node indices, slot counts and masks well clear of the
  // sign bit even at the deepest level.
  static constexpr std::uint32_t max_depth = 31;

  static tree_config create(std::uint64_t total_size, std::uint64_t min_size,
                            std::uint64_t max_size, std::uint64_t base_offset = 0) {
    auto pow2 = [](std::uint64_t v) { return v != 0 && std::has_single_bit(v); };
    if (!pow2(total_size) || !pow2(min_size) || !pow2(max_size))
      throw std::invalid_argument("tree_config: sizes must be nonzero powers of two");
    if (min_size > max_size || max_size > total_size)
      throw std::invalid_argument("tree_config: need min_size <= max_size <= total_size");
    const std::uint32_t depth =
        static_cast<std::uint32_t>(std::bit_width(total_size / min_size) - 1);
    if (depth < 1 || depth > max_depth)
      throw std::invalid_argument("tree_config: depth " + std::to_string(depth) +
                                  " outside [1, " + std::to_string(max_depth) + "]");
    tree_config cfg;
    cfg.depth = depth;
    cfg.total_size = total_size;
    cfg.min_size = min_size;
    cfg.max_size = max_size;
    cfg.max_level = static_cast<std::uint32_t>(std::bit_width(total_size / max_size) - 1);
    cfg.base_offset = base_offset;
    return cfg;
  }

  std::uint64_t node_count() const { return (std::uint64_t{2} << depth) - 1; }
  std::uint64_t leaf_count() const { return std::uint64_t{1} << depth; }
};

enum class alloc_status : std::uint8_t { ok, exhausted, too_large };

struct alloc_result {
  alloc_status status = alloc_status::exhausted;
  std::uint64_t offset = 0;  // absolute (includes base_offset); 0 is a valid grant
  std::uint64_t node = 0;    // tree node serving the grant
  std::uint64_t size = 0;    // granted bucket size, >= requested
  explicit operator bool() const { return status == alloc_status::ok; }
};

enum class free_status : std::uint8_t { ok, invalid_address };

}  // namespace nbuddy
