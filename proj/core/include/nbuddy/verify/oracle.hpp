#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "nbuddy/config.hpp"
#include "nbuddy/geometry.hpp"

namespace nbuddy::verify {

// Single-threaded reference buddy allocator used as ground truth.
//
// Deliberately shares no machinery with the concurrent allocators: state is
// an explicit free-block decomposition (one ordered set of node indices per
// level) plus a live map, and allocation works by split/merge on those sets
// rather than by status-bit arithmetic. Buddy free blocks are merged eagerly,
// which makes the decomposition a pure function of the live set, so oracle
// behaviour is canonical regardless of operation history.
//
// Grant policy matches the concurrent allocators observed in isolation: the
// first fully free node at the target level, scanning in index order from
// first_node + (hint % level_width) and wrapping once.
class sequential_oracle {
 public:
  explicit sequential_oracle(const tree_config& cfg);

  alloc_result allocate(std::uint64_t size, std::uint32_t hint);
  alloc_result allocate(std::uint64_t size) { return allocate(size, 0); }
  free_status release(std::uint64_t offset);

  const tree_config& config() const { return cfg_; }

  // Live allocations as offset -> node.
  const std::map<std::uint64_t, std::uint64_t>& live() const { return live_; }

  std::uint64_t live_bytes() const { return live_bytes_; }

  // True when the node's range is entirely free (covered by one free block).
  bool node_free(std::uint64_t node) const;

  // Internal consistency of the free decomposition: blocks pairwise disjoint
  // from each other and from live grants, no two free buddies left unmerged,
  // and free + live covering the whole range exactly once.
  bool self_check() const;

 private:
  // First free candidate at `level` with index in [from, to], or 0 if none.
  std::uint64_t first_free_in(std::uint32_t level, std::uint64_t from,
                              std::uint64_t to) const;
  void split_to(std::uint64_t node);

  tree_config cfg_;
  std::vector<std::set<std::uint64_t>> free_;  // per level, node indices
  std::map<std::uint64_t, std::uint64_t> live_;
  std::uint64_t live_bytes_ = 0;
};

}  // namespace nbuddy::verify
