#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nbuddy/config.hpp"
#include "nbuddy/packed_layout.hpp"

namespace nbuddy::verify {

// Quiescent-state replay: rebuilds the metadata words a correct allocator
// must hold once no operation is in flight, given only the set of live
// nodes, and diffs them against a snapshot. Occupancy bits appear exactly on
// live nodes and on the strict-ancestor paths above them down to max_level,
// so they are a pure function of the live set at any such moment.
// Coalescing bits are not: an unmark walk that stops at a freshly occupied
// buddy leaves its flags set on the ancestors above the stop, and they stay
// until the next climb or release through that side sweeps them. They are
// therefore checked only when the live set is empty, where every release
// walk must have run to completion and the words must be exactly zero.

// One status word per node, element 0 unused (flat layout).
std::vector<std::uint64_t> expected_flat(const tree_config& cfg,
                                         const std::vector<std::uint64_t>& live);

// One word per tile (packed layout).
std::vector<std::uint64_t> expected_packed(const tree_config& cfg,
                                           const packed_layout& layout,
                                           const std::vector<std::uint64_t>& live);

// First few differences, or empty string when equal. `what` names the words
// in the report ("node" or "tile").
std::string diff_words(const std::vector<std::uint64_t>& expected,
                       const std::vector<std::uint64_t>& actual, const char* what);

namespace detail {

template <class A>
concept tiled = requires(const A& a) { a.snapshot_tiles(); };

}  // namespace detail

// Compares an allocator's quiescent snapshot against the replayed live set.
// Returns std::nullopt when they match, a diff report otherwise. Only
// meaningful while no operation is in flight. With a non-empty live set the
// comparison covers occupancy bits only, per the residue rule above; an
// empty live set demands exactly zero words.
template <class Alloc>
std::optional<std::string> check_quiescent(const Alloc& alloc,
                                           const std::vector<std::uint64_t>& live) {
  std::vector<std::uint64_t> expected, actual;
  std::uint64_t coal_bits;
  const char* what;
  if constexpr (detail::tiled<Alloc>) {
    expected = expected_packed(alloc.config(), alloc.layout(), live);
    actual = alloc.snapshot_tiles();
    coal_bits = pos_mask_table[1].coal;  // position 1 covers all eight slots
    what = "tile";
  } else {
    expected = expected_flat(alloc.config(), live);
    actual = alloc.snapshot();
    coal_bits = coal_left | coal_right;
    what = "node";
  }
  if (!live.empty())
    for (std::uint64_t& w : actual) w &= ~coal_bits;
  const std::string d = diff_words(expected, actual, what);
  if (d.empty()) return std::nullopt;
  return d;
}

}  // namespace nbuddy::verify
