#pragma once

#include <cstdint>

namespace nbuddy {

// Per-node coordination word.  Five low bits carry the whole protocol;
// the word is machine sized so a single CAS covers every transition.
//
//   occ         node is allocated exactly (serves a live grant)
//   occ_left/right   some descendant through that child is allocated
//   coal_left/right  a release is in flight through that child
//
// A node is grantable only when occ and both side-occupancy bits are clear.
// Coalescing bits are advisory: they let a releasing thread and a competing
// allocating thread agree on who clears the side-occupancy bits.

inline constexpr std::uint64_t occ_right = 0x1;
inline constexpr std::uint64_t occ_left = 0x2;
inline constexpr std::uint64_t coal_right = 0x4;
inline constexpr std::uint64_t coal_left = 0x8;
inline constexpr std::uint64_t occ = 0x10;
inline constexpr std::uint64_t busy_mask = occ | occ_left | occ_right;  // 0x13
inline constexpr std::uint64_t status_mask = 0x1f;

// Child parity selects the side: even child index = left, odd = right.
// Left masks shift right by one to become the right-side masks.
inline constexpr std::uint64_t side(std::uint64_t child) { return child & 1; }

inline constexpr std::uint64_t clean_coal(std::uint64_t val, std::uint64_t child) {
  return val & ~(coal_left >> side(child));
}

inline constexpr std::uint64_t mark(std::uint64_t val, std::uint64_t child) {
  return val | (occ_left >> side(child));
}

inline constexpr std::uint64_t unmark(std::uint64_t val, std::uint64_t child) {
  return val & ~((occ_left | coal_left) >> side(child));
}

inline constexpr bool is_coal(std::uint64_t val, std::uint64_t child) {
  return (val & (coal_left >> side(child))) != 0;
}

inline constexpr bool is_occ_buddy(std::uint64_t val, std::uint64_t child) {
  return (val & (occ_right << side(child))) != 0;
}

inline constexpr bool is_coal_buddy(std::uint64_t val, std::uint64_t child) {
  return (val & (coal_right << side(child))) != 0;
}

inline constexpr bool is_free(std::uint64_t val) { return (val & busy_mask) == 0; }

}  // namespace nbuddy
