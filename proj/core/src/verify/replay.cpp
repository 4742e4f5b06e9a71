#include "nbuddy/verify/replay.hpp"

#include <sstream>

#include "nbuddy/geometry.hpp"
#include "nbuddy/status_bits.hpp"

namespace nbuddy::verify {

std::vector<std::uint64_t> expected_flat(const tree_config& cfg,
                                         const std::vector<std::uint64_t>& live) {
  std::vector<std::uint64_t> w(cfg.node_count() + 1, 0);
  for (const std::uint64_t n : live) {
    w[n] = busy_mask;
    std::uint64_t child = n;
    for (std::uint64_t a = n >> 1; level_of(child) > cfg.max_level; a >>= 1) {
      w[a] |= occ_left >> side(child);
      child = a;
    }
  }
  return w;
}

std::vector<std::uint64_t> expected_packed(const tree_config& cfg,
                                           const packed_layout& layout,
                                           const std::vector<std::uint64_t>& live) {
  std::vector<std::uint64_t> tiles(layout.tiles(), 0);
  for (const std::uint64_t n : live) {
    const tile_place tp = layout.place(n);
    tiles[tp.tile] |= pos_mask_table[tp.pos].busy_pat;
    // Side occupancy at each tile entry slot along the path to max_level.
    for (std::uint64_t r = n >> tp.row; level_of(r) > cfg.max_level;) {
      const std::uint64_t s = r >> 1;
      const tile_place sp = layout.place(s);
      tiles[sp.tile] |= std::uint64_t{occ_left >> side(r)} << slot_shift(sp.pos);
      r = s >> 3;
    }
  }
  return tiles;
}

std::string diff_words(const std::vector<std::uint64_t>& expected,
                       const std::vector<std::uint64_t>& actual, const char* what) {
  std::ostringstream os;
  if (expected.size() != actual.size()) {
    os << what << " count mismatch: expected " << expected.size() << ", actual "
       << actual.size();
    return os.str();
  }
  std::uint64_t mismatches = 0;
  for (std::uint64_t i = 0; i < expected.size(); ++i) {
    if (expected[i] == actual[i]) continue;
    if (++mismatches <= 8)
      os << what << " " << i << ": expected 0x" << std::hex << expected[i]
         << ", actual 0x" << actual[i] << std::dec << "\n";
  }
  if (mismatches == 0) return {};
  os << mismatches << " mismatched " << what << " word(s)";
  return os.str();
}

}  // namespace nbuddy::verify
