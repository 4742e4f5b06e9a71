#include "nbuddy/verify/oracle.hpp"

#include <algorithm>

namespace nbuddy::verify {

sequential_oracle::sequential_oracle(const tree_config& cfg) : cfg_(cfg) {
  free_.resize(cfg_.depth + 1);
  free_[0].insert(1);  // one maximal block: the whole region
}

std::uint64_t sequential_oracle::first_free_in(std::uint32_t level, std::uint64_t from,
                                               std::uint64_t to) const {
  // A level-`level` node is fully free iff some free block at an equal or
  // shallower level covers it; blocks deeper than `level` cannot, because
  // eager merging guarantees no two free buddies coexist. For each shallower
  // level take the first block whose descendant span reaches `from`.
  std::uint64_t best = 0;
  for (std::uint32_t l = 0; l <= level; ++l) {
    if (free_[l].empty()) continue;
    const std::uint32_t s = level - l;
    auto it = free_[l].lower_bound(from >> s);
    if (it == free_[l].end()) continue;
    const std::uint64_t lo = *it << s;
    const std::uint64_t candidate = std::max(from, lo);
    if (candidate > to) continue;
    if (best == 0 || candidate < best) best = candidate;
    if (best == from) break;  // cannot improve
  }
  return best;
}

void sequential_oracle::split_to(std::uint64_t node) {
  std::uint64_t block = node;
  while (!free_[level_of(block)].count(block)) block >>= 1;
  free_[level_of(block)].erase(block);
  // Re-add the off-path halves produced by splitting down to `node`.
  while (block != node) {
    const std::uint64_t child = node >> (level_of(node) - level_of(block) - 1);
    free_[level_of(child)].insert(buddy_of(child));
    block = child;
  }
}

alloc_result sequential_oracle::allocate(std::uint64_t size, std::uint32_t hint) {
  if (size > cfg_.max_size) return {alloc_status::too_large, 0, 0, 0};
  const std::uint32_t level = target_level(size, cfg_);
  const auto [first, last] = level_nodes(level);
  const std::uint64_t start = first + hint % (last - first + 1);

  std::uint64_t n = first_free_in(level, start, last);
  if (n == 0 && start != first) n = first_free_in(level, first, start - 1);
  if (n == 0) return {alloc_status::exhausted, 0, 0, 0};

  split_to(n);
  const std::uint64_t offset = offset_of(n, cfg_);
  live_.emplace(offset, n);
  live_bytes_ += size_of(n, cfg_);
  return {alloc_status::ok, offset, n, size_of(n, cfg_)};
}

free_status sequential_oracle::release(std::uint64_t offset) {
  auto it = live_.find(offset);
  if (it == live_.end()) return free_status::invalid_address;
  std::uint64_t m = it->second;
  live_.erase(it);
  live_bytes_ -= size_of(m, cfg_);
  while (m > 1 && free_[level_of(m)].count(buddy_of(m))) {
    free_[level_of(m)].erase(buddy_of(m));
    m >>= 1;
  }
  free_[level_of(m)].insert(m);
  return free_status::ok;
}

bool sequential_oracle::node_free(std::uint64_t node) const {
  for (std::uint64_t a = node; a >= 1; a >>= 1)
    if (free_[level_of(a)].count(a)) return true;
  return false;
}

bool sequential_oracle::self_check() const {
  // Free blocks and live grants must tile the leaf row exactly once, and no
  // two free buddies may coexist (they should have merged).
  std::vector<std::uint32_t> cover(cfg_.leaf_count(), 0);
  auto paint = [&](std::uint64_t n) {
    const std::uint32_t s = cfg_.depth - level_of(n);
    const std::uint64_t lo = (n << s) - cfg_.leaf_count();
    for (std::uint64_t i = 0; i < (std::uint64_t{1} << s); ++i) ++cover[lo + i];
  };
  for (std::uint32_t l = 0; l <= cfg_.depth; ++l) {
    for (std::uint64_t b : free_[l]) {
      if (level_of(b) != l) return false;
      if (b > 1 && free_[l].count(buddy_of(b))) return false;
      paint(b);
    }
  }
  std::uint64_t bytes = 0;
  for (const auto& [offset, n] : live_) {
    if (offset_of(n, cfg_) != offset) return false;
    paint(n);
    bytes += size_of(n, cfg_);
  }
  if (bytes != live_bytes_) return false;
  return std::all_of(cover.begin(), cover.end(),
                     [](std::uint32_t c) { return c == 1; });
}

}  // namespace nbuddy::verify
