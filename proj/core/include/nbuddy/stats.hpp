#pragma once

#include <atomic>
#include <cstdint>

namespace nbuddy {

// Process-wide small integer id per thread.  Doubles as the default scan
// hint so concurrent allocators start their level scans apart from each
// other, and as the stripe selector for the operation counters.
inline std::uint32_t thread_ordinal() {
  static std::atomic<std::uint32_t> next{0};
  thread_local const std::uint32_t id = next.fetch_add(1, std::memory_order_relaxed);
  return id;
}

struct counter_totals {
  std::uint64_t allocs = 0;         // successful grants
  std::uint64_t frees = 0;          // completed releases
  std::uint64_t exhausted = 0;      // scans that found no grantable node
  std::uint64_t occupy_cas = 0;     // claim CAS attempts
  std::uint64_t occupy_fail = 0;    // claim CAS attempts that lost
  std::uint64_t climb_cas = 0;      // allocation-climb CAS attempts
  std::uint64_t climb_retry = 0;    // ...of which lost and retried
  std::uint64_t coal_cas = 0;       // release-climb CAS attempts
  std::uint64_t coal_retry = 0;
  std::uint64_t unmark_cas = 0;     // side-bit clearing CAS attempts
  std::uint64_t unmark_retry = 0;
  std::uint64_t reset_cas = 0;      // node-reset CAS attempts (packed words only)
  std::uint64_t reset_retry = 0;
  std::uint64_t alloc_restart = 0;  // climbs aborted by an occupied ancestor
  std::uint64_t lock_spin = 0;      // lock acquisitions that had to wait

  std::uint64_t cas_retries() const {
    return occupy_fail + climb_retry + coal_retry + unmark_retry + reset_retry +
           lock_spin;
  }
};

// Striped counters: each thread lands on one cache-line-sized stripe, so
// hot-path increments stay local instead of sharing one contended line.
class counter_set {
 public:
  enum field : std::uint32_t {
    allocs,
    frees,
    exhausted,
    occupy_cas,
    occupy_fail,
    climb_cas,
    climb_retry,
    coal_cas,
    coal_retry,
    unmark_cas,
    unmark_retry,
    reset_cas,
    reset_retry,
    alloc_restart,
    lock_spin,
    n_fields
  };

  void inc(field f, std::uint64_t by = 1) {
    stripes_[thread_ordinal() & (n_stripes - 1)].v[f].fetch_add(
        by, std::memory_order_relaxed);
  }

  counter_totals totals() const {
    std::uint64_t sum[n_fields] = {};
    for (const auto& s : stripes_)
      for (std::uint32_t f = 0; f < n_fields; ++f)
        sum[f] += s.v[f].load(std::memory_order_relaxed);
    counter_totals t;
    t.allocs = sum[allocs];
    t.frees = sum[frees];
    t.exhausted = sum[exhausted];
    t.occupy_cas = sum[occupy_cas];
    t.occupy_fail = sum[occupy_fail];
    t.climb_cas = sum[climb_cas];
    t.climb_retry = sum[climb_retry];
    t.coal_cas = sum[coal_cas];
    t.coal_retry = sum[coal_retry];
    t.unmark_cas = sum[unmark_cas];
    t.unmark_retry = sum[unmark_retry];
    t.reset_cas = sum[reset_cas];
    t.reset_retry = sum[reset_retry];
    t.alloc_restart = sum[alloc_restart];
    t.lock_spin = sum[lock_spin];
    return t;
  }

 private:
  static constexpr std::uint32_t n_stripes = 64;
  struct alignas(64) stripe {
    std::atomic<std::uint64_t> v[n_fields] = {};
  };
  stripe stripes_[n_stripes];
};

}  // namespace nbuddy
