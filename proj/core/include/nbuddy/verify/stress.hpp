#pragma once

#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "nbuddy/verify/registry.hpp"
#include "nbuddy/verify/replay.hpp"

namespace nbuddy::verify {

struct stress_params {
  std::uint32_t threads = 8;
  std::uint64_t ops_per_thread = 100'000;  // allocation attempts per thread
  std::uint64_t min_req = 8;
  std::uint64_t max_req = 1024;
  std::uint64_t seed = 1;
  std::uint32_t live_cap = 64;  // per-thread outstanding chunks before forced frees
};

struct stress_report {
  bool ok = true;
  std::string detail;  // first violation, with the seed for reproduction
  std::uint64_t grants = 0;
  std::uint64_t frees = 0;
  std::uint64_t exhausted = 0;
  std::uint64_t cas_retries = 0;
  double seconds = 0;
};

// Concurrent churn with continuous safety checking. Every grant is claimed
// in a shared unit-granular registry before use and released just before the
// chunk goes back, so overlapping live grants, wrong bucket sizes and
// misaligned offsets are caught the moment they happen, across threads. At
// the end all threads drain, and the metadata must replay to the empty
// state exactly.
template <class Alloc>
stress_report run_stress(Alloc& alloc, const stress_params& p) {
  const tree_config& cfg = alloc.config();
  live_registry registry(cfg);
  stress_report rep;

  std::atomic<bool> failed{false};
  std::mutex fail_mu;
  std::string fail_detail;
  auto report_failure = [&](const std::string& why) {
    bool expected = false;
    if (failed.compare_exchange_strong(expected, true)) {
      std::lock_guard lk(fail_mu);
      fail_detail = why + " [seed " + std::to_string(p.seed) + "]";
    }
  };

  std::atomic<std::uint64_t> grants{0}, frees{0}, exhausted{0};

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> workers;
  workers.reserve(p.threads);
  for (std::uint32_t tid = 0; tid < p.threads; ++tid) {
    workers.emplace_back([&, tid] {
      std::mt19937_64 rng(p.seed * 0x9e3779b97f4a7c15ULL + tid + 1);
      const std::uint32_t e_lo = static_cast<std::uint32_t>(std::bit_width(p.min_req)) - 1;
      const std::uint32_t e_hi = static_cast<std::uint32_t>(std::bit_width(p.max_req)) - 1;
      const std::uint32_t tag = tid + 1;
      std::vector<std::pair<std::uint64_t, std::uint64_t>> live;  // offset, size
      live.reserve(p.live_cap);
      std::string why;

      auto free_one = [&](std::size_t idx) {
        const auto [offset, size] = live[idx];
        live[idx] = live.back();
        live.pop_back();
        // Clear the claim first: once release() returns, another thread may
        // legitimately re-grant these units.
        if (!registry.release(offset, size, tag, &why)) {
          report_failure(why);
          return;
        }
        if (alloc.release(offset) != free_status::ok) {
          report_failure("allocator rejected a valid free at offset " +
                         std::to_string(offset));
          return;
        }
        frees.fetch_add(1, std::memory_order_relaxed);
      };

      for (std::uint64_t op = 0; op < p.ops_per_thread; ++op) {
        if (failed.load(std::memory_order_relaxed)) break;
        if (!live.empty() && (live.size() >= p.live_cap || rng() % 100 < 45)) {
          free_one(rng() % live.size());
          continue;
        }
        // Log-uniform over buckets, uniform within one: every bucket in
        // [min_req, max_req] stays exercised at every depth.
        const std::uint32_t e =
            e_lo + static_cast<std::uint32_t>(rng() % (e_hi - e_lo + 1));
        const std::uint64_t bucket = std::uint64_t{1} << e;
        const std::uint64_t size = bucket / 2 + 1 + rng() % (bucket / 2);
        const alloc_result r = alloc.allocate(size, static_cast<std::uint32_t>(rng()));
        if (r) {
          if (!registry.claim(r, size, tag, &why)) {
            report_failure(why);
            break;
          }
          live.emplace_back(r.offset, r.size);
          grants.fetch_add(1, std::memory_order_relaxed);
        } else {
          exhausted.fetch_add(1, std::memory_order_relaxed);
          if (!live.empty()) free_one(rng() % live.size());
        }
      }
      while (!live.empty() && !failed.load(std::memory_order_relaxed))
        free_one(live.size() - 1);
    });
  }
  for (auto& w : workers) w.join();
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  rep.grants = grants.load();
  rep.frees = frees.load();
  rep.exhausted = exhausted.load();
  rep.cas_retries = alloc.counters().cas_retries();

  if (failed.load()) {
    rep.ok = false;
    rep.detail = fail_detail;
    return rep;
  }
  if (const std::uint64_t leaked = registry.claimed_units(); leaked != 0) {
    rep.ok = false;
    rep.detail = "registry holds " + std::to_string(leaked) +
                 " units after drain [seed " + std::to_string(p.seed) + "]";
    return rep;
  }
  if (auto diff = check_quiescent(alloc, {})) {
    rep.ok = false;
    rep.detail = "non-empty metadata after drain [seed " + std::to_string(p.seed) +
                 "]\n" + *diff;
  }
  return rep;
}

}  // namespace nbuddy::verify
