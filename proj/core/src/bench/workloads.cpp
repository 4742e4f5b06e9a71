#include "nbuddy/bench/workloads.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <bit>
#include <chrono>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#if defined(__linux__)
#include <pthread.h>
#endif

#include "nbuddy/verify/replay.hpp"

namespace nbuddy::bench {
namespace {

using clock_type = std::chrono::steady_clock;

constexpr std::uint64_t larson_slots = 64;  // live chunks per thread
constexpr std::uint32_t larson_phases = 4;  // slot-array hand-offs
constexpr std::uint64_t thread_test_batch_total = 10'000;
constexpr std::uint32_t depth_cap = 24;

double elapsed_seconds(clock_type::time_point a, clock_type::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

void pin_to_core(std::uint32_t tid) {
#if defined(__linux__)
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(tid % cores, &set);
  pthread_setaffinity_np(pthread_self(), sizeof(set), &set);
#else
  (void)tid;
#endif
}

// Per-thread tallies, padded so neighbors do not share a cache line.
struct alignas(64) thread_tally {
  std::uint64_t ops = 0;
  std::uint64_t exhausted = 0;
};

struct core_result {
  std::uint64_t ops = 0;
  std::uint64_t exhausted = 0;
  double seconds = 0.0;
  std::vector<std::uint64_t> leftovers;  // offsets still live after the run
};

std::mt19937_64 request_rng(std::uint64_t seed, std::uint32_t tid, std::uint32_t phase) {
  return std::mt19937_64(seed * 0x9e3779b97f4a7c15ULL + (std::uint64_t{phase} << 32) +
                         tid + 1);
}

// Spawns one worker per thread, pins if asked, releases them together, and
// reports the wall time of the parallel section.
template <class Body>
double timed_section(const bench_params& p, Body&& body) {
  std::barrier gate(static_cast<std::ptrdiff_t>(p.threads) + 1);
  std::vector<std::thread> workers;
  workers.reserve(p.threads);
  for (std::uint32_t t = 0; t < p.threads; ++t) {
    workers.emplace_back([&, t] {
      if (p.pin) pin_to_core(t);
      gate.arrive_and_wait();
      body(t);
    });
  }
  gate.arrive_and_wait();
  const auto t0 = clock_type::now();
  for (auto& w : workers) w.join();
  const auto t1 = clock_type::now();
  return elapsed_seconds(t0, t1);
}

template <class Alloc>
core_result run_linux_scalability(Alloc& alloc, const bench_params& p,
                                  std::byte* touch_base) {
  const std::uint64_t total_ops = p.ops ? p.ops : 1'000'000;
  const std::uint64_t iters = std::max<std::uint64_t>(1, total_ops / p.threads);
  std::vector<thread_tally> tally(p.threads);

  core_result cr;
  cr.seconds = timed_section(p, [&](std::uint32_t t) {
    thread_tally& my = tally[t];
    for (std::uint64_t i = 0; i < iters; ++i) {
      const alloc_result r = alloc.allocate(p.size);
      if (!r) {
        ++my.exhausted;
        continue;
      }
      if (touch_base) touch_base[r.offset] = std::byte{1};
      alloc.release(r.offset);
      ++my.ops;
    }
  });
  for (const auto& t : tally) {
    cr.ops += t.ops;
    cr.exhausted += t.exhausted;
  }
  return cr;
}

template <class Alloc>
core_result run_thread_test(Alloc& alloc, const bench_params& p, std::byte* touch_base) {
  const std::uint64_t batch =
      std::max<std::uint64_t>(1, thread_test_batch_total / p.threads);
  const std::uint64_t cycles =
      p.ops ? std::max<std::uint64_t>(1, p.ops / (batch * p.threads)) : 200;
  std::vector<thread_tally> tally(p.threads);

  core_result cr;
  cr.seconds = timed_section(p, [&](std::uint32_t t) {
    thread_tally& my = tally[t];
    std::mt19937_64 rng = request_rng(p.seed, t, 0);
    std::vector<std::uint64_t> held;
    held.reserve(batch);
    for (std::uint64_t c = 0; c < cycles; ++c) {
      held.clear();
      for (std::uint64_t i = 0; i < batch; ++i) {
        // Scattered scan starts: a batch of standing allocations otherwise
        // turns each fill into a rescan of the already-filled stretch.
        const alloc_result r = alloc.allocate(p.size, rng());
        if (!r) {
          ++my.exhausted;
          continue;
        }
        if (touch_base) touch_base[r.offset] = std::byte{1};
        held.push_back(r.offset);
        ++my.ops;
      }
      for (const std::uint64_t off : held) alloc.release(off);
    }
  });
  for (const auto& t : tally) {
    cr.ops += t.ops;
    cr.exhausted += t.exhausted;
  }
  return cr;
}

template <class Alloc>
core_result run_larson(Alloc& alloc, const bench_params& p, std::byte* touch_base) {
  struct slot {
    std::uint64_t offset = 0;
    bool live = false;
  };
  // One slot array per thread; arrays rotate between threads at phase
  // boundaries so chunks allocated by one thread are released by another.
  std::vector<std::vector<slot>> arrays(p.threads, std::vector<slot>(larson_slots));
  std::vector<thread_tally> tally(p.threads);

  const bool by_ops = p.ops > 0;
  const double duration = p.duration >= 0 ? p.duration : 2.0;
  const std::uint64_t steps_per_phase =
      by_ops ? std::max<std::uint64_t>(1, p.ops / p.threads / larson_phases) : 0;
  const bool skip = by_ops ? p.ops == 0 : duration <= 0.0;

  std::barrier phase_gate(static_cast<std::ptrdiff_t>(p.threads));

  core_result cr;
  cr.seconds = timed_section(p, [&](std::uint32_t t) {
    thread_tally& my = tally[t];
    const auto start = clock_type::now();
    std::uniform_int_distribution<std::uint64_t> size_dist(p.min_size, p.max_size);
    if (!skip) {
      // Prefill this thread's own array (setup, not counted in ops).
      std::mt19937_64 fill_rng = request_rng(p.seed, t, ~0u);
      for (auto& s : arrays[t]) {
        const alloc_result r = alloc.allocate(size_dist(fill_rng));
        if (!r) {
          ++my.exhausted;
          continue;
        }
        if (touch_base) touch_base[r.offset] = std::byte{1};
        s = {r.offset, true};
      }
    }
    for (std::uint32_t ph = 0; ph < larson_phases; ++ph) {
      phase_gate.arrive_and_wait();
      if (skip) continue;
      std::vector<slot>& mine = arrays[(t + ph) % p.threads];
      std::mt19937_64 rng = request_rng(p.seed, t, ph);
      const auto deadline =
          start + std::chrono::duration<double>(duration * (ph + 1) / larson_phases);
      for (std::uint64_t i = 0; by_ops ? i < steps_per_phase : true; ++i) {
        if (!by_ops && (i & 31) == 0 && clock_type::now() >= deadline) break;
        slot& s = mine[rng() % larson_slots];
        const std::uint64_t size = size_dist(rng);
        const std::uint64_t hint = rng();
        if (s.live) alloc.release(s.offset);
        s.live = false;
        // Random scan starts: with a standing working set, a fixed start
        // degenerates into rescanning one densely packed prefix every call.
        const alloc_result r = alloc.allocate(size, hint);
        if (!r) {
          ++my.exhausted;
          continue;
        }
        if (touch_base) touch_base[r.offset] = std::byte{1};
        s = {r.offset, true};
        ++my.ops;
      }
    }
  });
  for (const auto& t : tally) {
    cr.ops += t.ops;
    cr.exhausted += t.exhausted;
  }
  for (const auto& arr : arrays)
    for (const auto& s : arr)
      if (s.live) cr.leftovers.push_back(s.offset);
  return cr;
}

template <class Alloc>
core_result run_constant_occupancy(Alloc& alloc, const bench_params& p,
                                   std::byte* touch_base, std::string* error) {
  struct slot {
    std::uint64_t offset = 0;
    std::uint64_t size = 0;
    bool live = false;
  };
  // Geometric pool: twice as many chunks of each smaller size class, classes
  // spanning size..16*size (clamped to max_size), filling half the region.
  std::uint64_t classes[5];
  for (int k = 0; k < 5; ++k)
    classes[k] = std::min(p.size << k, p.max_size);
  const std::uint64_t target = alloc.config().total_size / 2;

  std::vector<std::vector<slot>> pool(p.threads);
  {
    std::mt19937_64 rng(p.seed ^ 0xc0ffee);
    std::uint64_t acquired = 0;
    std::uint64_t i = 0;
    while (acquired < target) {
      const std::uint64_t pick = rng() % 31;  // weights 16:8:4:2:1
      const int k = pick < 16 ? 0 : pick < 24 ? 1 : pick < 28 ? 2 : pick < 30 ? 3 : 4;
      const alloc_result r = alloc.allocate(classes[k]);
      if (!r) {
        *error = "constant-occupancy pool does not fit the managed region";
        for (auto& part : pool)
          for (auto& s : part)
            if (s.live) alloc.release(s.offset);
        return {};
      }
      pool[i++ % p.threads].push_back({r.offset, classes[k], true});
      acquired += r.size;
    }
  }

  const std::uint64_t total_ops = p.ops ? p.ops : 1'000'000;
  const std::uint64_t steps = std::max<std::uint64_t>(1, total_ops / p.threads);
  std::vector<thread_tally> tally(p.threads);

  core_result cr;
  cr.seconds = timed_section(p, [&](std::uint32_t t) {
    thread_tally& my = tally[t];
    std::vector<slot>& mine = pool[t];
    if (mine.empty()) return;
    std::mt19937_64 rng = request_rng(p.seed, t, 0);
    for (std::uint64_t i = 0; i < steps; ++i) {
      slot& s = mine[rng() % mine.size()];
      const std::uint64_t hint = rng();
      // Free-then-reallocate at the released chunk's own size keeps the
      // occupancy factor constant by construction. Random scan starts keep
      // the scan from crawling the same packed prefix at 50% occupancy.
      if (s.live) alloc.release(s.offset);
      s.live = false;
      const alloc_result r = alloc.allocate(s.size, hint);
      if (!r) {
        ++my.exhausted;
        continue;
      }
      if (touch_base) touch_base[r.offset] = std::byte{1};
      s.offset = r.offset;
      s.live = true;
      ++my.ops;
    }
  });
  for (const auto& t : tally) {
    cr.ops += t.ops;
    cr.exhausted += t.exhausted;
  }
  for (const auto& part : pool)
    for (const auto& s : part)
      if (s.live) cr.leftovers.push_back(s.offset);
  return cr;
}

template <class Alloc>
bench_result run_with(Alloc& alloc, const bench_params& p) {
  bench_result res;
  res.workload = p.workload;
  res.variant = verify::variant_name(p.variant);
  res.threads = p.threads;
  res.size_bytes = p.size;

  std::vector<std::byte> touch_buf;
  std::byte* touch_base = nullptr;
  if (p.touch) {
    touch_buf.resize(alloc.config().total_size);
    touch_base = touch_buf.data();
  }

  core_result cr;
  std::string error;
  if (p.workload == "linux-scalability") {
    cr = run_linux_scalability(alloc, p, touch_base);
  } else if (p.workload == "thread-test") {
    cr = run_thread_test(alloc, p, touch_base);
  } else if (p.workload == "larson") {
    cr = run_larson(alloc, p, touch_base);
  } else if (p.workload == "constant-occupancy") {
    cr = run_constant_occupancy(alloc, p, touch_base, &error);
  } else {
    res.error = "unknown workload: " + p.workload;
    return res;
  }
  if (!error.empty()) {
    res.error = error;
    return res;
  }

  res.cas_retries = alloc.counters().cas_retries();
  for (const std::uint64_t off : cr.leftovers) {
    if (alloc.release(off) != free_status::ok) {
      res.error = "cleanup free rejected at offset " + std::to_string(off);
      return res;
    }
  }
  if (auto d = verify::check_quiescent(alloc, {})) {
    res.error = "allocator metadata not clean after drain:\n" + *d;
    return res;
  }

  res.ops = cr.ops;
  res.seconds = cr.seconds;
  res.throughput_ops_s = cr.seconds > 0 ? static_cast<double>(cr.ops) / cr.seconds : 0.0;
  res.exhausted = cr.exhausted;
  res.ok = true;
  return res;
}

}  // namespace

const std::vector<std::string>& workload_names() {
  static const std::vector<std::string> names = {
      "linux-scalability", "thread-test", "larson", "constant-occupancy"};
  return names;
}

std::uint64_t derive_total_size(const bench_params& p) {
  const std::uint64_t bucket = std::max(p.min_size, std::bit_ceil(p.size));
  std::uint64_t peak = 0;
  if (p.workload == "linux-scalability") {
    peak = p.threads * bucket;
  } else if (p.workload == "thread-test") {
    peak = thread_test_batch_total * bucket;
  } else if (p.workload == "larson") {
    peak = larson_slots * p.threads * ((p.min_size + p.max_size) / 2);
  }
  // constant-occupancy sizes its pool from the region, so the floor rules.
  std::uint64_t total = std::bit_ceil(std::max(64 * p.max_size, 4 * peak));
  total = std::min(total, p.min_size << depth_cap);
  return total;
}

bench_result run_bench(const bench_params& p) {
  bench_result res;
  res.workload = p.workload;
  res.variant = verify::variant_name(p.variant);
  res.threads = p.threads;
  res.size_bytes = p.size;

  if (p.threads < 1) {
    res.error = "threads must be >= 1";
    return res;
  }
  const auto& names = workload_names();
  if (std::find(names.begin(), names.end(), p.workload) == names.end()) {
    res.error = "unknown workload: " + p.workload;
    return res;
  }
  if (p.size < p.min_size || p.size > p.max_size) {
    res.error = "request size outside [min_size, max_size]";
    return res;
  }
  try {
    const tree_config cfg = tree_config::create(
        p.total_size ? p.total_size : derive_total_size(p), p.min_size, p.max_size);
    return verify::with_variant(p.variant, cfg,
                                [&](auto& alloc) { return run_with(alloc, p); });
  } catch (const std::invalid_argument& e) {
    res.error = e.what();
    return res;
  }
}

void write_csv_header(std::ostream& os) {
  os << "workload,variant,threads,size_bytes,ops,seconds,throughput_ops_s,"
        "cas_retries,exhausted\n";
}

void write_csv_row(std::ostream& os, const bench_result& r) {
  os << r.workload << ',' << r.variant << ',' << r.threads << ',' << r.size_bytes
     << ',' << r.ops << ',' << std::fixed << std::setprecision(6) << r.seconds << ','
     << std::setprecision(2) << r.throughput_ops_s << ',' << r.cas_retries << ','
     << r.exhausted << '\n';
}

}  // namespace nbuddy::bench
