#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nbuddy/config.hpp"

namespace nbuddy::verify {

// Uniform handle over one allocator implementation so a single driver can
// run the oracle and every variant in lockstep. std::function is fine here;
// differential traces check outcomes, not throughput.
struct subject {
  std::string name;
  std::function<alloc_result(std::uint64_t size, std::uint32_t hint)> alloc;
  std::function<free_status(std::uint64_t offset)> release;
};

template <class A>
subject make_subject(std::string name, A& a) {
  return {std::move(name),
          [&a](std::uint64_t size, std::uint32_t hint) { return a.allocate(size, hint); },
          [&a](std::uint64_t offset) { return a.release(offset); }};
}

struct trace_report {
  bool ok = true;
  std::string detail;      // first divergence, when !ok
  std::uint64_t steps = 0; // executed steps including drain frees
  std::uint64_t allocs = 0, frees = 0, exhausted = 0, too_large = 0;
};

// Runs a seeded request sequence against every subject and compares each
// step's full outcome (status, offset, node, size). The request stream mixes
// allocations with a size distribution that is heavy on small chunks but
// reaches past max_size (exercising the oversize path) and frees of randomly
// chosen live chunks. Stops at the first divergence; with drain, releases
// every live chunk at the end so callers can assert the all-free state.
trace_report run_differential(std::vector<subject>& subjects, const tree_config& cfg,
                              std::uint64_t seed, std::uint64_t steps, bool drain);

}  // namespace nbuddy::verify
