#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nbuddy/verify/variants.hpp"

namespace nbuddy::bench {

// Desk-scale reruns of the four back-end allocator workloads, uniform over
// the four variants. The driver owns all request generation: given a seed,
// each thread's request sequence (sizes and slot choices) is identical
// across variants, so throughput differences reflect the allocator alone.

struct bench_params {
  std::string workload = "linux-scalability";
  verify::variant_kind variant = verify::variant_kind::flat_nb;
  std::uint32_t threads = 1;
  std::uint64_t size = 8;          // request size in bytes
  std::uint64_t min_size = 8;      // smallest managed chunk
  std::uint64_t max_size = 16384;  // largest managed chunk
  std::uint64_t total_size = 0;    // managed region; 0 = derive per workload
  std::uint64_t ops = 0;           // total operations; 0 = workload default
  double duration = -1.0;          // seconds (larson); negative = default 2 s
  std::uint64_t seed = 1;
  bool pin = false;    // bind threads to cores round-robin
  bool touch = false;  // write one byte per granted chunk
};

struct bench_result {
  bool ok = false;
  std::string error;  // config / safety failure when !ok

  std::string workload;
  std::string variant;
  std::uint32_t threads = 0;
  std::uint64_t size_bytes = 0;
  std::uint64_t ops = 0;  // successful allocations completed
  double seconds = 0.0;
  double throughput_ops_s = 0.0;
  std::uint64_t cas_retries = 0;
  std::uint64_t exhausted = 0;  // allocations denied for lack of space
};

const std::vector<std::string>& workload_names();

// The managed-region size is not a flag; it is derived from the workload's
// peak live bytes with headroom (and a floor of 64 chunks of max_size), so
// every variant runs the same geometry.
std::uint64_t derive_total_size(const bench_params& p);

bench_result run_bench(const bench_params& p);

// CSV emission: fixed header + one fixed-decimal row per run.
void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const bench_result& r);

}  // namespace nbuddy::bench
