#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbuddy/verify/variants.hpp"

namespace nbuddy::verify {

// Controlled-interleaving checks built on step_controller. All of these run
// the non-blocking variants only; the spin-lock builds are not instrumented
// (a frozen lock holder trivially blocks everyone, which is the why of the
// non-blocking design, not a property to test).

// ---- randomized / replayed interleaving runs -------------------------------

struct interleave_params {
  variant_kind variant = variant_kind::flat_nb;
  std::uint32_t threads = 2;
  std::uint32_t depth = 3;
  std::uint32_t ops_per_thread = 3;
  std::uint64_t seed = 1;  // drives both the schedule and the request streams
  std::vector<std::uint32_t> script;  // replay these decisions first
  bool check_boundary_quiescence = true;
};

struct interleave_report {
  bool ok = true;
  std::string detail;
  std::vector<std::uint32_t> decisions;  // reproducer schedule
  std::uint64_t grants = 0;
  std::uint64_t decision_count = 0;
};

// One fully checked run: serialized scheduling per the seed/script, unit
// registry on every grant, metadata replay at every operation boundary where
// nothing is in flight, full drain, retry witnesses and entry/exit pairing.
interleave_report run_interleaved(const interleave_params& p);

// ---- systematic small-instance exploration ---------------------------------

struct explore_params {
  variant_kind variant = variant_kind::flat_nb;
  std::uint32_t threads = 2;
  std::uint32_t depth = 3;
  std::uint32_t ops_per_thread = 3;
  std::uint64_t seed = 1;
  // Depth-first search over scheduling decisions, branching wherever another
  // thread was runnable, limited to this many preemptions per schedule.
  std::uint32_t preemption_bound = 3;
  std::uint64_t max_schedules = 500'000;
};

struct explore_report {
  bool ok = true;
  std::string detail;
  std::uint64_t schedules = 0;
  std::uint64_t decisions_total = 0;
  bool complete = true;  // false when max_schedules stopped the search
  std::vector<std::uint32_t> failing_script;
};

explore_report run_explore(const explore_params& p);

// ---- solo progress under frozen rivals -------------------------------------

enum class solo_family : std::uint8_t {
  mid_climb,   // victims frozen inside the allocation climb
  mid_coal,    // victims frozen while flagging a release
  mid_reset,   // victims frozen between node reset and side-bit clearing
  anywhere,    // victims frozen at uniformly random gated steps
};

const char* family_name(solo_family f);

struct solo_params {
  variant_kind variant = variant_kind::flat_nb;
  solo_family family = solo_family::anywhere;
  std::uint32_t threads = 4;  // 1 survivor + threads-1 victims
  std::uint32_t depth = 6;
  std::uint64_t seed = 1;
  std::uint32_t schedules = 100;  // independent freeze schedules
};

struct solo_report {
  bool ok = true;
  std::string detail;
  std::uint64_t schedules_run = 0;
  std::uint64_t budget = 0;            // access-step allowance per operation
  std::uint64_t max_steps_used = 0;    // worst survivor operation observed
};

// Freezes all but one thread per the family, then requires the survivor's
// next complete operation to finish within the step budget
// 16 * (depth + 2^target_level). A survivor that exceeds the budget aborts
// the run and reports the full schedule.
solo_report run_solo_progress(const solo_params& p);

// ---- named race scripts -----------------------------------------------------

struct scenario_report {
  bool ok = true;
  std::string detail;
  std::vector<std::uint32_t> decisions;  // reproducer schedule
};

// Known hazard windows driven to their trigger point by site-aware
// scheduling: "unmark-handoff", "reset-visibility", "early-stop".
scenario_report run_named_scenario(const std::string& name, variant_kind v);
std::vector<std::string> scenario_names();

}  // namespace nbuddy::verify
