#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "nbuddy/access.hpp"

namespace nbuddy::verify {

// Serializing scheduler over the allocators' stepped access policy.
//
// Worker threads instrumented with stepped_access park at every shared-word
// access and at every top-level operation entry. The controller releases
// exactly one parked thread at a time and only decides once every live
// thread has parked, so a run is a deterministic function of the decision
// sequence: the same seed or script replays the same interleaving. That
// single property powers everything in this header: randomized schedule
// search, failure reproducers, targeted race scripts, freeze scenarios for
// progress checks, and systematic exploration of small instances.
//
// While gated, the controller also maintains two ledgers on the side:
//   - retry witnesses: a failed CAS must follow a mutation of its target
//     word since the failing thread last observed that word, otherwise the
//     retry was spurious and the lock-free progress argument breaks;
//   - operation entry/exit pairing: fn_enter/fn_exit events must nest LIFO
//     per thread and balance by the end of the run.

// Where a parked thread currently stands.
struct park_info {
  bool at_boundary = false;  // parked entering an operation, not at an access
  step_event ev{};
};

// Snapshot handed to a schedule chooser at each decision point.
struct sched_view {
  std::uint32_t candidates = 0;  // bitmask of schedulable parked threads
  std::uint32_t last = ~0u;      // previously dispatched thread, ~0u if none
  const std::vector<park_info>* parked = nullptr;      // per thread
  const std::vector<std::uint64_t>* dispatches = nullptr;  // per thread
};

class step_controller {
 public:
  struct options {
    std::uint64_t seed = 0;              // random choice when no script/chooser
    std::vector<std::uint32_t> script;   // decisions to replay first
    // Site-aware strategy consulted after the script is exhausted. Must
    // return a thread from view.candidates.
    std::function<std::uint32_t(const sched_view&)> chooser;
    // Invoked (under the scheduler lock) whenever no operation is in
    // flight: every thread is parked at an operation boundary, frozen at
    // one, or finished. Returns false to abort the run. Must not call back
    // into the controller or into instrumented code paths.
    std::function<bool()> on_quiescent;
    // Site-aware freezing, consulted when a thread parks with its dispatch
    // count so far; return true to freeze it there. Combined with the
    // count-based freeze_after marks.
    std::function<bool(std::uint32_t, const park_info&, std::uint64_t)> freeze_when;
    std::uint64_t trace_limit = std::uint64_t{1} << 22;
  };

  step_controller(std::uint32_t threads, options opt);

  step_controller(const step_controller&) = delete;
  step_controller& operator=(const step_controller&) = delete;

  // Sink to install (via step_scope) in worker thread t.
  step_sink* sink(std::uint32_t t);

  // Called by worker t itself around its whole workload.
  void worker_begin(std::uint32_t t);
  void worker_end(std::uint32_t t);

  // Freezing: thread t stops being schedulable once it has been granted
  // `dispatches` further steps. Configure before or during a run.
  void freeze_after(std::uint32_t t, std::uint64_t dispatches);
  void thaw(std::uint32_t t);
  void thaw_all();

  // Opens every gate; the run degrades to free-running threads so joins
  // complete. Used on detected failures before dumping the schedule.
  void abort_run();
  bool aborted() const;

  // True if the scheduler ever found every live thread frozen: the run
  // could not progress and was auto-aborted.
  bool stalled() const;

  // Post-run accessors. Undefined while workers are still running.
  std::uint64_t dispatches(std::uint32_t t) const { return dispatches_[t]; }
  std::uint64_t access_dispatches(std::uint32_t t) const {
    return access_dispatches_[t];
  }
  const std::vector<std::uint32_t>& decisions() const { return decisions_; }
  // Per decision: chosen thread and the candidate mask it was chosen from.
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& decision_log() const {
    return decision_log_;
  }
  const std::vector<std::string>& witness_violations() const {
    return witness_violations_;
  }
  bool pairing_ok(std::string* why) const;
  bool script_followed() const { return !script_infeasible_; }
  std::uint32_t frozen_count() const;
  std::uint32_t done_count() const;
  // Gated events in execution order as (thread, event) pairs.
  std::vector<std::pair<std::uint32_t, step_event>> trace_copy() const;

  // Human-readable decision sequence plus the last `tail` gated events.
  std::string dump_schedule(std::uint64_t tail = 64) const;

 private:
  struct thread_sink final : step_sink {
    step_controller* c = nullptr;
    std::uint32_t t = 0;
    void on_event(const step_event& ev) override { c->on_event(t, ev); }
  };

  enum class tstate : std::uint8_t { unstarted, loose, parked, frozen, done };

  struct trace_entry {
    std::uint32_t t;
    step_event ev;
  };

  static std::uint64_t word_key(const step_event& ev) {
    return ev.word | (std::uint64_t{static_cast<std::uint8_t>(ev.space)} << 60);
  }

  void on_event(std::uint32_t t, const step_event& ev);
  void gate(std::uint32_t t, const step_event& ev, bool boundary);
  void record_post(std::uint32_t t, const step_event& ev);
  void note_fn(std::uint32_t t, const step_event& ev);
  void try_dispatch();  // requires mu_ held
  bool should_freeze(std::uint32_t t) const;

  const std::uint32_t n_;
  options opt_;
  std::vector<thread_sink> sinks_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<tstate> state_;
  std::vector<park_info> parked_;
  std::vector<bool> released_;
  std::vector<std::uint64_t> freeze_mark_;  // ~0 = never
  std::uint32_t loose_ = 0;
  std::uint32_t last_ = ~0u;
  bool freezing_enabled_ = true;
  bool abort_ = false;
  bool stalled_ = false;
  bool quiescent_dirty_ = true;
  bool script_infeasible_ = false;
  std::size_t script_pos_ = 0;
  std::mt19937_64 rng_;

  std::vector<std::uint64_t> dispatches_;
  std::vector<std::uint64_t> access_dispatches_;
  std::vector<std::uint32_t> decisions_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> decision_log_;
  std::vector<trace_entry> trace_;

  std::unordered_map<std::uint64_t, std::uint64_t> version_;
  std::vector<std::unordered_map<std::uint64_t, std::uint64_t>> last_seen_;
  std::vector<std::string> witness_violations_;

  std::vector<std::vector<step_fn>> fn_stack_;
  std::vector<std::uint64_t> enter_count_, exit_count_;
  std::string pairing_violation_;
};

// Spawns one thread per body, wires worker_begin/end and the step_scope,
// and joins. The controller must outlive the call.
void run_workers(step_controller& c,
                 const std::vector<std::function<void()>>& bodies);

// Reproducer files: one dispatched thread ordinal per line, '#' comments.
void save_schedule(const std::string& path, const std::vector<std::uint32_t>& decisions);
std::vector<std::uint32_t> load_schedule(const std::string& path);

const char* site_name(step_site s);
const char* fn_name(step_fn f);

}  // namespace nbuddy::verify
