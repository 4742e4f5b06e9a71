#include "nbuddy/verify/scenarios.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include "nbuddy/geometry.hpp"
#include "nbuddy/verify/registry.hpp"
#include "nbuddy/verify/replay.hpp"
#include "nbuddy/verify/sched.hpp"

namespace nbuddy::verify {
namespace {

tree_config make_cfg(std::uint32_t depth) {
  return tree_config::create(std::uint64_t{8} << depth, 8, std::uint64_t{8} << depth);
}

struct live_entry {
  std::uint64_t node = 0;
  std::uint64_t size = 0;
  std::uint32_t tag = 0;
};

// Shared bookkeeping for one controlled run: the unit registry, the live map
// feeding quiescent replay, and first-failure capture.
struct run_state {
  explicit run_state(const tree_config& cfg) : registry(cfg) {}

  live_registry registry;
  std::mutex mu;
  // offset -> entry. A multimap because a release parked after its node
  // reset has already returned the space: a rival can be granted the same
  // offset while the releasing thread still owes the erase of its entry.
  std::multimap<std::uint64_t, live_entry> live;
  std::atomic<std::uint64_t> grants{0};
  std::atomic<bool> failed{false};
  std::string detail;

  void fail(step_controller* ctl, const std::string& why) {
    fail_inline(why);
    if (ctl) ctl->abort_run();
  }
  // Controller callbacks must not re-enter the controller; returning false
  // from the callback performs the abort instead.
  void fail_inline(const std::string& why) {
    failed.store(true);
    std::lock_guard lk(mu);
    if (detail.empty()) detail = why;
  }
  std::vector<std::uint64_t> live_nodes() {
    std::lock_guard lk(mu);
    std::vector<std::uint64_t> nodes;
    nodes.reserve(live.size());
    for (const auto& [offset, e] : live) nodes.push_back(e.node);
    return nodes;
  }
};

using local_list = std::vector<std::pair<std::uint64_t, std::uint64_t>>;  // offset, size

template <class Alloc>
bool do_alloc(Alloc& alloc, run_state& sh, step_controller& ctl, std::uint32_t tid,
              std::uint64_t size, std::uint32_t hint, local_list& local) {
  const alloc_result r = alloc.allocate(size, hint);
  if (!r) return true;  // exhaustion is legal under contention
  std::string why;
  if (!sh.registry.claim(r, size, tid + 1, &why)) {
    sh.fail(&ctl, why);
    return false;
  }
  {
    std::lock_guard lk(sh.mu);
    sh.live.emplace(r.offset, live_entry{r.node, r.size, tid + 1});
  }
  local.emplace_back(r.offset, r.size);
  sh.grants.fetch_add(1, std::memory_order_relaxed);
  return true;
}

template <class Alloc>
bool do_free_newest(Alloc& alloc, run_state& sh, step_controller& ctl,
                    std::uint32_t tid, local_list& local) {
  const auto [offset, size] = local.back();
  local.pop_back();
  std::string why;
  // Clear the claim first: after release() the units are up for grabs.
  if (!sh.registry.release(offset, size, tid + 1, &why)) {
    sh.fail(&ctl, why);
    return false;
  }
  if (alloc.release(offset) != free_status::ok) {
    sh.fail(&ctl, "valid free rejected at offset " + std::to_string(offset));
    return false;
  }
  // Drop the block from the replay set only once the words are back to
  // zero. The boundary quiescence check cannot run in between: this thread
  // is loose until its next gate, which blocks dispatch. Erase exactly our
  // own entry; the offset may already carry a rival's fresh grant.
  {
    std::lock_guard lk(sh.mu);
    auto [lo, hi] = sh.live.equal_range(offset);
    for (auto it = lo; it != hi; ++it) {
      if (it->second.tag == tid + 1) {
        sh.live.erase(it);
        break;
      }
    }
  }
  return true;
}

// Deterministic per-thread churn: the request stream depends only on the
// seed and this thread's own outcome history, so a replayed schedule
// reproduces the run exactly.
template <class Alloc>
void churn_ops(Alloc& alloc, run_state& sh, step_controller& ctl, std::uint32_t tid,
               std::uint64_t seed, std::uint32_t ops, local_list& local,
               const std::atomic<bool>* stop) {
  std::mt19937_64 rng(seed);
  const tree_config& cfg = alloc.config();
  for (std::uint32_t i = 0; i < ops; ++i) {
    if (stop && stop->load(std::memory_order_relaxed)) break;
    if (sh.failed.load(std::memory_order_relaxed)) break;
    if (!local.empty() && (rng() & 1)) {
      if (!do_free_newest(alloc, sh, ctl, tid, local)) return;
    } else {
      const std::uint64_t size = cfg.min_size << (rng() % 3);
      if (!do_alloc(alloc, sh, ctl, tid, size, static_cast<std::uint32_t>(rng()), local))
        return;
    }
  }
}

// Post-join cleanup and final-state checks, run uninstrumented.
template <class Alloc>
bool drain_and_check(Alloc& alloc, run_state& sh, std::string* why) {
  std::string r;
  while (!sh.live.empty()) {
    const auto it = sh.live.begin();
    const std::uint64_t offset = it->first;
    const live_entry e = it->second;
    sh.live.erase(it);
    if (!sh.registry.release(offset, e.size, e.tag, &r)) {
      *why = r;
      return false;
    }
    if (alloc.release(offset) != free_status::ok) {
      *why = "drain free rejected at offset " + std::to_string(offset);
      return false;
    }
  }
  if (const std::uint64_t n = sh.registry.claimed_units(); n != 0) {
    *why = "registry still holds " + std::to_string(n) + " units after drain";
    return false;
  }
  if (auto d = check_quiescent(alloc, {})) {
    *why = "non-empty metadata after drain:\n" + *d;
    return false;
  }
  return true;
}

template <class Alloc>
interleave_report checked_run(Alloc& alloc, const interleave_params& p,
                              bool deterministic_tail,
                              std::vector<std::pair<std::uint32_t, std::uint32_t>>*
                                  decision_log_out) {
  interleave_report rep;
  run_state sh(alloc.config());

  step_controller::options opts;
  opts.seed = p.seed ^ 0x5bd1e995c3ULL;
  opts.script = p.script;
  if (deterministic_tail) {
    // Stay on the last thread when possible: the baseline schedule has zero
    // preemptions and the explorer's branches add them one at a time.
    opts.chooser = [](const sched_view& v) {
      if (v.last != ~0u && ((v.candidates >> v.last) & 1)) return v.last;
      return static_cast<std::uint32_t>(std::countr_zero(v.candidates));
    };
  }
  if (p.check_boundary_quiescence) {
    opts.on_quiescent = [&alloc, &sh] {
      if (auto d = check_quiescent(alloc, sh.live_nodes())) {
        sh.fail_inline("metadata does not replay from the live set:\n" + *d);
        return false;
      }
      return true;
    };
  }
  step_controller ctl(p.threads, std::move(opts));

  std::vector<local_list> locals(p.threads);
  std::vector<std::function<void()>> bodies;
  bodies.reserve(p.threads);
  for (std::uint32_t t = 0; t < p.threads; ++t) {
    bodies.push_back([&, t] {
      churn_ops(alloc, sh, ctl, t, p.seed * 0x9e3779b97f4a7c15ULL + t + 1,
                p.ops_per_thread, locals[t], nullptr);
    });
  }
  run_workers(ctl, bodies);

  rep.decisions = ctl.decisions();
  rep.decision_count = rep.decisions.size();
  rep.grants = sh.grants.load();
  if (decision_log_out) *decision_log_out = ctl.decision_log();

  auto fail = [&](const std::string& why) {
    rep.ok = false;
    rep.detail = why + "\n" + ctl.dump_schedule();
  };
  std::string why;
  if (sh.failed.load()) {
    std::lock_guard lk(sh.mu);
    fail(sh.detail);
  } else if (ctl.stalled()) {
    fail("scheduler stalled");
  } else if (!ctl.witness_violations().empty()) {
    fail("spurious CAS retry: " + ctl.witness_violations().front());
  } else if (!ctl.pairing_ok(&why)) {
    fail("operation entry/exit pairing broken: " + why);
  } else if (!p.script.empty() && !ctl.script_followed()) {
    fail("schedule replay diverged from the script");
  } else if (!drain_and_check(alloc, sh, &why)) {
    fail(why);
  }
  return rep;
}

}  // namespace

interleave_report run_interleaved(const interleave_params& p) {
  const tree_config cfg = make_cfg(p.depth);
  return with_stepped_variant(p.variant, cfg, [&](auto& alloc) {
    return checked_run(alloc, p, /*deterministic_tail=*/false, nullptr);
  });
}

explore_report run_explore(const explore_params& p) {
  explore_report rep;
  const tree_config cfg = make_cfg(p.depth);
  std::vector<std::vector<std::uint32_t>> pending;
  pending.push_back({});

  while (!pending.empty()) {
    if (rep.schedules >= p.max_schedules) {
      rep.complete = false;
      break;
    }
    const std::vector<std::uint32_t> script = std::move(pending.back());
    pending.pop_back();

    interleave_params ip;
    ip.variant = p.variant;
    ip.threads = p.threads;
    ip.depth = p.depth;
    ip.ops_per_thread = p.ops_per_thread;
    ip.seed = p.seed;
    ip.script = script;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> dlog;
    const interleave_report r = with_stepped_variant(p.variant, cfg, [&](auto& alloc) {
      return checked_run(alloc, ip, /*deterministic_tail=*/true, &dlog);
    });
    ++rep.schedules;
    rep.decisions_total += r.decision_count;
    if (!r.ok) {
      rep.ok = false;
      rep.detail = r.detail;
      rep.failing_script = r.decisions;
      return rep;
    }

    // Branch on the unexplored suffix. A branch whose switch preempts a
    // still-runnable thread consumes preemption budget; staying on the same
    // thread or switching away from a parked-only state is free.
    std::uint32_t preempts = 0;
    std::uint32_t last = ~0u;
    for (std::size_t i = 0; i < dlog.size(); ++i) {
      const auto [chosen, mask] = dlog[i];
      if (i >= script.size()) {
        for (std::uint32_t alt = 0; alt < p.threads; ++alt) {
          if (alt == chosen || !((mask >> alt) & 1)) continue;
          const bool alt_preempts =
              last != ~0u && alt != last && ((mask >> last) & 1);
          if (preempts + (alt_preempts ? 1 : 0) > p.preemption_bound) continue;
          std::vector<std::uint32_t> branch(r.decisions.begin(),
                                            r.decisions.begin() + i);
          branch.push_back(alt);
          pending.push_back(std::move(branch));
        }
      }
      if (last != ~0u && chosen != last && ((mask >> last) & 1)) ++preempts;
      last = chosen;
    }
  }
  return rep;
}

// ---- solo progress ----------------------------------------------------------

const char* family_name(solo_family f) {
  switch (f) {
    case solo_family::mid_climb: return "mid-climb";
    case solo_family::mid_coal: return "mid-coal";
    case solo_family::mid_reset: return "mid-reset";
    case solo_family::anywhere: return "anywhere";
  }
  return "?";
}

namespace {

bool family_site(solo_family f, step_site s) {
  switch (f) {
    case solo_family::mid_climb:
      return s == step_site::climb_load || s == step_site::climb_cas;
    case solo_family::mid_coal:
      return s == step_site::coal_load || s == step_site::coal_cas;
    case solo_family::mid_reset:
      return s == step_site::node_reset_store || s == step_site::unmark_load ||
             s == step_site::unmark_cas;
    case solo_family::anywhere:
      return true;
  }
  return true;
}

template <class Alloc>
bool solo_once(Alloc& alloc, const solo_params& p, std::uint64_t seed,
               bool measure_alloc, solo_report& rep, std::string* why) {
  run_state sh(alloc.config());
  std::atomic<bool> stop{false};

  std::mt19937_64 arm_rng(seed ^ 0x2545f4914f6cdd1dULL);
  std::vector<std::uint64_t> arm_at(p.threads);
  for (auto& a : arm_at) a = 10 + arm_rng() % 120;

  step_controller::options opts;
  opts.seed = seed;
  opts.freeze_when = [&arm_at, fam = p.family](std::uint32_t t, const park_info& pi,
                                               std::uint64_t dispatched) {
    if (t == 0 || pi.at_boundary) return false;  // never freeze the survivor
    return dispatched >= arm_at[t] && family_site(fam, pi.ev.site);
  };
  step_controller ctl(p.threads, std::move(opts));

  std::uint64_t survivor_steps = 0;
  std::uint64_t survivor_budget = rep.budget;
  std::vector<std::function<void()>> bodies;
  bodies.push_back([&] {
    local_list local;
    std::mt19937_64 rng(seed + 1);
    // Keep the system churning until every rival is frozen or finished.
    for (std::uint32_t i = 0; i < 2048; ++i) {
      if (sh.failed.load(std::memory_order_relaxed)) break;
      if (ctl.frozen_count() + ctl.done_count() >= p.threads - 1) break;
      churn_ops(alloc, sh, ctl, 0, rng(), 1, local, nullptr);
    }
    // The measured operation: rivals are stopped wherever they were caught.
    const tree_config& cfg = alloc.config();
    std::uint64_t tl = cfg.depth;
    const std::uint64_t before = ctl.access_dispatches(0);
    if (measure_alloc || local.empty()) {
      do_alloc(alloc, sh, ctl, 0, cfg.min_size, static_cast<std::uint32_t>(rng()),
               local);
    } else {
      tl = target_level(local.back().second, cfg);
      do_free_newest(alloc, sh, ctl, 0, local);
    }
    survivor_steps = ctl.access_dispatches(0) - before;
    survivor_budget = 16 * (cfg.depth + (std::uint64_t{1} << tl));
    stop.store(true);
    ctl.thaw_all();
  });
  for (std::uint32_t t = 1; t < p.threads; ++t) {
    bodies.push_back([&, t] {
      local_list local;
      std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + t);
      for (std::uint32_t i = 0; i < 4096; ++i) {
        if (stop.load(std::memory_order_relaxed)) break;
        if (sh.failed.load(std::memory_order_relaxed)) break;
        churn_ops(alloc, sh, ctl, t, rng(), 1, local, &stop);
      }
    });
  }
  run_workers(ctl, bodies);

  auto fail = [&](const std::string& w) {
    std::ostringstream os;
    os << family_name(p.family) << " schedule (seed " << seed << "): " << w << "\n"
       << ctl.dump_schedule();
    *why = os.str();
    return false;
  };
  if (sh.failed.load()) return fail(sh.detail);
  if (ctl.stalled()) return fail("scheduler stalled");
  if (ctl.aborted()) return fail("run aborted (survivor likely stuck)");
  if (!ctl.witness_violations().empty())
    return fail("spurious CAS retry: " + ctl.witness_violations().front());
  std::string w;
  if (!ctl.pairing_ok(&w)) return fail("operation entry/exit pairing broken: " + w);
  if (survivor_steps > survivor_budget) {
    std::ostringstream os;
    os << "survivor needed " << survivor_steps << " access steps, budget "
       << survivor_budget;
    return fail(os.str());
  }
  rep.max_steps_used = std::max(rep.max_steps_used, survivor_steps);
  if (!drain_and_check(alloc, sh, &w)) return fail(w);
  return true;
}

}  // namespace

solo_report run_solo_progress(const solo_params& p) {
  solo_report rep;
  const tree_config cfg = make_cfg(p.depth);
  // Allowance for one complete operation: a full wrap-once scan of the leaf
  // level plus climbs, with an order of magnitude to spare.
  rep.budget = 16ULL * (p.depth + (std::uint64_t{1} << p.depth));
  std::mt19937_64 meta(p.seed);
  for (std::uint32_t s = 0; s < p.schedules; ++s) {
    const std::uint64_t run_seed = meta();
    std::string why;
    const bool ok = with_stepped_variant(p.variant, cfg, [&](auto& alloc) {
      return solo_once(alloc, p, run_seed, s % 2 == 0, rep, &why);
    });
    ++rep.schedules_run;
    if (!ok) {
      rep.ok = false;
      rep.detail = why;
      return rep;
    }
  }
  return rep;
}

// ---- named race scripts ------------------------------------------------------

namespace {

std::uint64_t count_posts(const std::vector<std::pair<std::uint32_t, step_event>>& tr,
                          std::uint32_t t, step_site site, std::uint64_t word,
                          int success /* -1 any, 0 failed, 1 succeeded */) {
  std::uint64_t n = 0;
  for (const auto& [tid, ev] : tr) {
    if (tid != t || ev.k != step_event::kind::access_post || ev.site != site ||
        ev.word != word)
      continue;
    if (success >= 0 && ev.cas_success != (success == 1)) continue;
    ++n;
  }
  return n;
}

struct sc_check {
  bool ok = true;
  std::ostringstream os;
  template <class A, class B>
  void eq(const A& a, const B& b, const char* what) {
    if (!(a == b)) {
      ok = false;
      os << "  " << what << ": expected " << b << ", got " << a << "\n";
    }
  }
  void require(bool cond, const char* what) {
    if (!cond) {
      ok = false;
      os << "  " << what << "\n";
    }
  }
};

template <class Alloc>
scenario_report finish_scenario(Alloc& alloc, step_controller& ctl, sc_check& ck,
                                const std::vector<std::uint64_t>& final_live,
                                const std::vector<std::uint64_t>& drain_offsets) {
  scenario_report rep;
  rep.decisions = ctl.decisions();
  if (auto d = check_quiescent(alloc, final_live))
    ck.require(false, ("final state does not replay:\n" + *d).c_str());
  std::string why;
  if (!ctl.pairing_ok(&why))
    ck.require(false, ("entry/exit pairing broken: " + why).c_str());
  ck.require(ctl.witness_violations().empty(), "spurious CAS retry recorded");
  ck.require(!ctl.stalled(), "scheduler stalled");
  for (const std::uint64_t offset : drain_offsets)
    ck.require(alloc.release(offset) == free_status::ok, "drain free rejected");
  if (auto d = check_quiescent(alloc, {}))
    ck.require(false, ("state after drain not empty:\n" + *d).c_str());
  if (!ck.ok) {
    rep.ok = false;
    rep.detail = ck.os.str() + ctl.dump_schedule();
  }
  return rep;
}

// A releasing thread parked on the side-bit clearing CAS loses the race to
// an allocation climbing through the same word: the climb sweeps the
// coalescing marker, the parked CAS must fail, and the release either
// retries on the refreshed word or stands revoked. Either way the final
// metadata must replay from the surviving allocation alone.
template <class Alloc>
scenario_report sc_unmark_handoff(Alloc& alloc, std::uint32_t t0_hint,
                                  std::uint32_t t1_hint, std::uint64_t t0_node,
                                  std::uint64_t t1_node, std::uint64_t race_word) {
  struct {
    bool latched = false;
  } st;
  step_controller::options opts;
  opts.chooser = [&st](const sched_view& v) {
    const bool t0 = v.candidates & 1u;
    if (t0 && !st.latched && !(*v.parked)[0].at_boundary &&
        (*v.parked)[0].ev.site == step_site::unmark_cas)
      st.latched = true;
    if (!st.latched) return t0 ? 0u : 1u;
    return (v.candidates & 2u) ? 1u : 0u;
  };
  step_controller ctl(2, std::move(opts));

  const std::uint64_t min_size = alloc.config().min_size;
  alloc_result r0, r1;
  free_status f0 = free_status::invalid_address;
  run_workers(ctl, {
                       [&] {
                         r0 = alloc.allocate(min_size, t0_hint);
                         if (r0) f0 = alloc.release(r0.offset);
                       },
                       [&] { r1 = alloc.allocate(min_size, t1_hint); },
                   });

  sc_check ck;
  ck.require(static_cast<bool>(r0), "first allocation failed");
  ck.eq(r0.node, t0_node, "first allocation node");
  ck.require(f0 == free_status::ok, "release rejected");
  ck.require(static_cast<bool>(r1), "competing allocation failed");
  ck.eq(r1.node, t1_node, "competing allocation node");
  ck.require(st.latched, "release never parked on the clearing CAS");
  ck.eq(count_posts(ctl.trace_copy(), 0, step_site::unmark_cas, race_word, 0),
        std::uint64_t{1}, "failed clearing CAS count");
  return finish_scenario(alloc, ctl, ck, {t1_node}, {r1.offset});
}

// A node is visibly free exactly when its reset lands: an allocation racing
// ahead of the parked reset exhausts, the same request after the reset
// succeeds on the same node.
template <class Alloc>
scenario_report sc_reset_visibility(Alloc& alloc) {
  struct {
    int phase = 0;
    std::uint32_t t1_boundaries = 0;
  } st;
  step_controller::options opts;
  opts.chooser = [&st](const sched_view& v) -> std::uint32_t {
    const bool t0 = v.candidates & 1u;
    const bool t1 = v.candidates & 2u;
    if (st.phase == 0) {
      if (t0 && !(*v.parked)[0].at_boundary &&
          (*v.parked)[0].ev.site == step_site::node_reset_store) {
        st.phase = 1;
      } else {
        return t0 ? 0u : 1u;
      }
    }
    if (st.phase == 1) {
      if (t1 && (*v.parked)[1].at_boundary && st.t1_boundaries == 1) {
        st.phase = 2;  // hold the second attempt until the reset lands
      } else if (t1) {
        if ((*v.parked)[1].at_boundary) ++st.t1_boundaries;
        return 1u;
      } else {
        st.phase = 2;
      }
    }
    if (st.phase == 2) {
      if (t0) return 0u;
      st.phase = 3;
    }
    return t1 ? 1u : 0u;
  };
  step_controller ctl(2, std::move(opts));

  const std::uint64_t whole = alloc.config().total_size;
  alloc_result r0, r1, r2;
  free_status f0 = free_status::invalid_address;
  run_workers(ctl, {
                       [&] {
                         r0 = alloc.allocate(whole, 0);
                         if (r0) f0 = alloc.release(r0.offset);
                       },
                       [&] {
                         r1 = alloc.allocate(whole, 0);
                         r2 = alloc.allocate(whole, 0);
                       },
                   });

  sc_check ck;
  ck.require(static_cast<bool>(r0), "setup allocation failed");
  ck.eq(r0.node, std::uint64_t{1}, "setup allocation node");
  ck.require(f0 == free_status::ok, "release rejected");
  ck.require(st.phase >= 2, "release never parked before its reset");
  ck.require(r1.status == alloc_status::exhausted,
             "allocation before the reset should exhaust");
  ck.require(static_cast<bool>(r2), "allocation after the reset failed");
  ck.eq(r2.node, std::uint64_t{1}, "post-reset allocation node");
  return finish_scenario(alloc, ctl, ck, {std::uint64_t{1}}, {r2.offset});
}

// Releasing next to a live buddy stops the upward flagging at the first
// occupied sibling: exactly one flag CAS and one clearing CAS on the shared
// word, and the untouched ancestors keep serving the survivor.
template <class Alloc>
scenario_report sc_early_stop(Alloc& alloc, std::uint32_t t0_hint, std::uint32_t t1_hint,
                              std::uint64_t t0_node, std::uint64_t t1_node,
                              std::uint64_t stop_word, std::uint64_t parent_word) {
  struct {
    int phase = 0;
    std::uint32_t t0_boundaries = 0;
  } st;
  step_controller::options opts;
  opts.chooser = [&st](const sched_view& v) -> std::uint32_t {
    const bool t0 = v.candidates & 1u;
    const bool t1 = v.candidates & 2u;
    if (st.phase == 0) {
      if (t0 && (*v.parked)[0].at_boundary && st.t0_boundaries == 1) {
        st.phase = 1;  // the setup allocation is done; hold the release
      } else if (t0) {
        if ((*v.parked)[0].at_boundary) ++st.t0_boundaries;
        return 0u;
      } else {
        st.phase = 1;
      }
    }
    if (st.phase == 1) {
      if (t1) return 1u;
      st.phase = 2;
    }
    return t0 ? 0u : 1u;
  };
  step_controller ctl(2, std::move(opts));

  const std::uint64_t min_size = alloc.config().min_size;
  alloc_result r0, r1;
  free_status f0 = free_status::invalid_address;
  run_workers(ctl, {
                       [&] {
                         r0 = alloc.allocate(min_size, t0_hint);
                         if (r0) f0 = alloc.release(r0.offset);
                       },
                       [&] { r1 = alloc.allocate(min_size, t1_hint); },
                   });

  sc_check ck;
  ck.require(static_cast<bool>(r0), "released allocation failed");
  ck.eq(r0.node, t0_node, "released allocation node");
  ck.require(f0 == free_status::ok, "release rejected");
  ck.require(static_cast<bool>(r1), "surviving allocation failed");
  ck.eq(r1.node, t1_node, "surviving allocation node");
  const auto tr = ctl.trace_copy();
  ck.eq(count_posts(tr, 0, step_site::coal_cas, stop_word, 1), std::uint64_t{1},
        "flag CAS count at the occupied sibling");
  ck.eq(count_posts(tr, 0, step_site::unmark_cas, stop_word, 1), std::uint64_t{1},
        "clearing CAS count at the occupied sibling");
  if (parent_word != ~std::uint64_t{0}) {
    ck.eq(count_posts(tr, 0, step_site::coal_cas, parent_word, -1), std::uint64_t{0},
          "flag CAS count above the early stop");
    ck.eq(count_posts(tr, 0, step_site::unmark_cas, parent_word, -1), std::uint64_t{0},
          "clearing CAS count above the early stop");
  }
  return finish_scenario(alloc, ctl, ck, {t1_node}, {r1.offset});
}

}  // namespace

std::vector<std::string> scenario_names() {
  return {"unmark-handoff", "reset-visibility", "early-stop"};
}

scenario_report run_named_scenario(const std::string& name, variant_kind v) {
  const bool flat = v == variant_kind::flat_nb;
  if (name == "unmark-handoff") {
    // Flat: leaves 4 and 5 under one parent at depth 2. Packed: leaves 32
    // and 33 share their cross-tile entry slot at depth 5.
    const tree_config cfg = make_cfg(flat ? 2 : 5);
    return with_stepped_variant(v, cfg, [&](auto& alloc) {
      return flat ? sc_unmark_handoff(alloc, 0, 1, 4, 5, 2)
                  : sc_unmark_handoff(alloc, 0, 1, 32, 33, 0);
    });
  }
  if (name == "reset-visibility") {
    const tree_config cfg = make_cfg(1);
    return with_stepped_variant(v, cfg,
                                [&](auto& alloc) { return sc_reset_visibility(alloc); });
  }
  if (name == "early-stop") {
    // Flat: buddy leaves 4/5, stop word 2, parent 1 untouched. Packed:
    // leaves 32/34 in sibling subtrees; the shared entry tile is word 0 and
    // there is no physical word above it.
    const tree_config cfg = make_cfg(flat ? 2 : 5);
    return with_stepped_variant(v, cfg, [&](auto& alloc) {
      return flat ? sc_early_stop(alloc, 0, 1, 4, 5, 2, 1)
                  : sc_early_stop(alloc, 0, 2, 32, 34, 0, ~std::uint64_t{0});
    });
  }
  scenario_report rep;
  rep.ok = false;
  rep.detail = "unknown scenario: " + name;
  return rep;
}

}  // namespace nbuddy::verify
