#include "nbuddy/verify/sched.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace nbuddy::verify {

step_controller::step_controller(std::uint32_t threads, options opt)
    : n_(threads),
      opt_(std::move(opt)),
      sinks_(threads),
      state_(threads, tstate::unstarted),
      parked_(threads),
      released_(threads, false),
      freeze_mark_(threads, ~std::uint64_t{0}),
      loose_(threads),  // unstarted threads count as in motion
      rng_(opt_.seed),
      dispatches_(threads, 0),
      access_dispatches_(threads, 0),
      last_seen_(threads),
      fn_stack_(threads),
      enter_count_(8, 0),
      exit_count_(8, 0) {
  if (threads == 0 || threads > 32)
    throw std::invalid_argument("step_controller: thread count must be in [1, 32]");
}

step_sink* step_controller::sink(std::uint32_t t) {
  sinks_[t].c = this;
  sinks_[t].t = t;
  return &sinks_[t];
}

void step_controller::worker_begin(std::uint32_t t) {
  std::lock_guard lk(mu_);
  state_[t] = tstate::loose;  // loose_ already accounts for unstarted threads
}

void step_controller::worker_end(std::uint32_t t) {
  std::lock_guard lk(mu_);
  // After an abort a thread may arrive here straight from a park, in which
  // case it was never re-counted as loose.
  if (state_[t] == tstate::loose || state_[t] == tstate::unstarted) --loose_;
  state_[t] = tstate::done;
  if (!fn_stack_[t].empty() && pairing_violation_.empty()) {
    std::ostringstream os;
    os << "thread " << t << " finished with " << fn_stack_[t].size()
       << " unbalanced operation frame(s)";
    pairing_violation_ = os.str();
  }
  try_dispatch();
  cv_.notify_all();
}

void step_controller::freeze_after(std::uint32_t t, std::uint64_t dispatches) {
  std::lock_guard lk(mu_);
  freeze_mark_[t] = dispatches_[t] + dispatches;
}

void step_controller::thaw(std::uint32_t t) {
  std::lock_guard lk(mu_);
  freeze_mark_[t] = ~std::uint64_t{0};
  if (state_[t] == tstate::frozen) state_[t] = tstate::parked;
  try_dispatch();
  cv_.notify_all();
}

void step_controller::thaw_all() {
  std::lock_guard lk(mu_);
  freezing_enabled_ = false;  // also disables any freeze_when predicate
  for (std::uint32_t t = 0; t < n_; ++t) {
    freeze_mark_[t] = ~std::uint64_t{0};
    if (state_[t] == tstate::frozen) state_[t] = tstate::parked;
  }
  try_dispatch();
  cv_.notify_all();
}

void step_controller::abort_run() {
  std::lock_guard lk(mu_);
  abort_ = true;
  cv_.notify_all();
}

bool step_controller::aborted() const {
  std::lock_guard lk(mu_);
  return abort_;
}

bool step_controller::stalled() const {
  std::lock_guard lk(mu_);
  return stalled_;
}

bool step_controller::should_freeze(std::uint32_t t) const {
  return dispatches_[t] >= freeze_mark_[t];
}

void step_controller::on_event(std::uint32_t t, const step_event& ev) {
  switch (ev.k) {
    case step_event::kind::access_pre:
      gate(t, ev, /*boundary=*/false);
      break;
    case step_event::kind::access_post:
      record_post(t, ev);
      break;
    case step_event::kind::fn_enter:
      // Only top-level entries are scheduling points; while parked there the
      // thread provably has no operation in flight, which is what the
      // quiescence callback keys on.
      if (fn_stack_[t].empty()) gate(t, ev, /*boundary=*/true);
      note_fn(t, ev);
      break;
    case step_event::kind::fn_exit:
      note_fn(t, ev);
      break;
  }
}

void step_controller::gate(std::uint32_t t, const step_event& ev, bool boundary) {
  std::unique_lock lk(mu_);
  if (abort_) return;
  parked_[t] = {boundary, ev};
  const bool freeze =
      freezing_enabled_ &&
      (should_freeze(t) ||
       (opt_.freeze_when && opt_.freeze_when(t, parked_[t], dispatches_[t])));
  state_[t] = freeze ? tstate::frozen : tstate::parked;
  --loose_;
  try_dispatch();
  cv_.notify_all();
  cv_.wait(lk, [&] { return abort_ || released_[t]; });
  released_[t] = false;
  if (!abort_ && trace_.size() < opt_.trace_limit) trace_.push_back({t, ev});
}

void step_controller::try_dispatch() {
  if (abort_ || loose_ != 0) return;

  std::uint32_t candidates = 0;
  bool all_done = true;
  bool all_at_boundary = true;
  for (std::uint32_t t = 0; t < n_; ++t) {
    switch (state_[t]) {
      case tstate::parked:
        candidates |= 1u << t;
        all_done = false;
        if (!parked_[t].at_boundary) all_at_boundary = false;
        break;
      case tstate::frozen:
        all_done = false;
        if (!parked_[t].at_boundary) all_at_boundary = false;
        break;
      case tstate::done:
        break;
      case tstate::loose:
      case tstate::unstarted:
        return;  // defensive; loose_ == 0 should preclude this
    }
  }
  if (all_done) return;

  if (opt_.on_quiescent && quiescent_dirty_ && all_at_boundary) {
    quiescent_dirty_ = false;
    if (!opt_.on_quiescent()) {
      abort_ = true;
      cv_.notify_all();
      return;
    }
  }

  if (candidates == 0) {
    // Every remaining thread is frozen: the run cannot advance. Record the
    // stall and open the gates so joins complete.
    stalled_ = true;
    abort_ = true;
    cv_.notify_all();
    return;
  }

  std::uint32_t chosen = ~0u;
  if (script_pos_ < opt_.script.size()) {
    const std::uint32_t want = opt_.script[script_pos_++];
    if (want < n_ && (candidates & (1u << want))) {
      chosen = want;
    } else {
      script_infeasible_ = true;
    }
  } else if (opt_.chooser) {
    sched_view view;
    view.candidates = candidates;
    view.last = last_;
    view.parked = &parked_;
    view.dispatches = &dispatches_;
    const std::uint32_t want = opt_.chooser(view);
    if (want < n_ && (candidates & (1u << want))) {
      chosen = want;
    } else {
      script_infeasible_ = true;
    }
  }
  if (chosen == ~0u) {
    std::uint32_t pool[32];
    std::uint32_t k = 0;
    for (std::uint32_t t = 0; t < n_; ++t)
      if (candidates & (1u << t)) pool[k++] = t;
    chosen = k == 1 ? pool[0]
                    : pool[static_cast<std::uint32_t>(rng_() % k)];
  }

  decisions_.push_back(chosen);
  decision_log_.emplace_back(chosen, candidates);
  ++dispatches_[chosen];
  if (!parked_[chosen].at_boundary) ++access_dispatches_[chosen];
  last_ = chosen;
  quiescent_dirty_ = true;
  state_[chosen] = tstate::loose;
  ++loose_;
  released_[chosen] = true;
  if (trace_.size() >= opt_.trace_limit) {
    witness_violations_.push_back("trace limit exceeded; run aborted");
    abort_ = true;
  }
  cv_.notify_all();
}

void step_controller::record_post(std::uint32_t t, const step_event& ev) {
  std::lock_guard lk(mu_);
  if (abort_) return;
  if (trace_.size() < opt_.trace_limit) trace_.push_back({t, ev});

  const std::uint64_t k = word_key(ev);
  if (ev.cas_success || ev.op == step_op::store) {
    // Successful CAS or plain store: the word changed.
    ++version_[k];
  } else if (ev.op == step_op::cas) {
    // Failed CAS: lock-freedom hinges on some other thread having changed
    // the word since this thread last observed it.
    auto& ver = version_[k];
    auto it = last_seen_[t].find(k);
    if (it != last_seen_[t].end() && it->second == ver &&
        witness_violations_.size() < 64) {
      std::ostringstream os;
      os << "thread " << t << " retried " << site_name(ev.site) << " on "
         << (ev.space == step_space::tree_word ? "tree" : "index") << "["
         << ev.word << "] with no intervening modification";
      witness_violations_.push_back(os.str());
    }
  }
  last_seen_[t][k] = version_[k];
}

void step_controller::note_fn(std::uint32_t t, const step_event& ev) {
  std::lock_guard lk(mu_);
  const auto fi = static_cast<std::size_t>(ev.fn);
  if (ev.k == step_event::kind::fn_enter) {
    ++enter_count_[fi];
    fn_stack_[t].push_back(ev.fn);
  } else {
    ++exit_count_[fi];
    if (fn_stack_[t].empty() || fn_stack_[t].back() != ev.fn) {
      if (pairing_violation_.empty()) {
        std::ostringstream os;
        os << "thread " << t << " exited " << fn_name(ev.fn)
           << " without matching entry";
        pairing_violation_ = os.str();
      }
    } else {
      fn_stack_[t].pop_back();
    }
  }
}

bool step_controller::pairing_ok(std::string* why) const {
  std::lock_guard lk(mu_);
  if (!pairing_violation_.empty()) {
    if (why) *why = pairing_violation_;
    return false;
  }
  for (std::size_t f = 0; f < enter_count_.size(); ++f) {
    if (enter_count_[f] != exit_count_[f]) {
      if (why) {
        std::ostringstream os;
        os << fn_name(static_cast<step_fn>(f)) << ": " << enter_count_[f]
           << " entries vs " << exit_count_[f] << " exits";
        *why = os.str();
      }
      return false;
    }
  }
  return true;
}

std::uint32_t step_controller::frozen_count() const {
  std::lock_guard lk(mu_);
  std::uint32_t n = 0;
  for (const tstate s : state_)
    if (s == tstate::frozen) ++n;
  return n;
}

std::uint32_t step_controller::done_count() const {
  std::lock_guard lk(mu_);
  std::uint32_t n = 0;
  for (const tstate s : state_)
    if (s == tstate::done) ++n;
  return n;
}

std::vector<std::pair<std::uint32_t, step_event>> step_controller::trace_copy() const {
  std::lock_guard lk(mu_);
  std::vector<std::pair<std::uint32_t, step_event>> out;
  out.reserve(trace_.size());
  for (const auto& e : trace_) out.emplace_back(e.t, e.ev);
  return out;
}

std::string step_controller::dump_schedule(std::uint64_t tail) const {
  std::lock_guard lk(mu_);
  std::ostringstream os;
  os << "threads=" << n_ << " decisions=" << decisions_.size();
  for (std::uint32_t t = 0; t < n_; ++t)
    os << " t" << t << "=" << dispatches_[t];
  if (stalled_) os << " STALLED";
  os << "\ndecision sequence:";
  const std::size_t cap = 4096;
  for (std::size_t i = 0; i < decisions_.size() && i < cap; ++i)
    os << (i % 64 == 0 ? "\n  " : " ") << decisions_[i];
  if (decisions_.size() > cap) os << "\n  ... " << decisions_.size() - cap << " more";
  os << "\nlast events:\n";
  const std::uint64_t n = trace_.size();
  for (std::uint64_t i = n > tail ? n - tail : 0; i < n; ++i) {
    const auto& e = trace_[i];
    os << "  t" << e.t << " ";
    switch (e.ev.k) {
      case step_event::kind::access_pre:
        os << "pre  " << site_name(e.ev.site);
        break;
      case step_event::kind::access_post:
        os << "post " << site_name(e.ev.site)
           << (e.ev.op == step_op::load ? "" : (e.ev.cas_success ? " ok" : " fail"));
        break;
      case step_event::kind::fn_enter:
        os << "enter " << fn_name(e.ev.fn);
        break;
      case step_event::kind::fn_exit:
        os << "exit  " << fn_name(e.ev.fn);
        break;
    }
    if (e.ev.k == step_event::kind::access_pre || e.ev.k == step_event::kind::access_post)
      os << " " << (e.ev.space == step_space::tree_word ? "tree" : "index") << "["
         << e.ev.word << "]";
    os << "\n";
  }
  return os.str();
}

void run_workers(step_controller& c, const std::vector<std::function<void()>>& bodies) {
  std::vector<std::thread> threads;
  threads.reserve(bodies.size());
  for (std::uint32_t t = 0; t < bodies.size(); ++t) {
    threads.emplace_back([&c, &bodies, t] {
      c.worker_begin(t);
      {
        step_scope scope(c.sink(t));
        bodies[t]();
      }
      c.worker_end(t);
    });
  }
  for (auto& th : threads) th.join();
}

void save_schedule(const std::string& path, const std::vector<std::uint32_t>& decisions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write schedule file: " + path);
  out << "# one dispatched thread ordinal per line\n";
  for (const std::uint32_t d : decisions) out << d << "\n";
}

std::vector<std::uint32_t> load_schedule(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read schedule file: " + path);
  std::vector<std::uint32_t> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t");
    if (pos == std::string::npos || line[pos] == '#') continue;
    out.push_back(static_cast<std::uint32_t>(std::stoul(line.substr(pos))));
  }
  return out;
}

const char* site_name(step_site s) {
  switch (s) {
    case step_site::scan_load: return "scan_load";
    case step_site::occupy_cas: return "occupy_cas";
    case step_site::climb_load: return "climb_load";
    case step_site::climb_cas: return "climb_cas";
    case step_site::coal_load: return "coal_load";
    case step_site::coal_cas: return "coal_cas";
    case step_site::node_reset_store: return "node_reset";
    case step_site::unmark_load: return "unmark_load";
    case step_site::unmark_cas: return "unmark_cas";
    case step_site::index_store: return "index_store";
    case step_site::index_load: return "index_load";
  }
  return "?";
}

const char* fn_name(step_fn f) {
  switch (f) {
    case step_fn::alloc: return "alloc";
    case step_fn::release: return "release";
    case step_fn::try_alloc: return "try_alloc";
    case step_fn::free_node: return "free_node";
    case step_fn::unmark: return "unmark";
  }
  return "?";
}

}  // namespace nbuddy::verify
