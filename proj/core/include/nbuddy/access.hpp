#pragma once

#include <atomic>
#include <cstdint>

namespace nbuddy {

// Allocators are templates over an access policy so the verification
// harness can interpose on every shared-word operation.  direct_access
// compiles to plain atomics; stepped_access routes each operation through
// a thread-local sink that a test controller installs.  Production targets
// instantiate direct_access only, so interposition has zero footprint there.

enum class step_site : std::uint8_t {
  scan_load,         // candidate word read during the level scan
  occupy_cas,        // 0 -> busy CAS on the node being claimed
  climb_load,        // ancestor read on the allocation climb
  climb_cas,         // mark + clean-coalescing CAS on the allocation climb
  coal_load,         // ancestor read while flagging an in-flight release
  coal_cas,          // coalescing-bit OR CAS on the release climb
  node_reset_store,  // the store that actually frees the node
  unmark_load,       // ancestor read on the side-bit clearing climb
  unmark_cas,        // side-bit clearing CAS
  index_store,       // offset -> node registration on grant
  index_load,        // offset -> node lookup on release
};

enum class step_fn : std::uint8_t { alloc, release, try_alloc, free_node, unmark };

enum class step_space : std::uint8_t { tree_word, index_slot };

// What the access physically is; sites name the protocol step, and a site
// may issue both the read and the read-modify-write of a retry loop.
enum class step_op : std::uint8_t { load, cas, store };

struct step_event {
  enum class kind : std::uint8_t { access_pre, access_post, fn_enter, fn_exit } k;
  step_site site = step_site::scan_load;
  step_space space = step_space::tree_word;
  step_op op = step_op::load;
  std::uint64_t word = 0;        // node index, bunch id, or slot index
  bool cas_success = false;      // access_post of cas ops only
  step_fn fn = step_fn::alloc;   // fn_enter / fn_exit only
};

struct step_sink {
  virtual void on_event(const step_event& ev) = 0;

 protected:
  ~step_sink() = default;
};

// Sink installed for the calling thread; null means pass-through.
inline thread_local step_sink* t_step_sink = nullptr;

struct step_scope {
  explicit step_scope(step_sink* s) : prev(t_step_sink) { t_step_sink = s; }
  ~step_scope() { t_step_sink = prev; }
  step_sink* prev;
};

struct direct_access {
  static constexpr bool stepped = false;

  static std::uint64_t load(const std::atomic<std::uint64_t>& w, std::memory_order mo,
                            step_site, step_space, std::uint64_t) {
    return w.load(mo);
  }
  static bool cas(std::atomic<std::uint64_t>& w, std::uint64_t& expected,
                  std::uint64_t desired, step_site, step_space, std::uint64_t) {
    return w.compare_exchange_strong(expected, desired);
  }
  static void store(std::atomic<std::uint64_t>& w, std::uint64_t v, std::memory_order mo,
                    step_site, step_space, std::uint64_t) {
    w.store(v, mo);
  }

  struct fn_guard {
    explicit fn_guard(step_fn) {}
  };
};

struct stepped_access {
  static constexpr bool stepped = true;

  static void emit(const step_event& ev) {
    if (t_step_sink) t_step_sink->on_event(ev);
  }
  static std::uint64_t load(const std::atomic<std::uint64_t>& w, std::memory_order mo,
                            step_site site, step_space space, std::uint64_t word) {
    emit({step_event::kind::access_pre, site, space, step_op::load, word, false,
          step_fn::alloc});
    const std::uint64_t v = w.load(mo);
    emit({step_event::kind::access_post, site, space, step_op::load, word, false,
          step_fn::alloc});
    return v;
  }
  static bool cas(std::atomic<std::uint64_t>& w, std::uint64_t& expected,
                  std::uint64_t desired, step_site site, step_space space,
                  std::uint64_t word) {
    emit({step_event::kind::access_pre, site, space, step_op::cas, word, false,
          step_fn::alloc});
    const bool ok = w.compare_exchange_strong(expected, desired);
    emit({step_event::kind::access_post, site, space, step_op::cas, word, ok,
          step_fn::alloc});
    return ok;
  }
  static void store(std::atomic<std::uint64_t>& w, std::uint64_t v, std::memory_order mo,
                    step_site site, step_space space, std::uint64_t word) {
    emit({step_event::kind::access_pre, site, space, step_op::store, word, false,
          step_fn::alloc});
    w.store(v, mo);
    emit({step_event::kind::access_post, site, space, step_op::store, word, true,
          step_fn::alloc});
  }

  struct fn_guard {
    explicit fn_guard(step_fn f) : fn(f) {
      emit({step_event::kind::fn_enter, step_site::scan_load, step_space::tree_word,
            step_op::load, 0, false, fn});
    }
    ~fn_guard() {
      emit({step_event::kind::fn_exit, step_site::scan_load, step_space::tree_word,
            step_op::load, 0, false, fn});
    }
    step_fn fn;
  };
};

}  // namespace nbuddy
