#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "nbuddy/access.hpp"
#include "nbuddy/locked_allocator.hpp"
#include "nbuddy/packed_allocator.hpp"
#include "nbuddy/tree_allocator.hpp"

namespace nbuddy::verify {

// The four allocator builds the tools operate on: flat or packed metadata,
// each in the non-blocking and the spin-lock build.
enum class variant_kind { flat_nb, packed_nb, flat_lock, packed_lock };

inline const char* variant_name(variant_kind v) {
  switch (v) {
    case variant_kind::flat_nb: return "1lvl-nb";
    case variant_kind::packed_nb: return "4lvl-nb";
    case variant_kind::flat_lock: return "1lvl-sl";
    case variant_kind::packed_lock: return "4lvl-sl";
  }
  return "?";
}

inline variant_kind parse_variant(const std::string& s) {
  if (s == "1lvl-nb") return variant_kind::flat_nb;
  if (s == "4lvl-nb") return variant_kind::packed_nb;
  if (s == "1lvl-sl") return variant_kind::flat_lock;
  if (s == "4lvl-sl") return variant_kind::packed_lock;
  throw std::invalid_argument("unknown variant: " + s +
                              " (expected 1lvl-nb, 4lvl-nb, 1lvl-sl or 4lvl-sl)");
}

inline bool is_nonblocking(variant_kind v) {
  return v == variant_kind::flat_nb || v == variant_kind::packed_nb;
}

// Builds the chosen allocator and hands it to f as the concrete type, so
// callers stay monomorphic without spelling out four overloads.
template <class F>
decltype(auto) with_variant(variant_kind v, const tree_config& cfg, F&& f) {
  switch (v) {
    case variant_kind::flat_nb: {
      tree_allocator<> a(cfg);
      return std::forward<F>(f)(a);
    }
    case variant_kind::packed_nb: {
      packed_allocator<> a(cfg);
      return std::forward<F>(f)(a);
    }
    case variant_kind::flat_lock: {
      locked_tree_allocator a(cfg);
      return std::forward<F>(f)(a);
    }
    case variant_kind::packed_lock: {
      locked_packed_allocator a(cfg);
      return std::forward<F>(f)(a);
    }
  }
  throw std::logic_error("unreachable variant");
}

// Same, but with the interposition-enabled build of the non-blocking
// allocators (the only ones whose interleavings the controller schedules).
template <class F>
decltype(auto) with_stepped_variant(variant_kind v, const tree_config& cfg, F&& f) {
  switch (v) {
    case variant_kind::flat_nb: {
      tree_allocator<stepped_access> a(cfg);
      return std::forward<F>(f)(a);
    }
    case variant_kind::packed_nb: {
      packed_allocator<stepped_access> a(cfg);
      return std::forward<F>(f)(a);
    }
    default:
      throw std::invalid_argument(
          "interleaving control requires a non-blocking variant");
  }
}

}  // namespace nbuddy::verify
