#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>

#include "nbuddy/config.hpp"
#include "nbuddy/geometry.hpp"

namespace nbuddy::verify {

// Concurrent ownership map over the managed range, one atomic tag per
// min_size unit. Threads claim the units of each grant the moment the
// allocator returns it and clear them just before handing the chunk back.
// Any claim that finds a unit already tagged is a live overlap between two
// outstanding grants, i.e. a safety violation, reported with both tags.
//
// claim() also pins down the grant contract itself: the granted size must be
// the power-of-two bucket for the request and the offset must be aligned to
// the granted size within the managed span.
class live_registry {
 public:
  explicit live_registry(const tree_config& cfg)
      : cfg_(cfg), units_(new std::atomic<std::uint32_t>[cfg.leaf_count()]()) {}

  // tag must be nonzero and should identify the claiming thread.
  // Returns true on success; on violation fills *why and leaves the registry
  // as it was before the call.
  bool claim(const alloc_result& r, std::uint64_t requested, std::uint32_t tag,
             std::string* why) {
    if (r.size != bucket_for(requested)) {
      fail(why) << "grant size " << r.size << " for request " << requested
                << ", expected bucket " << bucket_for(requested);
      return false;
    }
    const std::uint64_t rel = r.offset - cfg_.base_offset;
    if (r.offset < cfg_.base_offset || rel + r.size > cfg_.total_size) {
      fail(why) << "grant [" << r.offset << ", +" << r.size
                << ") outside managed range";
      return false;
    }
    if (rel % r.size != 0) {
      fail(why) << "offset " << r.offset << " not aligned to granted size "
                << r.size;
      return false;
    }
    const std::uint64_t first = rel / cfg_.min_size;
    const std::uint64_t n = r.size / cfg_.min_size;
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t expected = 0;
      if (!units_[first + i].compare_exchange_strong(expected, tag)) {
        fail(why) << "overlap at offset "
                  << cfg_.base_offset + (first + i) * cfg_.min_size
                  << ": grant [" << r.offset << ", +" << r.size << ") by tag "
                  << tag << " collides with live grant by tag " << expected;
        while (i-- > 0) units_[first + i].store(0);
        return false;
      }
    }
    return true;
  }

  // Clears a previous claim. Returns false (with *why) if some unit was not
  // tagged as expected, which means the registry and allocator disagree on
  // who owns the chunk.
  bool release(std::uint64_t offset, std::uint64_t size, std::uint32_t tag,
               std::string* why) {
    const std::uint64_t first = (offset - cfg_.base_offset) / cfg_.min_size;
    for (std::uint64_t i = 0; i < size / cfg_.min_size; ++i) {
      const std::uint32_t old = units_[first + i].exchange(0);
      if (old != tag) {
        fail(why) << "release of [" << offset << ", +" << size << ") by tag "
                  << tag << " found unit " << first + i << " tagged " << old;
        return false;
      }
    }
    return true;
  }

  // Number of currently claimed units (quiescent use only).
  std::uint64_t claimed_units() const {
    std::uint64_t n = 0;
    for (std::uint64_t i = 0; i < cfg_.leaf_count(); ++i)
      if (units_[i].load() != 0) ++n;
    return n;
  }

  std::uint64_t bucket_for(std::uint64_t requested) const {
    return cfg_.total_size >> target_level(requested, cfg_);
  }

 private:
  struct fail {
    explicit fail(std::string* out) : out_(out) {}
    ~fail() {
      if (out_) *out_ = os.str();
    }
    template <class T>
    fail& operator<<(const T& v) {
      os << v;
      return *this;
    }
    std::ostringstream os;
    std::string* out_;
  };

  tree_config cfg_;
  std::unique_ptr<std::atomic<std::uint32_t>[]> units_;
};

}  // namespace nbuddy::verify
