#include "nbuddy/verify/differential.hpp"

#include <bit>
#include <random>
#include <sstream>

namespace nbuddy::verify {
namespace {

const char* status_name(alloc_status s) {
  switch (s) {
    case alloc_status::ok: return "ok";
    case alloc_status::exhausted: return "exhausted";
    case alloc_status::too_large: return "too_large";
  }
  return "?";
}

std::string describe(const alloc_result& r) {
  std::ostringstream os;
  os << status_name(r.status);
  if (r) os << " offset=" << r.offset << " node=" << r.node << " size=" << r.size;
  return os.str();
}

bool same(const alloc_result& a, const alloc_result& b) {
  return a.status == b.status && a.offset == b.offset && a.node == b.node &&
         a.size == b.size;
}

}  // namespace

trace_report run_differential(std::vector<subject>& subjects, const tree_config& cfg,
                              std::uint64_t seed, std::uint64_t steps, bool drain) {
  trace_report rep;
  if (subjects.empty()) return rep;
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> live;  // offsets, identical across subjects

  // Log-uniform-ish sizes: level first, then uniform within it, ranging one
  // doubling past max_size so the oversize rejection stays exercised.
  const std::uint32_t max_exp =
      static_cast<std::uint32_t>(std::bit_width(cfg.max_size));
  auto next_size = [&] {
    const std::uint32_t e = static_cast<std::uint32_t>(rng() % (max_exp + 1));
    return 1 + rng() % (std::uint64_t{1} << e);
  };

  auto diverge = [&](std::uint64_t step, const std::string& op,
                     const std::vector<std::string>& outcomes) {
    std::ostringstream os;
    os << "step " << step << ": " << op << " diverged:";
    for (std::size_t i = 0; i < subjects.size(); ++i)
      os << " [" << subjects[i].name << ": " << outcomes[i] << "]";
    rep.ok = false;
    rep.detail = os.str();
  };

  auto run_free = [&](std::uint64_t step, std::size_t idx) {
    const std::uint64_t offset = live[idx];
    for (auto& s : subjects) {
      if (s.release(offset) != free_status::ok) {
        rep.ok = false;
        std::ostringstream os;
        os << "step " << step << ": free(" << offset << ") rejected by " << s.name;
        rep.detail = os.str();
        return;
      }
    }
    live[idx] = live.back();
    live.pop_back();
    ++rep.frees;
  };

  for (std::uint64_t step = 0; step < steps && rep.ok; ++step) {
    ++rep.steps;
    const bool do_alloc = live.empty() || rng() % 100 < 55;
    if (do_alloc) {
      const std::uint64_t size = next_size();
      const std::uint32_t hint = static_cast<std::uint32_t>(rng());
      std::vector<alloc_result> rs;
      rs.reserve(subjects.size());
      for (auto& s : subjects) rs.push_back(s.alloc(size, hint));
      for (std::size_t i = 1; i < rs.size(); ++i) {
        if (!same(rs[0], rs[i])) {
          std::vector<std::string> outcomes;
          for (const auto& r : rs) outcomes.push_back(describe(r));
          std::ostringstream op;
          op << "alloc(size=" << size << ", hint=" << hint << ")";
          diverge(step, op.str(), outcomes);
          break;
        }
      }
      if (!rep.ok) break;
      switch (rs[0].status) {
        case alloc_status::ok:
          live.push_back(rs[0].offset);
          ++rep.allocs;
          break;
        case alloc_status::exhausted: ++rep.exhausted; break;
        case alloc_status::too_large: ++rep.too_large; break;
      }
    } else {
      run_free(step, static_cast<std::size_t>(rng() % live.size()));
    }
  }

  if (drain && rep.ok) {
    while (!live.empty() && rep.ok) {
      ++rep.steps;
      run_free(rep.steps, live.size() - 1);
    }
  }
  return rep;
}

}  // namespace nbuddy::verify
