#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nbuddy/bench/workloads.hpp"
#include "nbuddy/verify/differential.hpp"
#include "nbuddy/verify/oracle.hpp"
#include "nbuddy/verify/scenarios.hpp"
#include "nbuddy/verify/sched.hpp"
#include "nbuddy/verify/stress.hpp"
#include "nbuddy/verify/variants.hpp"
#include "nbuddy/version.hpp"

namespace {

using namespace nbuddy;
using namespace nbuddy::verify;

struct verify_opts {
  std::string variant = "1lvl-nb";
  std::uint32_t depth = 11;  // 16 KiB region at 8-byte granularity
  std::uint32_t threads = 4;
  std::uint64_t ops = 0;  // 0 picks a mode-specific default
  std::uint64_t seed = 1;
  std::string schedule;  // scenario name, "random", or a reproducer file
  bool exhaustive = false;
};

tree_config cfg_for_depth(std::uint32_t depth) {
  const std::uint64_t total = std::uint64_t{8} << depth;
  return tree_config::create(total, 8, total);
}

int report_line(const std::string& what, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << "  " << what << "\n";
  if (!ok && !detail.empty()) std::cout << detail << "\n";
  return ok ? 0 : 1;
}

std::string write_reproducer(const verify_opts& o, const std::vector<std::uint32_t>& decisions) {
  const std::string path = "nbuddy-" + o.variant + "-seed" + std::to_string(o.seed) + ".schedule";
  save_schedule(path, decisions);
  return path;
}

int run_verify_default(const verify_opts& o) {
  const variant_kind v = parse_variant(o.variant);
  const tree_config cfg = cfg_for_depth(o.depth);
  const std::uint64_t ops = o.ops ? o.ops : 20'000;
  int rc = 0;

  // Sequential equivalence first: the variant must be indistinguishable from
  // the reference allocator on a single thread before concurrency means much.
  rc |= with_variant(v, cfg, [&](auto& alloc) {
    sequential_oracle oracle(cfg);
    std::vector<subject> subjects;
    subjects.push_back(make_subject("oracle", oracle));
    subjects.push_back(make_subject(o.variant, alloc));
    const trace_report rep = run_differential(subjects, cfg, o.seed, ops, true);
    return report_line("sequential differential vs oracle, " + std::to_string(rep.steps) +
                           " steps",
                       rep.ok, rep.detail);
  });

  if (o.threads > 1) {
    rc |= with_variant(v, cfg, [&](auto& alloc) {
      stress_params p;
      p.threads = o.threads;
      p.ops_per_thread = ops;
      p.min_req = cfg.min_size;
      p.max_req = std::min<std::uint64_t>(1024, cfg.max_size);
      p.seed = o.seed;
      const stress_report rep = run_stress(alloc, p);
      return report_line("concurrent stress, " + std::to_string(o.threads) + " threads x " +
                             std::to_string(ops) + " ops: " + std::to_string(rep.grants) +
                             " grants, " + std::to_string(rep.cas_retries) + " retries",
                         rep.ok, rep.detail);
    });
  }
  return rc;
}

int run_verify_random(const verify_opts& o) {
  interleave_params p;
  p.variant = parse_variant(o.variant);
  p.threads = o.threads;
  p.depth = o.depth;
  p.ops_per_thread = static_cast<std::uint32_t>(o.ops ? o.ops : 3);
  p.seed = o.seed;
  const interleave_report rep = run_interleaved(p);
  if (!rep.ok) {
    const std::string path = write_reproducer(o, rep.decisions);
    std::cout << "reproducer schedule written to " << path << " (replay with --schedule "
              << path << " and the same --variant/--depth/--threads/--ops/--seed)\n";
  }
  return report_line("random interleaving, " + std::to_string(rep.decision_count) +
                         " scheduling decisions, " + std::to_string(rep.grants) + " grants",
                     rep.ok, rep.detail);
}

int run_verify_replay(const verify_opts& o) {
  interleave_params p;
  p.variant = parse_variant(o.variant);
  p.threads = o.threads;
  p.depth = o.depth;
  p.ops_per_thread = static_cast<std::uint32_t>(o.ops ? o.ops : 3);
  p.seed = o.seed;
  p.script = load_schedule(o.schedule);
  const interleave_report rep = run_interleaved(p);
  return report_line("replayed " + std::to_string(p.script.size()) + " decisions from " +
                         o.schedule,
                     rep.ok, rep.detail);
}

int run_verify_scenarios(const verify_opts& o) {
  const variant_kind v = parse_variant(o.variant);
  std::vector<std::string> names;
  if (o.schedule == "all") {
    names = scenario_names();
  } else {
    names.push_back(o.schedule);
  }
  int rc = 0;
  for (const std::string& name : names) {
    const scenario_report rep = run_named_scenario(name, v);
    rc |= report_line("scenario " + name + " on " + o.variant, rep.ok, rep.detail);
  }
  return rc;
}

int run_verify_exhaustive(const verify_opts& o) {
  explore_params p;
  p.variant = parse_variant(o.variant);
  // The systematic search is only tractable on small instances; larger
  // requests are clamped rather than rejected so scripts can pass one
  // configuration to every mode.
  p.threads = std::min<std::uint32_t>(o.threads, 2);
  p.depth = std::min<std::uint32_t>(o.depth, 3);
  p.ops_per_thread = static_cast<std::uint32_t>(std::min<std::uint64_t>(o.ops ? o.ops : 3, 3));
  p.seed = o.seed;
  if (p.threads != o.threads || p.depth != o.depth)
    std::cout << "note: exhaustive mode clamped to depth " << p.depth << ", " << p.threads
              << " threads\n";
  const explore_report rep = run_explore(p);
  if (!rep.ok && !rep.failing_script.empty()) {
    const std::string path = write_reproducer(o, rep.failing_script);
    std::cout << "failing schedule written to " << path << "\n";
  }
  std::string what = "exhaustive exploration, " + std::to_string(rep.schedules) +
                     " schedules, " + std::to_string(rep.decisions_total) + " decisions";
  if (!rep.complete) what += " (search budget hit, incomplete)";
  return report_line(what, rep.ok, rep.detail);
}

int run_verify(const verify_opts& o) {
  if (o.exhaustive) return run_verify_exhaustive(o);
  if (o.schedule.empty()) return run_verify_default(o);
  if (o.schedule == "random") return run_verify_random(o);
  const auto known = scenario_names();
  const bool named = o.schedule == "all" ||
                     std::find(known.begin(), known.end(), o.schedule) != known.end();
  if (named) return run_verify_scenarios(o);
  if (!std::filesystem::exists(o.schedule))
    throw CLI::ValidationError("--schedule", "no scenario or file named '" + o.schedule + "'");
  return run_verify_replay(o);
}

int run_bench_cmd(const bench::bench_params& p, const std::string& csv_path) {
  const bench::bench_result r = bench::run_bench(p);
  if (!r.ok) {
    std::cerr << "error: " << r.error << "\n";
    return 1;
  }
  std::ostringstream row;
  bench::write_csv_row(row, r);
  bench::write_csv_header(std::cout);
  std::cout << row.str();
  if (!csv_path.empty()) {
    // Append so sweeps can accumulate rows; the header is written once.
    const bool fresh =
        !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
    std::ofstream out(csv_path, std::ios::app);
    if (!out) {
      std::cerr << "error: cannot open " << csv_path << "\n";
      return 1;
    }
    if (fresh) bench::write_csv_header(out);
    out << row.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-blocking buddy allocator toolbox"};
  app.set_version_flag("--version", std::string(nbuddy::version()));
  app.require_subcommand(1);

  verify_opts vo;
  CLI::App* verify = app.add_subcommand("verify", "safety and progress checks");
  verify->add_option("--variant", vo.variant, "1lvl-nb, 4lvl-nb, 1lvl-sl or 4lvl-sl")
      ->capture_default_str();
  verify->add_option("--depth", vo.depth, "tree depth; region is 8*2^depth bytes")
      ->capture_default_str();
  verify->add_option("--threads", vo.threads, "worker threads")->capture_default_str();
  verify->add_option("--ops", vo.ops, "operations per thread (0 = mode default)");
  verify->add_option("--seed", vo.seed, "seed for requests and scheduling")
      ->capture_default_str();
  verify->add_option("--schedule", vo.schedule,
                     "scenario name ('unmark-handoff', 'reset-visibility', 'early-stop', "
                     "'all'), 'random' for a seeded controlled interleaving, or a "
                     "reproducer file to replay");
  verify->add_flag("--exhaustive", vo.exhaustive,
                   "systematically explore small-instance interleavings");

  bench::bench_params bp;
  std::string csv_path;
  CLI::App* bench_cmd = app.add_subcommand("bench", "workload throughput measurements");
  bench_cmd->add_option("--workload", bp.workload,
                        "linux-scalability, thread-test, larson or constant-occupancy")
      ->capture_default_str();
  std::string bench_variant = "1lvl-nb";
  bench_cmd->add_option("--variant", bench_variant, "1lvl-nb, 4lvl-nb, 1lvl-sl or 4lvl-sl")
      ->capture_default_str();
  bench_cmd->add_option("--threads", bp.threads, "worker threads")->capture_default_str();
  bench_cmd->add_option("--size", bp.size, "request size in bytes")->capture_default_str();
  bench_cmd->add_option("--min-size", bp.min_size, "smallest serviceable request")
      ->capture_default_str();
  bench_cmd->add_option("--max-size", bp.max_size, "largest serviceable request")
      ->capture_default_str();
  CLI::Option* ops_opt =
      bench_cmd->add_option("--ops", bp.ops, "total operations (0 = workload default)");
  bench_cmd->add_option("--duration", bp.duration, "run time in seconds (timed workloads)")
      ->excludes(ops_opt);
  bench_cmd->add_option("--seed", bp.seed, "request stream seed")->capture_default_str();
  bench_cmd->add_option("--csv", csv_path, "append the result row to this CSV file");
  bench_cmd->add_flag("--pin", bp.pin, "pin worker threads round-robin to cores");
  bench_cmd->add_flag("--touch", bp.touch, "write one byte into every granted chunk");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) return run_verify(vo);
    bp.variant = parse_variant(bench_variant);
    return run_bench_cmd(bp, csv_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
