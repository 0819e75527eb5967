#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gangsim/gangsim.hpp"

namespace fs = std::filesystem;
using namespace gangsim;

namespace {

enum Exit { kOk = 0, kConfig = 1, kInvariant = 2, kAcceptance = 3 };

struct Overrides {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> seeds;
  std::optional<std::string> policy;
  std::optional<int> samples;
  std::optional<double> threshold_s;
  std::optional<double> horizon_s;
  std::string format = "csv";
  bool dump_store = false;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("gangsim");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("GANGSIM_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

void apply(Scenario& s, const Overrides& o) {
  if (o.policy) s.scheduler.policy = parse_policy(*o.policy);
  if (o.samples) s.scheduler.samples = *o.samples;
  if (o.threshold_s) s.queue_threshold_s = *o.threshold_s;
  if (o.horizon_s) s.horizon_s = *o.horizon_s;
  if (o.seed) s.seeds = {*o.seed};
  if (o.seeds) {
    if (*o.seeds < 1) throw Error(ErrorCode::ConfigError, "--seeds must be >= 1");
    const std::uint64_t first = o.seed.value_or(1);
    s.seeds = seed_range(first, static_cast<std::size_t>(*o.seeds));
  }
  s.scheduler.validate();
  if (!(s.horizon_s > 0)) throw Error(ErrorCode::ConfigError, "--horizon-s must be positive");
}

Scenario load(const Overrides& o) {
  if (o.scenario.empty()) throw Error(ErrorCode::ConfigError, "--scenario is required");
  Scenario s = load_scenario(o.scenario);
  apply(s, o);
  return s;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot write '" + p.string() + "'");
  return f;
}

void write_cdfs(const fs::path& dir, const std::vector<SimResult>& runs, const std::string& format) {
  const auto tables = cdf_tables(runs);
  if (format == "json") {
    open_out(dir / "cdf.json") << cdf_to_json(tables).dump(2) << '\n';
  } else {
    auto f = open_out(dir / "cdf.csv");
    write_cdf_csv(f, tables);
  }
}

void write_metrics(std::ostream& out, const std::vector<RunMetrics>& rows, const std::string& format) {
  if (format == "json") {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& m : rows) arr.push_back(to_json(m));
    out << arr.dump(2) << '\n';
  } else {
    write_csv(out, rows);
  }
}

int cmd_run(const Overrides& o) {
  const Scenario s = load(o);
  const std::uint64_t seed = s.seeds.front();
  spdlog::info("running '{}' seed {} ({} nodes)", s.name, seed, s.cluster.size());
  SimInput in = s.input_for(seed);
  in.dump_store = o.dump_store;
  const SimResult r = run(in);
  const RunMetrics m = compute_metrics(r, s.queue_threshold_s);
  if (o.out.empty()) {
    if (o.dump_store) std::cerr << r.final_store.dump(2) << '\n';
    write_metrics(std::cout, {m}, o.format);
    return kOk;
  }
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  open_out(dir / "result.json") << to_json(r).dump(1) << '\n';
  if (o.dump_store) open_out(dir / "store.json") << r.final_store.dump(2) << '\n';
  auto ev = open_out(dir / "events.jsonl");
  write_event_log(ev, r);
  auto st = open_out(dir / "status.jsonl");
  write_status_history(st, r);
  auto mf = open_out(dir / (o.format == "json" ? "metrics.json" : "metrics.csv"));
  write_metrics(mf, {m}, o.format);
  spdlog::info("wrote {}", dir.string());
  return kOk;
}

int cmd_batch(const Overrides& o) {
  const Scenario s = load(o);
  spdlog::info("batch '{}' over {} seeds", s.name, s.seeds.size());
  const auto results = run_scenario(s);
  std::vector<RunMetrics> rows;
  for (const auto& r : results) rows.push_back(compute_metrics(r, s.queue_threshold_s));
  if (o.out.empty()) {
    write_metrics(std::cout, rows, o.format);
    return kOk;
  }
  fs::create_directories(o.out);
  auto mf = open_out(fs::path(o.out) / (o.format == "json" ? "metrics.json" : "metrics.csv"));
  write_metrics(mf, rows, o.format);
  write_cdfs(o.out, results, o.format);
  return kOk;
}

// Accepts a scenario file with a generator workload or a bare generator config.
int cmd_gen_trace(const Overrides& o) {
  if (o.scenario.empty()) throw Error(ErrorCode::ConfigError, "--scenario is required");
  const auto doc = detail::read_json_file(o.scenario);
  WorkloadConfig config;
  try {
    config = workload_config_from_json(doc.contains("workload") ? doc.at("workload") : doc);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, o.scenario + ": " + e.message());
  }
  const auto jobs = generate_synthetic(config, o.seed.value_or(1));
  if (o.out.empty()) {
    write_trace(std::cout, jobs);
  } else {
    if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
    auto f = open_out(o.out);
    write_trace(f, jobs);
  }
  spdlog::info("generated {} jobs", jobs.size());
  return kOk;
}

int cmd_replay(const std::string& name, const Overrides& o) {
  ReplayReport rep;
  if (name == "fragmentation") {
    rep = replay_fragmentation();
  } else if (name == "gang") {
    rep = replay_gang();
  } else if (name == "worst-case") {
    rep = replay_worst_case();
  } else if (name == "spread-vs-pack") {
    Scenario s = spread_vs_pack_scenario();
    if (o.threshold_s) s.queue_threshold_s = *o.threshold_s;
    rep = replay_spread_vs_pack(s);
  } else if (name == "faults") {
    rep = replay_faults();
  } else {
    throw Error(ErrorCode::ConfigError, "unknown experiment '" + name + "'");
  }
  print_report(std::cout, rep);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    auto mf = open_out(fs::path(o.out) / (o.format == "json" ? "metrics.json" : "metrics.csv"));
    write_metrics(mf, rep.runs, o.format);
  }
  std::cout << (rep.pass() ? "PASS" : "FAIL") << ' ' << rep.name << '\n';
  return rep.pass() ? kOk : kAcceptance;
}

int cmd_validate(const Overrides& o) {
  const Scenario s = load(o);
  validate_scenario(s);
  std::cout << "ok " << s.name << ": " << s.cluster.size() << " nodes, "
            << s.jobs_for(s.seeds.front()).size() << " jobs, " << s.seeds.size() << " seeds\n";
  return kOk;
}

int cmd_dump_config(const Overrides& o) {
  const Scenario s = load(o);
  std::cout << to_json(s).dump(2) << '\n';
  return kOk;
}

void add_common(CLI::App* cmd, Overrides& o, bool scenario_required) {
  auto* opt = cmd->add_option("--scenario", o.scenario, "scenario JSON file");
  if (scenario_required) opt->required();
  cmd->add_option("--out", o.out, "output directory (file for gen-trace)");
  cmd->add_option("--seed", o.seed, "seed (first seed with --seeds)");
  cmd->add_option("--seeds", o.seeds, "number of consecutive seeds");
  cmd->add_option("--policy", o.policy, "gang | pod-spread | pod-pack");
  cmd->add_option("--samples", o.samples, "gang placement samples");
  cmd->add_option("--threshold-s", o.threshold_s, "queue-wait threshold in seconds");
  cmd->add_option("--horizon-s", o.horizon_s, "simulated horizon in seconds");
  cmd->add_option("--format", o.format, "metrics format")->check(CLI::IsMember({"csv", "json"}));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"gangsim: GPU cluster scheduling simulator"};
  app.require_subcommand(1);
  Overrides o;
  std::string experiment;

  auto* run_cmd = app.add_subcommand("run", "run one seed of a scenario");
  add_common(run_cmd, o, true);
  run_cmd->add_flag("--dump-store", o.dump_store, "include the final coordination-store contents");
  auto* batch_cmd = app.add_subcommand("batch", "run every seed of a scenario");
  add_common(batch_cmd, o, true);
  auto* gen_cmd = app.add_subcommand("gen-trace", "write a synthetic workload as a JSONL trace");
  add_common(gen_cmd, o, true);
  auto* replay_cmd = app.add_subcommand("replay-paper", "replay a built-in experiment");
  replay_cmd->add_option("experiment", experiment, "experiment name")
      ->required()
      ->check(CLI::IsMember({"fragmentation", "gang", "worst-case", "spread-vs-pack", "faults"}));
  add_common(replay_cmd, o, false);
  auto* validate_cmd = app.add_subcommand("validate", "check a scenario without running it");
  add_common(validate_cmd, o, true);
  auto* dump_cmd = app.add_subcommand("dump-config", "print the resolved scenario");
  add_common(dump_cmd, o, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*run_cmd) return cmd_run(o);
    if (*batch_cmd) return cmd_batch(o);
    if (*gen_cmd) return cmd_gen_trace(o);
    if (*replay_cmd) return cmd_replay(experiment, o);
    if (*validate_cmd) return cmd_validate(o);
    if (*dump_cmd) return cmd_dump_config(o);
  } catch (const Error& e) {
    std::cerr << "gangsim: error[" << to_string(e.code()) << "]: " << e.message() << '\n';
    return e.code() == ErrorCode::InvariantViolation ? kInvariant : kConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "gangsim: error[ConfigError]: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "gangsim: error[Internal]: " << e.what() << '\n';
    return kInvariant;
  }
  return kConfig;
}
