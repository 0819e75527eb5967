#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gangsim/engine.hpp"
#include "gangsim/metrics.hpp"
#include "gangsim/scenario.hpp"
#include "gangsim/workload.hpp"

// Built-in replays of the headline experiments. Each returns a table of
// named checks; the CLI prints them and the acceptance tests re-derive the
// same properties from the raw results.

namespace gangsim {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ReplayReport {
  std::string name;
  std::vector<Check> checks;
  std::vector<RunMetrics> runs;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

inline void print_report(std::ostream& out, const ReplayReport& r) {
  out << "== " << r.name << '\n';
  for (const auto& c : r.checks) {
    out << (c.pass ? "PASS " : "FAIL ") << c.name;
    if (!c.detail.empty()) out << "  [" << c.detail << ']';
    out << '\n';
  }
}

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t n) {
  std::vector<std::uint64_t> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(first + i);
  return v;
}

// Fails loudly when a batch run raised an error instead of returning.
inline std::vector<SimResult> unwrap(std::vector<BatchItem> items) {
  std::vector<SimResult> out;
  for (auto& it : items) {
    if (!it.result) {
      throw Error(it.error_code.value_or(ErrorCode::InvariantViolation),
                  "seed " + std::to_string(it.seed) + ": " + it.error.value_or("unknown error"));
    }
    out.push_back(std::move(*it.result));
  }
  return out;
}

namespace detail {
inline JobSpec simple_job(std::string id, double t, int learners, int gpus, double work) {
  JobSpec s;
  s.job_id = std::move(id);
  s.submit_time = t;
  s.learners = learners;
  s.gpus_per_learner = gpus;
  s.gpu_class = GpuClass::K80();
  s.work_duration = work;
  apply_default_resources(s);
  return s;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Fragmentation: 4 nodes x 4 GPUs, four single-GPU jobs, then 4-GPU jobs.

inline Scenario fragmentation_scenario(Policy policy) {
  Scenario s;
  s.name = "fragmentation";
  s.cluster = uniform_cluster(4, GpuClass::K80(), 4);
  for (int i = 0; i < 4; ++i) {
    s.trace.push_back(detail::simple_job("small-" + std::to_string(i), 0.0, 1, 1, 36000.0));
  }
  for (int i = 0; i < 3; ++i) {
    s.trace.push_back(detail::simple_job("big-" + std::to_string(i), 60.0, 1, 4, 36000.0));
  }
  s.scheduler.policy = policy;
  s.horizon_s = 3600.0;
  return s;
}

inline int placed_jobs_with_prefix(const SimResult& r, const std::string& prefix) {
  int n = 0;
  for (const auto& j : r.jobs) {
    if (j.id().starts_with(prefix) && j.first_placed_at) ++n;
  }
  return n;
}

// Scheduler-level view of the same situation: the verdict for a 4-GPU pod
// once the four single-GPU pods are placed.
inline PodDecision fragmentation_verdict(RankPolicy rank) {
  Cluster c = uniform_cluster(4, GpuClass::K80(), 4);
  for (int i = 0; i < 4; ++i) {
    const auto spec = detail::simple_job("small-" + std::to_string(i), 0, 1, 1, 1);
    schedule_pod(PodRequest{spec.job_id, 0, spec.per_learner_demand()}, c, rank);
  }
  const auto big = detail::simple_job("big-0", 0, 1, 4, 1);
  return schedule_pod(PodRequest{big.job_id, 0, big.per_learner_demand()}, c, rank);
}

inline ReplayReport replay_fragmentation() {
  ReplayReport rep;
  rep.name = "fragmentation";
  const auto spread = run(fragmentation_scenario(Policy::PodSpread).input_for(1));
  const auto pack = run(fragmentation_scenario(Policy::PodPack).input_for(1));
  const auto verdict = fragmentation_verdict(RankPolicy::Spread);
  rep.runs = {compute_metrics(spread), compute_metrics(pack)};
  rep.checks.push_back({"spread leaves the 4-GPU job unschedulable",
                        !verdict.placed() && placed_jobs_with_prefix(spread, "big-") == 0,
                        verdict.tally.summary()});
  const int big_pack = placed_jobs_with_prefix(pack, "big-");
  rep.checks.push_back({"pack places three 4-GPU jobs", big_pack == 3,
                        std::to_string(big_pack) + " placed"});
  return rep;
}

// ---------------------------------------------------------------------------
// Gang experiment: 15 nodes x 4 K80, 50 identical synchronous jobs.

struct GangShape {
  int learners = 2;
  int gpus_per_learner = 1;

  std::string label() const {
    return std::to_string(learners) + "Lx" + std::to_string(gpus_per_learner) + "GPU";
  }
};

inline const std::vector<GangShape>& gang_shapes() {
  static const std::vector<GangShape> shapes = {{2, 1}, {2, 2}, {4, 1}};
  return shapes;
}

inline constexpr std::size_t kGangSeeds = 20;

inline Scenario gang_scenario(GangShape shape, Policy policy) {
  Scenario s;
  s.name = "gang-" + shape.label();
  s.cluster = uniform_cluster(15, GpuClass::K80(), 4);
  GangExperimentConfig g;
  g.n_jobs = 50;
  g.learners = shape.learners;
  g.gpus_per_learner = shape.gpus_per_learner;
  s.generator = g;
  s.scheduler.policy = policy;
  s.seeds = seed_range(1, kGangSeeds);
  s.horizon_s = 8 * 3600.0;
  return s;
}

inline std::vector<SimResult> run_scenario(const Scenario& s, unsigned threads = 0) {
  std::vector<BatchItem> items(s.seeds.size());
  // Seeds of a generated workload change the jobs too, so build each input.
  std::vector<SimInput> inputs;
  for (auto seed : s.seeds) inputs.push_back(s.input_for(seed));
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      items[i].seed = inputs[i].seed;
      try {
        items[i].result = run(inputs[i]);
      } catch (const Error& e) {
        items[i].error = e.what();
        items[i].error_code = e.code();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < std::min<unsigned>(threads, static_cast<unsigned>(inputs.size())); ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) t.join();
  return unwrap(std::move(items));
}

struct GangReplay {
  GangShape shape;
  std::vector<SimResult> gang;
  std::vector<SimResult> baseline;
};

// The pod-at-a-time baseline spreads pods across nodes, like the default
// Kubernetes scheduler.
inline std::vector<GangReplay> run_gang_replays(unsigned threads = 0) {
  std::vector<GangReplay> out;
  for (const auto& shape : gang_shapes()) {
    GangReplay r;
    r.shape = shape;
    r.gang = run_scenario(gang_scenario(shape, Policy::Gang), threads);
    r.baseline = run_scenario(gang_scenario(shape, Policy::PodSpread), threads);
    out.push_back(std::move(r));
  }
  return out;
}

inline double deadlock_free_fraction(const std::vector<SimResult>& runs) {
  if (runs.empty()) return 0.0;
  return deadlock_cdf(runs).at(0.0);
}

inline ReplayReport replay_gang(unsigned threads = 0) {
  ReplayReport rep;
  rep.name = "gang";
  const auto replays = run_gang_replays(threads);
  for (const auto& r : replays) {
    int worst_dl = 0;
    std::int64_t worst_idle = 0;
    int min_conc = 1 << 30, max_conc = 0;
    for (const auto& g : r.gang) {
      worst_dl = std::max(worst_dl, g.peak_deadlocked_learners);
      worst_idle = std::max(worst_idle, g.peak_idle_gpus);
      min_conc = std::min(min_conc, g.max_concurrent_jobs);
      max_conc = std::max(max_conc, g.max_concurrent_jobs);
      rep.runs.push_back(compute_metrics(g));
    }
    for (const auto& b : r.baseline) rep.runs.push_back(compute_metrics(b));
    rep.checks.push_back({"gang " + r.shape.label() + ": no deadlocked learners, no idle GPUs",
                          worst_dl == 0 && worst_idle == 0,
                          "worst deadlocked " + std::to_string(worst_dl) + ", idle " +
                              std::to_string(worst_idle)});
    if (r.shape.learners == 2 && r.shape.gpus_per_learner == 1) {
      rep.checks.push_back({"gang 2Lx1GPU: 30 jobs run concurrently",
                            min_conc == 30 && max_conc == 30,
                            "max concurrent in [" + std::to_string(min_conc) + ", " +
                                std::to_string(max_conc) + "]"});
      const double p0 = deadlock_free_fraction(r.baseline);
      const int worst = static_cast<int>(deadlock_cdf(r.baseline).quantile(1.0));
      std::ostringstream d;
      d << "P(deadlock-free) " << p0 << ", worst " << worst << " learners";
      rep.checks.push_back({"baseline 2Lx1GPU deadlocks in some seeds, P(free) in [0.2, 0.6]",
                            worst >= 1 && p0 >= 0.2 && p0 <= 0.6, d.str()});
    }
    if (r.shape.learners == 4 && r.shape.gpus_per_learner == 1) {
      const double idle = idle_gpu_cdf(r.baseline).quantile(1.0);
      std::ostringstream d;
      d << "peak idle " << idle << "%";
      rep.checks.push_back({"baseline 4Lx1GPU: peak idle GPUs >= 35%", idle >= 35.0, d.str()});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Worst case: 4 nodes x 2 GPUs, four 2Lx2GPU jobs.

inline Scenario worst_case_scenario(Policy policy) {
  Scenario s;
  s.name = "worst-case";
  s.cluster = uniform_cluster(4, GpuClass::K80(), 2);
  for (int i = 0; i < 4; ++i) {
    s.trace.push_back(detail::simple_job("job-" + std::to_string(i), 0.0, 2, 2, 7200.0));
  }
  s.scheduler.policy = policy;
  s.scheduler.pod_order = PodOrder::RoundRobin;
  s.horizon_s = 1800.0;
  return s;
}

inline ReplayReport replay_worst_case() {
  ReplayReport rep;
  rep.name = "worst-case";
  const auto pod = run(worst_case_scenario(Policy::PodSpread).input_for(1));
  const auto gang = run(worst_case_scenario(Policy::Gang).input_for(1));
  rep.runs = {compute_metrics(pod), compute_metrics(gang)};
  rep.checks.push_back({"round-robin pods: 4 deadlocked learners, 8/8 GPUs idle",
                        pod.peak_deadlocked_learners == 4 && pod.peak_idle_gpus == 8,
                        std::to_string(pod.peak_deadlocked_learners) + " learners, " +
                            std::to_string(pod.peak_idle_gpus) + " GPUs"});
  int placed = 0, whole_queued = 0;
  for (const auto& j : gang.jobs) {
    if (j.first_placed_at) ++placed;
    if (!j.first_placed_at && j.placed_count() == 0) ++whole_queued;
  }
  rep.checks.push_back({"gang places 2 jobs and queues 2 whole", placed == 2 && whole_queued == 2,
                        std::to_string(placed) + " placed, " + std::to_string(whole_queued) +
                            " queued"});
  return rep;
}

// ---------------------------------------------------------------------------
// Trace replays driven by shipped scenario files.

// Mixed K80/V100 cluster of 40 GPUs.
inline Cluster trace_cluster() {
  Cluster c;
  for (int i = 0; i < 5; ++i) c.add_node("k" + std::to_string(i), default_node_capacity(GpuClass::K80(), 4));
  for (int i = 0; i < 5; ++i) c.add_node("v" + std::to_string(i), default_node_capacity(GpuClass::V100(), 4));
  return c;
}

// Sixty days of bursty arrivals sized for the 40-GPU cluster: mostly
// single-GPU jobs with a share of whole-node K80 jobs.
inline BurstyDailyConfig trace_workload() {
  BurstyDailyConfig b;
  b.days = 60;
  b.jobs_per_day = 25.0;
  b.burst_probability = 0.15;
  b.burst_factor = 2.5;
  b.weekend_factor = 0.4;
  b.window_start = 0.0;
  b.window_end = 1.0;
  b.work = WorkRange{1800.0, 28800.0};
  b.checkpoint_interval = 1800.0;
  b.mix = {
      {0.6, 1, 1, GpuClass::K80()},
      {0.2, 1, 4, GpuClass::K80()},
      {0.1, 1, 1, GpuClass::V100()},
      {0.1, 1, 2, GpuClass::V100()},
  };
  return b;
}

inline constexpr std::uint64_t kTraceSeed = 1;

// The spread-vs-pack scenario: the trace is generated once and replayed
// under both pod policies.
inline Scenario spread_vs_pack_scenario() {
  Scenario s;
  s.name = "spread-vs-pack";
  s.cluster = trace_cluster();
  s.trace = generate_synthetic(trace_workload(), kTraceSeed);
  s.scheduler.policy = Policy::PodSpread;
  s.seeds = {kTraceSeed};
  s.horizon_s = 61 * 86400.0;
  return s;
}

// Poisson load with independent node failures on the 40-GPU cluster.
inline Scenario faults_scenario() {
  Scenario s;
  s.name = "faults";
  s.cluster = trace_cluster();
  PoissonConfig p;
  p.rate_per_hour = 3.0;
  p.duration_s = 14 * 86400.0;
  p.mix = trace_workload().mix;
  p.work = WorkRange{1800.0, 14400.0};
  p.checkpoint_interval = 1800.0;
  s.generator = p;
  s.scheduler.policy = Policy::Gang;
  s.faults.stochastic = StochasticFailures{30 * 86400.0, 1800.0};
  s.seeds = seed_range(1, 5);
  s.horizon_s = 15 * 86400.0;
  return s;
}

struct SpreadVsPack {
  SimResult spread;
  SimResult pack;
  int spread_over = 0;
  int pack_over = 0;
};

inline SpreadVsPack run_spread_vs_pack(const Scenario& base) {
  Scenario s = base;
  s.scheduler.policy = Policy::PodSpread;
  SpreadVsPack out;
  const std::uint64_t seed = s.seeds.front();
  out.spread = run(s.input_for(seed));
  s.scheduler.policy = Policy::PodPack;
  out.pack = run(s.input_for(seed));
  out.spread_over = queued_over_threshold(out.spread, s.queue_threshold_s);
  out.pack_over = queued_over_threshold(out.pack, s.queue_threshold_s);
  return out;
}

inline ReplayReport replay_spread_vs_pack(const Scenario& s = spread_vs_pack_scenario()) {
  ReplayReport rep;
  rep.name = "spread-vs-pack";
  const auto r = run_spread_vs_pack(s);
  rep.runs = {compute_metrics(r.spread, s.queue_threshold_s),
              compute_metrics(r.pack, s.queue_threshold_s)};
  rep.checks.push_back({"pack queues at most half as many jobs past the threshold",
                        2 * r.pack_over <= r.spread_over && r.spread_over > 0,
                        "spread " + std::to_string(r.spread_over) + ", pack " +
                            std::to_string(r.pack_over)});
  return rep;
}

inline ReplayReport replay_faults(const Scenario& s = faults_scenario()) {
  ReplayReport rep;
  rep.name = "faults";
  const auto results = run_scenario(s);
  std::int64_t terms = 0, dels = 0, failures = 0;
  int jobs = 0, cancelled = 0;
  for (const auto& r : results) {
    const auto f = failure_impact(r);
    terms += f.terminations;
    dels += f.deletions;
    jobs += f.jobs;
    cancelled += f.cancelled_jobs;
    failures += r.counters.node_failures;
    rep.runs.push_back(compute_metrics(r, s.queue_threshold_s));
  }
  const double del_pct = terms > 0 ? 100.0 * static_cast<double>(dels) / static_cast<double>(terms) : 0.0;
  const double cancel_pct = jobs > 0 ? 100.0 * cancelled / jobs : 0.0;
  std::ostringstream d1, d2;
  d1 << dels << "/" << terms << " = " << del_pct << "% over " << failures << " node failures";
  d2 << cancelled << "/" << jobs << " = " << cancel_pct << "%";
  rep.checks.push_back({"node failures exercised", failures > 0, std::to_string(failures)});
  rep.checks.push_back({"pod deletions <= 5% of terminations", del_pct <= 5.0, d1.str()});
  rep.checks.push_back({"from-scratch cancellations <= 1% of jobs", cancel_pct <= 1.0, d2.str()});
  return rep;
}

}  // namespace gangsim
