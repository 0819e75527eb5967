#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"

using namespace gangsim;
using testing_helpers::job;

namespace {

SimInput single_job_input(JobSpec spec, int nodes = 1) {
  SimInput in;
  in.cluster = uniform_cluster(nodes, GpuClass::K80(), 4);
  in.jobs = {std::move(spec)};
  in.horizon = 36000;
  return in;
}

std::vector<std::pair<JobStatus, double>> history(const JobRecord& r) {
  std::vector<std::pair<JobStatus, double>> out;
  for (const auto& c : r.status_history) out.emplace_back(c.status, c.t);
  return out;
}

}  // namespace

TEST(Engine, PhaseTimesOfOneJob) {
  const SimResult r = run(single_job_input(job("j", 1, 1, 100)));
  ASSERT_EQ(r.jobs.size(), 1u);
  using S = JobStatus;
  const std::vector<std::pair<S, double>> expect = {
      {S::QUEUED, 0},       {S::DEPLOYING, 0}, {S::DOWNLOADING, 2.5},
      {S::PROCESSING, 62.5}, {S::STORING, 162.5}, {S::COMPLETED, 222.5}};
  EXPECT_EQ(history(r.jobs[0]), expect);
  EXPECT_EQ(r.jobs[0].finished_at, 222.5);
}

TEST(Engine, NoJobsGivesEmptyResult) {
  SimInput in;
  in.cluster = uniform_cluster(2, GpuClass::K80(), 4);
  in.horizon = 3600;
  const SimResult r = run(in);
  EXPECT_TRUE(r.jobs.empty());
  const RunMetrics m = compute_metrics(r);
  EXPECT_EQ(m.jobs, 0);
  EXPECT_DOUBLE_EQ(m.utilization, 0.0);
}

TEST(Engine, DuplicateJobIdsAreRejected) {
  SimInput in = single_job_input(job("j", 1, 1, 100));
  in.jobs.push_back(job("j", 1, 1, 100));
  EXPECT_THROW(run(in), Error);
}

TEST(Engine, SameSeedSameExport) {
  SimInput in;
  in.cluster = uniform_cluster(3, GpuClass::K80(), 4);
  PoissonConfig p;
  p.rate_per_hour = 20;
  p.duration_s = 6 * 3600.0;
  p.mix = {JobShape{1, 2, 1}, JobShape{1, 1, 4}};
  in.jobs = generate_synthetic(p, 4);
  in.horizon = 12 * 3600.0;
  in.faults.stochastic = StochasticFailures{20000, 600};
  in.seed = 9;
  const auto a = run(in);
  const auto b = run(in);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  std::ostringstream la, lb;
  write_event_log(la, a);
  write_event_log(lb, b);
  EXPECT_EQ(la.str(), lb.str());
}

TEST(Engine, BatchReturnsOneResultPerSeed) {
  SimInput base = single_job_input(job("j", 2, 1, 300), 2);
  base.scheduler.policy = Policy::PodSpread;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  const auto items = run_batch(base, seeds, 4);
  ASSERT_EQ(items.size(), 20u);
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(items[i].seed, seeds[i]);
    ASSERT_TRUE(items[i].result);
  }
  const auto dup = run_batch(base, {7, 7}, 2);
  EXPECT_EQ(to_json(*dup[0].result).dump(), to_json(*dup[1].result).dump());
}

TEST(Engine, NodeFailureRewindsToCheckpoint) {
  SimInput in = single_job_input(job("j", 1, 1, 200, 0, 30), 2);
  in.faults.node_events.push_back(NodeEvent{62.5 + 80, "n0", NodeEventKind::Fail, 100});
  const SimResult r = run(in);
  const JobRecord& j = r.jobs[0];
  EXPECT_EQ(j.status, JobStatus::COMPLETED);
  EXPECT_DOUBLE_EQ(j.lost_work, 20);
  EXPECT_EQ(j.restarts, 1);
  EXPECT_EQ(r.counters.node_failures, 1);
  EXPECT_EQ(r.counters.pod_deletions_node_failure, 1);
}

TEST(Engine, CheckpointIntervalWithRoundingCompletes) {
  // 27 * I / I rounds below 27 for this interval.
  SimInput in = single_job_input(job("j", 1, 1, 6344.59, 0, 98.6945));
  in.faults.node_events.push_back(NodeEvent{62.5 + 2725.38, "n0", NodeEventKind::Fail, 60});
  const SimResult r = run(in);
  EXPECT_EQ(r.jobs[0].status, JobStatus::COMPLETED);
  EXPECT_LE(r.jobs[0].lost_work, 98.6945);
}

TEST(Engine, SyncJobWaitsForReplacement) {
  // Progress stalls from the failure until the replacement learner is ready.
  SimInput in = single_job_input(job("j", 2, 1, 1000), 2);
  in.cluster = uniform_cluster(3, GpuClass::K80(), 1);
  in.faults.node_events.push_back(NodeEvent{100, "n0", NodeEventKind::Fail, -1});
  const SimResult r = run(in);
  const JobRecord& j = r.jobs[0];
  ASSERT_EQ(j.status, JobStatus::COMPLETED);
  // Restarted from zero, plus a learner restart of 10..20 s.
  const double done = *j.finished_at;
  EXPECT_GE(done, 100 + 10 + 1000 + 60);
  EXPECT_LE(done, 100 + 20 + 1000 + 60 + 1e-9);
}

TEST(Engine, DeployCrashIsRetried) {
  SimInput in = single_job_input(job("j", 2, 1, 100));
  in.faults.deploy.crashes.push_back(DeployCrash{"j", 1, 4});
  const SimResult r = run(in);
  EXPECT_EQ(r.jobs[0].status, JobStatus::COMPLETED);
  EXPECT_EQ(r.jobs[0].total_deploy_attempts, 2);
  EXPECT_EQ(r.counters.deploy_rollbacks, 1);
}

TEST(Engine, DeployRetriesExhaustedFailsJob) {
  SimInput in = single_job_input(job("j", 2, 1, 100));
  for (int a = 1; a <= 4; ++a) in.faults.deploy.crashes.push_back(DeployCrash{"j", a, 2});
  const SimResult r = run(in);
  EXPECT_EQ(r.jobs[0].status, JobStatus::FAILED);
  EXPECT_EQ(r.final_store.is_null() ? 0u : r.final_store["entries"].size(), 0u);
}

TEST(Engine, HaltThenResumeCompletes) {
  SimInput in = single_job_input(job("j", 1, 1, 1000));
  in.faults.user_actions = {UserAction{200, "j", true}, UserAction{500, "j", false}};
  const SimResult r = run(in);
  const JobRecord& j = r.jobs[0];
  EXPECT_EQ(j.status, JobStatus::COMPLETED);
  std::vector<JobStatus> seq;
  for (const auto& c : j.status_history) seq.push_back(c.status);
  auto pos = [&](JobStatus s) { return std::find(seq.begin(), seq.end(), s) - seq.begin(); };
  EXPECT_LT(pos(JobStatus::HALTED), pos(JobStatus::RESUMED));
  EXPECT_DOUBLE_EQ(j.lost_work, 0);
  // Halted for 300 s; the resumed job goes straight back to processing.
  EXPECT_GT(*j.finished_at, 1000 + 62.5 + 60 + 300);
}

TEST(Engine, ZeroGpuLearnersAreRejected) {
  JobSpec spec = job("j", 1, 1, 50);
  spec.gpus_per_learner = 0;
  EXPECT_THROW(run(single_job_input(spec)), Error);
}

TEST(FaultPlanJson, RoundTrip) {
  const auto doc = nlohmann::json::parse(R"([
    {"kind":"node-fail","t":10,"target":"n0","down_s":60},
    {"kind":"node-mtbf","mtbf_s":86400,"down_s":600},
    {"kind":"deploy-crash","target":"j","trigger":{"attempt":1,"step":3}},
    {"kind":"halt","t":5,"target":"j"}
  ])");
  const FaultPlan p = fault_plan_from_json(doc);
  EXPECT_EQ(p.node_events.size(), 1u);
  ASSERT_TRUE(p.stochastic);
  EXPECT_DOUBLE_EQ(p.stochastic->mtbf_s, 86400);
  EXPECT_TRUE(p.deploy.crashes_at("j", 1, 3));
  EXPECT_EQ(p.user_actions.size(), 1u);
  EXPECT_EQ(to_json(fault_plan_from_json(to_json(p))), to_json(p));
}

TEST(FaultPlanJson, UnknownKindIsRejected) {
  EXPECT_THROW(fault_plan_from_json(nlohmann::json::parse(R"([{"kind":"meteor"}])")), Error);
}
