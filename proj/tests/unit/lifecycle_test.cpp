#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace gangsim;
using testing_helpers::job;

namespace {

Cluster k80_nodes(int n) { return uniform_cluster(n, GpuClass::K80(), 4); }

void set_learners(CoordinationStore& s, const std::string& id, std::vector<std::string> states) {
  for (std::size_t i = 0; i < states.size(); ++i) s.put(learner_status_key(id, static_cast<int>(i)), states[i]);
}

}  // namespace

TEST(JobRecord, IllegalTransitionThrows) {
  JobRecord r(job("j", 1, 1, 100), 0);
  try {
    r.transition(JobStatus::PROCESSING, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IllegalTransition);
  }
  EXPECT_TRUE(r.transition(JobStatus::DEPLOYING, 1));
  EXPECT_FALSE(r.transition(JobStatus::DEPLOYING, 2));
  EXPECT_EQ(r.status_history.size(), 2u);
}

TEST(JobRecord, TerminalStatesAreFinal) {
  JobRecord r(job("j", 1, 1, 100), 0);
  r.transition(JobStatus::FAILED, 1);
  EXPECT_THROW(r.transition(JobStatus::QUEUED, 2), Error);
}

TEST(Guardian, CrashAtStepThreeRollsBackThenDeploys) {
  Cluster c = k80_nodes(2);
  CoordinationStore store;
  JobRecord r(job("j1", 2, 1, 100), 0);
  const DeployReport rep =
      guardian_deploy(r, {0, 1}, c, store, DeployFaultPlan{{DeployCrash{"j1", 1, 3}}});
  ASSERT_EQ(rep.attempts.size(), 2u);
  EXPECT_EQ(rep.attempts[0], AttemptOutcome::RolledBackAndRetried);
  EXPECT_EQ(rep.attempts[1], AttemptOutcome::Deployed);
  EXPECT_EQ(c.allocated_gpus(), 2);
  EXPECT_EQ(c.pod_count(), 2u);
  EXPECT_EQ(r.status, JobStatus::DOWNLOADING);
  EXPECT_TRUE(store.get("/jobs/j1/netpolicy"));
}

TEST(Guardian, CrashOnEveryAttemptFailsCleanly) {
  Cluster c = k80_nodes(2);
  CoordinationStore store;
  JobRecord r(job("j1", 2, 1, 100), 0);
  c.reserve(0, r.spec.per_learner_demand(), PodKey{"j1", 0});
  c.reserve(1, r.spec.per_learner_demand(), PodKey{"j1", 1});
  DeployFaultPlan plan;
  for (int a = 1; a <= 4; ++a) plan.crashes.push_back(DeployCrash{"j1", a, 5});
  const DeployReport rep = guardian_deploy(r, {0, 1}, c, store, plan);
  EXPECT_EQ(rep.attempts.size(), 4u);
  EXPECT_EQ(rep.final_outcome, AttemptOutcome::Failed);
  EXPECT_EQ(r.status, JobStatus::FAILED);
  EXPECT_EQ(c.held_gpus(), 0);
  EXPECT_TRUE(store.range("/jobs/j1/").empty());
}

TEST(Guardian, NoFaultsDeploysFirstTry) {
  Cluster c = k80_nodes(1);
  CoordinationStore store;
  JobRecord r(job("j1", 1, 2, 100), 0);
  const DeployReport rep = guardian_deploy(r, {0}, c, store, {});
  EXPECT_EQ(rep.attempts, std::vector<AttemptOutcome>{AttemptOutcome::Deployed});
  EXPECT_EQ(r.deploy_attempts, 1);
  EXPECT_EQ(store.get(learner_status_key("j1", 0)), "PENDING");
}

TEST(Guardian, CrashRestoresReservation) {
  Cluster c = k80_nodes(1);
  CoordinationStore store;
  JobRecord r(job("j1", 1, 4, 100), 0);
  c.reserve(0, r.spec.per_learner_demand(), PodKey{"j1", 0});
  Guardian g(r.spec, {0});
  DeployFaultPlan plan{{DeployCrash{"j1", 1, 2}}};
  EXPECT_EQ(g.step(r, c, store, plan, 0), Guardian::StepResult::Progressed);
  EXPECT_EQ(c.pod_count(), 1u);
  EXPECT_EQ(g.step(r, c, store, plan, 0.5), Guardian::StepResult::Crashed);
  EXPECT_EQ(c.pod_count(), 0u);
  EXPECT_EQ(c.reservation_count(), 1u);
  EXPECT_EQ(c.node(0).free().gpus, 0);
}

TEST(Guardian, AbortLeavesNothingBehind) {
  Cluster c = k80_nodes(2);
  CoordinationStore store;
  JobRecord r(job("j1", 2, 1, 100), 0);
  Guardian g(r.spec, {0, 1});
  for (int i = 0; i < 4; ++i) g.step(r, c, store, {}, i * 0.5);
  g.abort(c, store);
  EXPECT_EQ(c.held_gpus(), 0);
  EXPECT_TRUE(store.range("/jobs/j1/").empty());
  EXPECT_EQ(store.dump()["leases"].size(), 0u);
}

TEST(Controller, AllProcessingMeansProcessing) {
  CoordinationStore s;
  JobRecord r(job("j", 2, 1, 100), 0);
  r.transition(JobStatus::DEPLOYING, 0);
  r.transition(JobStatus::DOWNLOADING, 1);
  set_learners(s, "j", {"PROCESSING", "PROCESSING"});
  const auto v = controller_tick(r, s, 2);
  EXPECT_EQ(r.status, JobStatus::PROCESSING);
  EXPECT_TRUE(v.changed);
  const auto again = controller_tick(r, s, 3);
  EXPECT_FALSE(again.changed);
  EXPECT_EQ(r.status_history.size(), 4u);
}

TEST(Controller, FailedLearnerAsksForRecovery) {
  CoordinationStore s;
  JobRecord r(job("j", 2, 1, 100), 0);
  r.transition(JobStatus::DEPLOYING, 0);
  set_learners(s, "j", {"PROCESSING", "FAILED"});
  const auto v = controller_tick(r, s, 2);
  EXPECT_TRUE(v.recovery_needed);
  EXPECT_EQ(v.failed_learners, std::vector<int>{1});
  EXPECT_EQ(r.status, JobStatus::DEPLOYING);
}

TEST(Controller, MissingKeyIsUnknown) {
  CoordinationStore s;
  JobRecord r(job("j", 2, 1, 100), 0);
  s.put(learner_status_key("j", 0), "PROCESSING");
  const auto v = controller_tick(r, s, 1);
  EXPECT_EQ(v.unknown_learners, std::vector<int>{1});
  EXPECT_FALSE(v.aggregated);
}

TEST(Checkpoint, RecoveryResumesFromLastCheckpoint) {
  std::vector<JobRecord> jobs{JobRecord(job("j", 1, 1, 100, 0, 30), 0)};
  JobRecord& r = jobs[0];
  r.status = JobStatus::PROCESSING;
  r.placements[0] = 0;
  for (double p : {30.0, 60.0}) {
    r.progress = p;
    EXPECT_TRUE(take_checkpoint(r, p));
  }
  r.progress = 80;
  const PodPlacement ev{PodKey{"j", 0}, 0, r.spec.per_learner_demand()};
  const auto actions = handle_node_failure(std::span(&ev, 1), jobs, 80);
  ASSERT_EQ(actions.size(), 1u);
  EXPECT_DOUBLE_EQ(actions[0].resume_progress, 60);
  EXPECT_DOUBLE_EQ(actions[0].lost_work, 20);
  EXPECT_FALSE(r.placements[0].has_value());
  EXPECT_EQ(r.restarts, 1);
}

TEST(Checkpoint, NoIntervalMeansRestartFromZero) {
  std::vector<JobRecord> jobs{JobRecord(job("j", 1, 1, 100), 0)};
  jobs[0].status = JobStatus::PROCESSING;
  jobs[0].progress = 42;
  EXPECT_FALSE(take_checkpoint(jobs[0], 42));
  const PodPlacement ev{PodKey{"j", 0}, 0, {}};
  const auto actions = handle_node_failure(std::span(&ev, 1), jobs, 42);
  EXPECT_DOUBLE_EQ(actions[0].resume_progress, 0);
  EXPECT_DOUBLE_EQ(actions[0].lost_work, 42);
}

TEST(Checkpoint, AsyncJobKeepsProgress) {
  JobSpec spec = job("j", 2, 1, 100);
  spec.sync = false;
  std::vector<JobRecord> jobs{JobRecord(spec, 0)};
  jobs[0].status = JobStatus::PROCESSING;
  jobs[0].progress = 50;
  const PodPlacement ev{PodKey{"j", 1}, 0, {}};
  handle_node_failure(std::span(&ev, 1), jobs, 50);
  EXPECT_DOUBLE_EQ(jobs[0].progress, 50);
}

TEST(Checkpoint, OnlyWhileProcessing) {
  JobRecord r(job("j", 1, 1, 100, 0, 10), 0);
  r.progress = 5;
  EXPECT_FALSE(take_checkpoint(r, 5));
  r.status = JobStatus::PROCESSING;
  EXPECT_TRUE(take_checkpoint(r, 5));
  EXPECT_FALSE(take_checkpoint(r, 5));
}

TEST(Recovery, ComponentRanges) {
  EXPECT_DOUBLE_EQ(recovery_range(Component::Guardian).min_s, 1);
  EXPECT_DOUBLE_EQ(recovery_range(Component::Guardian).max_s, 2);
  EXPECT_DOUBLE_EQ(recovery_range(Component::Learner).min_s, 10);
  EXPECT_DOUBLE_EQ(recovery_range(Component::Learner).max_s, 20);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double d = component_recovery_delay("Helper", rng);
    EXPECT_GE(d, 3);
    EXPECT_LE(d, 4);
  }
  EXPECT_THROW(parse_component("Scheduler"), Error);
}
