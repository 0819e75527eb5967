#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"

using namespace gangsim;
using testing_helpers::job;

namespace {

JobRecord placed_job(std::string id, double submit, std::optional<double> placed) {
  JobRecord r(job(std::move(id), 1, 1, 100, submit), submit);
  r.first_placed_at = placed;
  return r;
}

}  // namespace

TEST(Cdf, StepValues) {
  const EmpiricalCdf c({0, 0, 4});
  EXPECT_NEAR(c.at(0), 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(c.at(3.9), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.at(4), 1.0);
  EXPECT_DOUBLE_EQ(c.at(-1), 0.0);
  EXPECT_DOUBLE_EQ(c.quantile(0.5), 0);
  EXPECT_DOUBLE_EQ(c.quantile(1.0), 4);
}

TEST(Cdf, MassAtAValue) {
  std::vector<double> v(20, 0.0);
  v[3] = v[11] = 5;
  const EmpiricalCdf c(v);
  EXPECT_NEAR(c.at(5) - c.at(4.999), 0.1, 1e-12);
  const auto pts = c.points();
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_DOUBLE_EQ(pts[0].second, 0.9);
}

TEST(Cdf, AgreesWithCountingOracle) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v;
    for (int i = 0; i < 1 + static_cast<int>(rng.below(30)); ++i) v.push_back(static_cast<double>(rng.below(10)));
    const EmpiricalCdf c(v);
    for (double x = -1; x <= 10; x += 0.5) {
      const auto le = std::count_if(v.begin(), v.end(), [&](double s) { return s <= x; });
      ASSERT_DOUBLE_EQ(c.at(x), static_cast<double>(le) / static_cast<double>(v.size()));
    }
  }
}

TEST(Wait, ThresholdIsStrict) {
  SimResult r;
  r.horizon = 10000;
  r.jobs.push_back(placed_job("long", 0, 16 * 60.0));
  r.jobs.push_back(placed_job("short", 0, 14 * 60.0));
  r.jobs.push_back(placed_job("exact", 100, 100 + 900.0));
  EXPECT_EQ(queued_over_threshold(r, 900), 1);
}

TEST(Wait, NeverPlacedCountsToHorizon) {
  SimResult r;
  r.horizon = 5000;
  r.jobs.push_back(placed_job("never", 1000, std::nullopt));
  EXPECT_EQ(wait_times(r), std::vector<double>{4000});
  EXPECT_EQ(compute_metrics(r).never_placed, 1);
}

TEST(Wait, ByDayBuckets) {
  SimResult r;
  r.horizon = 3 * 86400.0;
  r.jobs.push_back(placed_job("a", 10, 10 + 1000.0));
  r.jobs.push_back(placed_job("b", 86400 + 5, 86400 + 5 + 2000.0));
  r.jobs.push_back(placed_job("c", 86400 + 9, 86400 + 10.0));
  EXPECT_EQ(queued_over_threshold_by_day(r, 900), (std::vector<int>{1, 1, 0}));
}

TEST(Failure, NoFaultsNoImpact) {
  SimInput in;
  in.cluster = uniform_cluster(2, GpuClass::K80(), 4);
  in.jobs = {job("a", 2, 1, 500), job("b", 1, 4, 500)};
  in.horizon = 7200;
  const auto f = failure_impact(run(in));
  EXPECT_EQ(f.deletions, 0);
  EXPECT_DOUBLE_EQ(f.pod_deletion_pct, 0);
  EXPECT_DOUBLE_EQ(f.job_cancel_pct, 0);
}

TEST(Failure, PermanentFailureOfEveryNodeCancelsRunningJobs) {
  SimInput in;
  in.cluster = uniform_cluster(2, GpuClass::K80(), 4);
  in.jobs = {job("a", 1, 1, 5000), job("b", 1, 1, 5000), job("c", 2, 1, 5000)};
  in.horizon = 20000;
  for (const char* n : {"n0", "n1"}) in.faults.node_events.push_back(NodeEvent{200, n, NodeEventKind::Fail, -1});
  const SimResult r = run(in);
  const auto f = failure_impact(r);
  EXPECT_NEAR(f.job_cancel_pct, 100.0, 1e-9);
  EXPECT_NEAR(f.pod_deletion_pct, 100.0, 1e-9);
}

TEST(Utilization, TimeWeightedAverage) {
  SimResult r;
  r.horizon = 100;
  r.total_gpus = 4;
  r.utilization = {{0, 4, 4}, {50, 0, 0}};
  EXPECT_DOUBLE_EQ(mean_utilization(r), 0.5);
}

TEST(Csv, HeaderOrder) {
  std::ostringstream os;
  write_csv_header(os);
  EXPECT_EQ(os.str(),
            "seed,policy,jobs,completed,failed,never_placed,mean_wait_s,p95_wait_s,"
            "queued_over_threshold,utilization,peak_deadlocked_learners,peak_idle_gpus,"
            "peak_idle_pct,max_concurrent_jobs,node_failures,pod_terminations,pod_deletions,"
            "pod_deletion_pct,job_cancel_pct,deploy_rollbacks,lost_work_s,makespan_s\n");
  RunMetrics m;
  m.utilization = 0.25;
  EXPECT_EQ(metrics_row(m).size(), metrics_columns().size());
  EXPECT_EQ(metrics_row(m)[9], "0.250000");
}

TEST(Csv, JsonHasTheSameKeysInOrder) {
  const auto j = to_json(RunMetrics{});
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, metrics_columns());
}

TEST(Csv, CdfTablesListEverySupportPoint) {
  std::vector<SimResult> runs(4);
  for (auto& r : runs) r.total_gpus = 8;
  runs[1].peak_deadlocked_learners = 2;
  runs[1].peak_idle_gpus = 2;
  std::ostringstream os;
  write_cdf_csv(os, cdf_tables(runs));
  EXPECT_EQ(os.str(),
            "metric,value,cdf\n"
            "peak_deadlocked_learners,0.000000,0.750000\n"
            "peak_deadlocked_learners,2.000000,1.000000\n"
            "peak_idle_pct,0.000000,0.750000\n"
            "peak_idle_pct,25.000000,1.000000\n");
  EXPECT_EQ(cdf_to_json(cdf_tables(runs))["peak_idle_pct"].size(), 2u);
}
