#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"

using namespace gangsim;

TEST(TShirt, TableRows) {
  EXPECT_EQ(default_resources(GpuClass::V100(), 1), (CpuMem{26, 24}));
  EXPECT_EQ(default_resources(GpuClass::K80(), 4), (CpuMem{16, 96}));
  EXPECT_EQ(default_resources(GpuClass::P100(), 2), (CpuMem{16, 48}));
  EXPECT_EQ(default_resources(GpuClass::K80(), 0), kCpuOnlyDefault);
  EXPECT_EQ(default_resources(GpuClass::K80(), 0, CpuMem{2, 4}), (CpuMem{2, 4}));
  try {
    default_resources(GpuClass::K80(), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownConfiguration);
  }
}

TEST(Trace, OneLineDefaultsCpuAndMemory) {
  std::istringstream in(
      R"({"job_id":"j1","submit_time":0,"learners":2,"gpus_per_learner":1,"gpu_class":"K80","work_duration":600})");
  const auto jobs = parse_trace(in);
  ASSERT_EQ(jobs.size(), 1u);
  EXPECT_EQ(jobs[0].job_id, "j1");
  EXPECT_EQ(jobs[0].cpu_per_learner, 4000);
  EXPECT_EQ(jobs[0].mem_per_learner, 24576);
}

TEST(Trace, EmptyInputGivesNoJobs) {
  std::istringstream in("");
  EXPECT_TRUE(parse_trace(in).empty());
}

TEST(Trace, SortedBySubmitTime) {
  std::istringstream in(
      "{\"job_id\":\"a\",\"submit_time\":10,\"learners\":1,\"gpus_per_learner\":1,\"gpu_class\":\"K80\",\"work_duration\":5}\n"
      "{\"job_id\":\"b\",\"submit_time\":5,\"learners\":1,\"gpus_per_learner\":1,\"gpu_class\":\"K80\",\"work_duration\":5}\n");
  const auto jobs = parse_trace(in);
  ASSERT_EQ(jobs.size(), 2u);
  EXPECT_EQ(jobs[0].job_id, "b");
  EXPECT_EQ(jobs[1].job_id, "a");
}

TEST(Trace, BadLineReportsLineNumber) {
  std::istringstream in(
      "{\"job_id\":\"a\",\"submit_time\":1,\"learners\":1,\"gpus_per_learner\":1,\"gpu_class\":\"K80\",\"work_duration\":5}\n"
      "{not json\n");
  try {
    parse_trace(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Trace, UnknownGpuClassIsRejected) {
  std::istringstream in(
      "{\"job_id\":\"a\",\"submit_time\":1,\"learners\":1,\"gpus_per_learner\":1,\"gpu_class\":\"H100\",\"work_duration\":5}\n");
  try {
    parse_trace(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ValidationError);
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(Trace, WriteThenParseRoundTrips) {
  PoissonConfig p;
  p.rate_per_hour = 30;
  p.duration_s = 7200;
  const auto jobs = generate_synthetic(p, 3);
  std::stringstream buf;
  write_trace(buf, jobs);
  EXPECT_EQ(parse_trace(buf), jobs);
}

TEST(Generator, GangExperimentSubmitsEverythingAtOnce) {
  GangExperimentConfig g;
  const auto jobs = generate_synthetic(g, 1);
  ASSERT_EQ(jobs.size(), 50u);
  std::int64_t demand = 0;
  for (const auto& j : jobs) {
    EXPECT_EQ(j.submit_time, 0.0);
    demand += j.total_gpus();
  }
  EXPECT_EQ(demand, 100);
}

TEST(Generator, HeavyStaggeredBatches) {
  StaggeredLoadConfig c;
  c.heavy = true;
  const auto jobs = generate_synthetic(c, 1);
  std::map<std::pair<std::string, double>, int> count;
  for (const auto& j : jobs) ++count[{j.gpu_class.name(), j.submit_time}];
  EXPECT_EQ((count[{"K80", 0.0}]), 300);
  EXPECT_EQ((count[{"K80", 900.0}]), 240);
  EXPECT_EQ((count[{"P100", 1800.0}]), 110);
  EXPECT_EQ((count[{"V100", 1920.0}]), 50);
}

TEST(Generator, SameSeedSameJobs) {
  BurstyDailyConfig b;
  b.days = 5;
  EXPECT_EQ(generate_synthetic(b, 9), generate_synthetic(b, 9));
  EXPECT_NE(generate_synthetic(b, 9), generate_synthetic(b, 10));
}

TEST(Generator, InvalidConfigIsRejected) {
  GangExperimentConfig g;
  g.learners = 0;
  EXPECT_THROW(generate_synthetic(g, 1), Error);
}

TEST(Generator, ConfigJsonRoundTrip) {
  const WorkloadConfig c = trace_workload();
  const auto back = workload_config_from_json(to_json(c));
  EXPECT_EQ(generate_synthetic(back, 4), generate_synthetic(c, 4));
}
