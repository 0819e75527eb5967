#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"

using namespace gangsim;
using testing_helpers::gpu_only_cluster;
using testing_helpers::gpus;
using testing_helpers::job;

namespace {

std::vector<NodeIndex> all_nodes(const Cluster& c) {
  std::vector<NodeIndex> v(c.size());
  std::iota(v.begin(), v.end(), NodeIndex{0});
  return v;
}

// Independent feasibility check: per-node cumulative demand against
// capacity minus everything held, node Ready, class equal.
bool oracle_fits(const ResourceVector& d, const std::vector<NodeIndex>& a, const Cluster& c) {
  std::map<NodeIndex, std::int64_t> g, cpu, mem;
  for (NodeIndex n : a) {
    g[n] += d.gpus;
    cpu[n] += d.cpu_millis;
    mem[n] += d.mem_mb;
  }
  for (const auto& [n, want] : g) {
    const Node& node = c.node(n);
    if (node.status() != NodeStatus::Ready) return false;
    if (d.gpus > 0 && node.gpu_class() != d.gpu_class) return false;
    std::int64_t held_g = 0, held_c = 0, held_m = 0;
    for (const auto& p : node.pods()) {
      held_g += p.demand.gpus;
      held_c += p.demand.cpu_millis;
      held_m += p.demand.mem_mb;
    }
    for (const auto& r : node.reservations()) {
      held_g += r.demand.gpus;
      held_c += r.demand.cpu_millis;
      held_m += r.demand.mem_mb;
    }
    if (want + held_g > node.capacity().gpus) return false;
    if (cpu[n] + held_c > node.capacity().cpu_millis) return false;
    if (mem[n] + held_m > node.capacity().mem_mb) return false;
  }
  return true;
}

// Enumerates every assignment of `pods` pods to the cluster's nodes.
template <class F>
void for_each_assignment(std::size_t nodes, int pods, F&& f) {
  std::vector<NodeIndex> a(static_cast<std::size_t>(pods), 0);
  for (;;) {
    f(a);
    int i = 0;
    while (i < pods && ++a[static_cast<std::size_t>(i)] == nodes) a[static_cast<std::size_t>(i++)] = 0;
    if (i == pods) return;
  }
}

Cluster random_cluster(Rng& rng) {
  Cluster c;
  const int n = 1 + static_cast<int>(rng.below(6));
  for (int i = 0; i < n; ++i) {
    const GpuClass cls = rng.below(4) == 0 ? GpuClass::V100() : GpuClass::K80();
    const std::int64_t g = 1 + static_cast<std::int64_t>(rng.below(4));
    c.add_node("n" + std::to_string(i), ResourceVector{g, cls, 16000, 65536});
  }
  for (int i = 0; i < n; ++i) {
    const Node& node = c.node(static_cast<NodeIndex>(i));
    const std::int64_t used = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(node.capacity().gpus) + 1));
    if (used > 0) {
      const ResourceVector d{used, node.gpu_class(), 1000 * static_cast<std::int64_t>(rng.below(8)), 1024};
      if (rng.below(2) == 0) c.allocate(static_cast<NodeIndex>(i), d, PodKey{"bg", i});
      else c.reserve(static_cast<NodeIndex>(i), d, PodKey{"bg", i});
    }
    if (rng.below(8) == 0) c.cordon(static_cast<NodeIndex>(i));
  }
  return c;
}

}  // namespace

TEST(Predicates, FirstFailingPredicate) {
  Cluster c = gpu_only_cluster({2, 2});
  c.add_node("v", ResourceVector{2, GpuClass::V100(), 0, 0});
  c.allocate(0, gpus(2), PodKey{"x", 0});
  c.cordon(1);
  EXPECT_EQ(check_predicates(gpus(1), c.node(0)), Predicate::InsufficientGpu);
  EXPECT_EQ(check_predicates(gpus(1), c.node(1)), Predicate::NodeUnschedulable);
  EXPECT_EQ(check_predicates(gpus(1), c.node(2)), Predicate::GpuClassMismatch);
  EXPECT_EQ(check_predicates(gpus(1, GpuClass::V100()), c.node(2)), std::nullopt);
  const ResourceVector cpu_heavy{1, GpuClass::K80(), 64000, 0};
  Cluster d = uniform_cluster(1, GpuClass::K80(), 4);
  EXPECT_EQ(check_predicates(cpu_heavy, d.node(0)), Predicate::InsufficientCpu);
}

TEST(Predicates, UnschedulableTallyMessage) {
  Cluster c = gpu_only_cluster({1, 1});
  c.cordon(1);
  const auto d = schedule_pod(PodRequest{"j", 0, gpus(2)}, c, RankPolicy::Spread);
  EXPECT_FALSE(d.placed());
  EXPECT_EQ(d.tally.count(Predicate::InsufficientGpu), 1);
  EXPECT_EQ(d.tally.count(Predicate::NodeUnschedulable), 1);
  EXPECT_NE(d.tally.summary().find("InsufficientGpu (1)"), std::string::npos);
}

TEST(Rank, SortOracle) {
  Cluster c = gpu_only_cluster({4, 4, 4});
  c.allocate(0, gpus(3), PodKey{"a", 0});
  c.allocate(2, gpus(1), PodKey{"b", 0});
  const auto nodes = all_nodes(c);
  auto order = [&](RankPolicy p) {
    std::vector<NodeIndex> out;
    for (const auto& s : rank_nodes(nodes, c, p)) out.push_back(s.node);
    return out;
  };
  EXPECT_EQ(order(RankPolicy::Pack), (std::vector<NodeIndex>{0, 2, 1}));
  EXPECT_EQ(order(RankPolicy::Spread), (std::vector<NodeIndex>{1, 2, 0}));
}

TEST(Rank, RandomClustersMatchStableSortOracle) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    Cluster c = random_cluster(rng);
    const auto nodes = all_nodes(c);
    for (RankPolicy p : {RankPolicy::Pack, RankPolicy::Spread}) {
      std::vector<NodeIndex> expect = nodes;
      auto key = [&](NodeIndex n) {
        return p == RankPolicy::Pack ? c.node(n).capacity().gpus - c.node(n).free().gpus
                                     : c.node(n).free().gpus;
      };
      std::stable_sort(expect.begin(), expect.end(),
                       [&](NodeIndex a, NodeIndex b) { return key(a) > key(b); });
      std::vector<NodeIndex> got;
      for (const auto& s : rank_nodes(nodes, c, p)) got.push_back(s.node);
      ASSERT_EQ(got, expect);
    }
  }
}

TEST(Gang, BestFitPlacement) {
  Cluster c = gpu_only_cluster({4, 4});
  Rng rng(1);
  SchedulerConfig cfg;
  const auto d = schedule_gang(Gang{"g", 2, gpus(3)}, c, cfg, rng);
  ASSERT_TRUE(d.placed());
  EXPECT_EQ(d.assignment->nodes, (std::vector<NodeIndex>{0, 1}));
}

TEST(Gang, InfeasibleGangHoldsNothing) {
  Cluster c = gpu_only_cluster({4, 4});
  c.allocate(1, gpus(2), PodKey{"x", 0});
  Rng rng(1);
  SchedulerConfig cfg;
  const auto d = schedule_gang(Gang{"g", 2, gpus(3)}, c, cfg, rng);
  EXPECT_FALSE(d.placed());
  EXPECT_EQ(c.held_gpus(), 2);
  EXPECT_EQ(c.reservation_count(), 0u);
}

TEST(Gang, EightGpuGangOnSixFreeIsNotPlaced) {
  Cluster c = gpu_only_cluster({4, 4});
  c.allocate(0, gpus(2), PodKey{"x", 0});
  Rng rng(2);
  SchedulerConfig cfg;
  EXPECT_FALSE(schedule_gang(Gang{"g", 8, gpus(1)}, c, cfg, rng).placed());
  EXPECT_EQ(c.held_gpus(), 2);
}

TEST(Gang, ReservesUnmaterializedPods) {
  Cluster c = gpu_only_cluster({4});
  Rng rng(3);
  SchedulerConfig cfg;
  schedule_gang(Gang{"g", 3, gpus(1)}, c, cfg, rng, 1);
  EXPECT_EQ(c.pod_count(), 1u);
  EXPECT_EQ(c.reservation_count(), 2u);
  EXPECT_EQ(c.held_gpus(), 3);
}

TEST(GangProperty, FeasibilityMatchesExhaustiveEnumeration) {
  Rng rng(2024);
  SchedulerConfig cfg;
  cfg.samples = 8;
  int feasible_cases = 0;
  for (int t = 0; t < 400; ++t) {
    const Cluster c = random_cluster(rng);
    const int pods = 1 + static_cast<int>(rng.below(4));
    const GpuClass cls = rng.below(4) == 0 ? GpuClass::V100() : GpuClass::K80();
    const ResourceVector d{1 + static_cast<std::int64_t>(rng.below(3)), cls,
                           1000 * static_cast<std::int64_t>(rng.below(6)), 1024};
    bool any = false;
    Objective best{};
    for_each_assignment(c.size(), pods, [&](const std::vector<NodeIndex>& a) {
      if (!oracle_fits(d, a, c)) return;
      const Objective o = evaluate_objective(d, a, c);
      if (!any || o < best) best = o;
      any = true;
    });
    Rng plan_rng(static_cast<std::uint64_t>(t));
    const Assignment a = plan_gang(d, pods, c, cfg, plan_rng);
    ASSERT_EQ(a.feasible, any) << "trial " << t;
    if (!any) continue;
    ++feasible_cases;
    ASSERT_EQ(a.nodes.size(), static_cast<std::size_t>(pods));
    ASSERT_TRUE(oracle_fits(d, a.nodes, c)) << "trial " << t;
    EXPECT_GE(a.objective, best);
    EXPECT_EQ(a.objective, evaluate_objective(d, a.nodes, c));
    Cluster copy = c;
    Rng r2(static_cast<std::uint64_t>(t));
    const auto dec = schedule_gang(Gang{"new", pods, d}, copy, cfg, r2);
    ASSERT_TRUE(dec.placed());
    EXPECT_EQ(copy.held_gpus(), c.held_gpus() + pods * d.gpus);
    copy.check_invariants();
  }
  EXPECT_GT(feasible_cases, 50);
}

TEST(Gang, SamplingIsDeterministicPerSeed) {
  Cluster c = uniform_cluster(6, GpuClass::K80(), 4);
  c.allocate(2, gpus(1), PodKey{"x", 0});
  SchedulerConfig cfg;
  Rng a(5), b(5);
  EXPECT_EQ(plan_gang(gpus(1), 5, c, cfg, a).nodes, plan_gang(gpus(1), 5, c, cfg, b).nodes);
}

TEST(Dispatch, LargerGangFirstOnEqualSubmitTime) {
  std::vector<JobSpec> q{job("a-small", 2, 1, 100), job("b-big", 4, 1, 100)};
  Cluster c = uniform_cluster(1, GpuClass::K80(), 4);
  SchedulerConfig cfg;
  Rng rng(1);
  const auto placed = dispatch(q, c, cfg, rng);
  ASSERT_EQ(placed.size(), 4u);
  for (const auto& p : placed) EXPECT_EQ(p.job_id, "b-big");
  EXPECT_TRUE(dispatch_before(q[1], q[0]));
}

TEST(Dispatch, BlockedGangDoesNotBlockSmallerJobs) {
  std::vector<JobSpec> q{job("big", 8, 1, 100), job("small", 1, 1, 100, 1)};
  Cluster c = uniform_cluster(1, GpuClass::K80(), 4);
  SchedulerConfig cfg;
  Rng rng(1);
  const auto placed = dispatch(q, c, cfg, rng);
  ASSERT_EQ(placed.size(), 1u);
  EXPECT_EQ(placed[0].job_id, "small");
}

TEST(Dispatch, RoundRobinInterleavesLearners) {
  std::vector<JobSpec> q{job("a", 2, 2, 100), job("b", 2, 2, 100)};
  Cluster c = uniform_cluster(1, GpuClass::K80(), 4);
  SchedulerConfig cfg;
  cfg.policy = Policy::PodSpread;
  cfg.pod_order = PodOrder::RoundRobin;
  Rng rng(1);
  const auto placed = dispatch(q, c, cfg, rng);
  ASSERT_EQ(placed.size(), 2u);
  EXPECT_NE(placed[0].job_id, placed[1].job_id);
}

TEST(PodQueue, ReplacementsJumpAhead) {
  PodQueue q;
  q.push_back(QueuedPod{PodRequest{"a", 0, gpus(1)}, false});
  q.push_front(QueuedPod{PodRequest{"r", 1, gpus(1)}, true});
  q.push_front(QueuedPod{PodRequest{"s", 0, gpus(1)}, true});
  EXPECT_EQ(q.pods()[0].request.gang_id, "r");
  EXPECT_EQ(q.pods()[1].request.gang_id, "s");
  EXPECT_EQ(q.pods()[2].request.gang_id, "a");
  EXPECT_EQ(q.remove_gang("a"), 1u);
}

TEST(Deadlock, NeverReportedUnderGang) {
  const std::vector<PlacementView> v{{"j", 2, 1, 1, true, 0.0}};
  EXPECT_TRUE(detect_deadlocks(v, 10000, 600, Policy::Gang).empty());
}

TEST(Deadlock, OnlyAfterTimeout) {
  const std::vector<PlacementView> v{{"j", 4, 3, 2, true, 0.0}, {"async", 2, 1, 1, false, 0.0}};
  EXPECT_TRUE(detect_deadlocks(v, 600, 600, Policy::PodSpread).empty());
  const auto r = detect_deadlocks(v, 601, 600, Policy::PodSpread);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0], (DeadlockReport{"j", 3, 6}));
}
