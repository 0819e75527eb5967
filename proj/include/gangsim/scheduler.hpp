#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gangsim/cluster.hpp"
#include "gangsim/error.hpp"
#include "gangsim/rng.hpp"
#include "gangsim/workload.hpp"

namespace gangsim {

enum class Policy { PodSpread, PodPack, Gang };
enum class RankPolicy { Spread, Pack };

// How the per-pod queue is ordered when several jobs arrive together under a
// pod-at-a-time policy.
//   Fifo        all pods of a job, then the next job
//   Jitter      job order perturbed by a seeded per-batch jitter
//   RoundRobin  learner 0 of every job, then learner 1 of every job, ...
enum class PodOrder { Fifo, Jitter, RoundRobin };

inline std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::PodSpread: return "pod-spread";
    case Policy::PodPack: return "pod-pack";
    case Policy::Gang: return "gang";
  }
  return "?";
}

inline Policy parse_policy(std::string_view s) {
  if (s == "gang") return Policy::Gang;
  if (s == "pod-spread") return Policy::PodSpread;
  if (s == "pod-pack") return Policy::PodPack;
  throw Error(ErrorCode::InvalidConfig, "unknown policy '" + std::string(s) + "'");
}

inline std::string_view to_string(PodOrder o) {
  switch (o) {
    case PodOrder::Fifo: return "fifo";
    case PodOrder::Jitter: return "jitter";
    case PodOrder::RoundRobin: return "round-robin";
  }
  return "?";
}

inline PodOrder parse_pod_order(std::string_view s) {
  if (s == "fifo") return PodOrder::Fifo;
  if (s == "jitter") return PodOrder::Jitter;
  if (s == "round-robin") return PodOrder::RoundRobin;
  throw Error(ErrorCode::InvalidConfig, "unknown pod order '" + std::string(s) + "'");
}

inline RankPolicy rank_policy_of(Policy p) {
  return p == Policy::PodSpread ? RankPolicy::Spread : RankPolicy::Pack;
}

struct SchedulerConfig {
  Policy policy = Policy::Gang;
  int samples = 64;
  double deadlock_timeout = 600.0;
  // Unplaceable jobs examined per dispatch pass before the pass stops;
  // 0 examines the whole queue (a blocked job blocks only itself).
  int max_queue_peek = 0;
  PodOrder pod_order = PodOrder::Jitter;
  double pod_queue_jitter = 5.0;  // mean jitter, in job slots
  bool evict_deadlocked = false;

  void validate() const {
    if (samples < 1) throw Error(ErrorCode::InvalidConfig, "samples must be >= 1");
    if (!(deadlock_timeout >= 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "deadlock_timeout must be >= 0");
    }
    if (max_queue_peek < 0) throw Error(ErrorCode::InvalidConfig, "max_queue_peek must be >= 0");
    if (pod_queue_jitter < 0.0) {
      throw Error(ErrorCode::InvalidConfig, "pod_queue_jitter must be >= 0");
    }
  }
};

struct PodRequest {
  std::string gang_id;
  int learner_index = 0;
  ResourceVector demand;

  PodKey key() const { return PodKey{gang_id, learner_index}; }
};

// ---------------------------------------------------------------------------
// Filtering.

enum class Predicate {
  InsufficientGpu,
  InsufficientCpu,
  InsufficientMem,
  GpuClassMismatch,
  NodeUnschedulable,
};

inline constexpr std::size_t kPredicateCount = 5;

inline std::string_view to_string(Predicate p) {
  switch (p) {
    case Predicate::InsufficientGpu: return "InsufficientGpu";
    case Predicate::InsufficientCpu: return "InsufficientCpu";
    case Predicate::InsufficientMem: return "InsufficientMem";
    case Predicate::GpuClassMismatch: return "GpuClassMismatch";
    case Predicate::NodeUnschedulable: return "NodeUnschedulable";
  }
  return "?";
}

struct PredicateTally {
  std::array<int, kPredicateCount> counts{};

  void add(Predicate p) { ++counts[static_cast<std::size_t>(p)]; }
  int count(Predicate p) const { return counts[static_cast<std::size_t>(p)]; }
  int total() const {
    int t = 0;
    for (int c : counts) t += c;
    return t;
  }

  std::string summary() const {
    std::ostringstream os;
    os << "No nodes are available that match all of the predicates:";
    bool first = true;
    for (std::size_t i = 0; i < kPredicateCount; ++i) {
      if (counts[i] == 0) continue;
      os << (first ? " " : ", ") << to_string(static_cast<Predicate>(i)) << " (" << counts[i]
         << ")";
      first = false;
    }
    return os.str();
  }

  friend bool operator==(const PredicateTally&, const PredicateTally&) = default;
};

struct FilterResult {
  std::vector<NodeIndex> candidates;
  std::vector<std::pair<NodeIndex, Predicate>> excluded;

  PredicateTally tally() const {
    PredicateTally t;
    for (const auto& [n, p] : excluded) t.add(p);
    return t;
  }
};

// First failing predicate for one pod on one node, against free capacity.
inline std::optional<Predicate> check_predicates(const ResourceVector& demand, const Node& node) {
  if (node.status() != NodeStatus::Ready) return Predicate::NodeUnschedulable;
  if (!class_matches(demand, node.gpu_class())) return Predicate::GpuClassMismatch;
  const ResourceVector free = node.free();
  if (demand.gpus > free.gpus) return Predicate::InsufficientGpu;
  if (demand.cpu_millis > free.cpu_millis) return Predicate::InsufficientCpu;
  if (demand.mem_mb > free.mem_mb) return Predicate::InsufficientMem;
  return std::nullopt;
}

inline FilterResult filter_nodes(const ResourceVector& demand, const Cluster& cluster) {
  FilterResult r;
  for (NodeIndex n = 0; n < cluster.size(); ++n) {
    if (auto p = check_predicates(demand, cluster.node(n))) {
      r.excluded.emplace_back(n, *p);
    } else {
      r.candidates.push_back(n);
    }
  }
  return r;
}

inline FilterResult filter_nodes(const PodRequest& pod, const Cluster& cluster) {
  return filter_nodes(pod.demand, cluster);
}

// ---------------------------------------------------------------------------
// Ranking.

struct ScoredNode {
  NodeIndex node = 0;
  std::int64_t score = 0;

  friend bool operator==(const ScoredNode&, const ScoredNode&) = default;
};

// Pack prefers nodes with the most GPUs already held; Spread prefers the most
// free GPUs. Higher score first, ties by topology order.
inline std::vector<ScoredNode> rank_nodes(std::span<const NodeIndex> candidates,
                                          const Cluster& cluster, RankPolicy policy) {
  std::vector<ScoredNode> out;
  out.reserve(candidates.size());
  for (NodeIndex n : candidates) {
    const Node& node = cluster.node(n);
    const std::int64_t score = policy == RankPolicy::Pack ? node.held_gpus() : node.free().gpus;
    out.push_back(ScoredNode{n, score});
  }
  std::sort(out.begin(), out.end(), [](const ScoredNode& a, const ScoredNode& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.node < b.node;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Pod-at-a-time placement.

enum class Hold { Allocate, Reserve };

struct PodDecision {
  std::optional<NodeIndex> node;
  PredicateTally tally;  // filled when unschedulable

  bool placed() const noexcept { return node.has_value(); }
};

inline void hold_on(Cluster& cluster, NodeIndex n, const ResourceVector& demand,
                    const PodKey& pod, Hold hold) {
  if (hold == Hold::Allocate) {
    cluster.allocate(n, demand, pod);
  } else {
    cluster.reserve(n, demand, pod);
  }
}

// Filter, rank, and hold capacity on the best node.
inline PodDecision schedule_pod(const PodRequest& pod, Cluster& cluster, RankPolicy policy,
                                Hold hold = Hold::Allocate) {
  const FilterResult f = filter_nodes(pod.demand, cluster);
  PodDecision d;
  if (f.candidates.empty()) {
    d.tally = f.tally();
    return d;
  }
  const auto ranked = rank_nodes(f.candidates, cluster, policy);
  const NodeIndex winner = ranked.front().node;
  hold_on(cluster, winner, pod.demand, pod.key(), hold);
  d.node = winner;
  return d;
}

// ---------------------------------------------------------------------------
// Gang placement by biased sampling.

// Lexicographic: fewer newly opened nodes, then fewer free GPUs left on the
// nodes the gang touches.
struct Objective {
  std::int64_t opened_nodes = 0;
  std::int64_t free_fragments = 0;

  friend auto operator<=>(const Objective&, const Objective&) = default;
  friend bool operator==(const Objective&, const Objective&) = default;
};

struct Assignment {
  std::vector<NodeIndex> nodes;  // one per pod, in pod order
  bool feasible = false;
  Objective objective;
  int sample_index = -1;  // 0 is the greedy best-fit sample
};

struct GangDecision {
  std::optional<Assignment> assignment;
  PredicateTally tally;  // per-node verdicts for one pod when nothing fits

  bool placed() const noexcept { return assignment.has_value(); }
};

// Re-checks an assignment against current free capacity, cumulatively per node.
inline bool is_feasible(const ResourceVector& demand, std::span<const NodeIndex> nodes,
                        const Cluster& cluster) {
  std::vector<ResourceVector> used(cluster.size());
  for (NodeIndex n : nodes) {
    if (n >= cluster.size()) return false;
    const Node& node = cluster.node(n);
    if (node.status() != NodeStatus::Ready || !class_matches(demand, node.gpu_class())) {
      return false;
    }
    used[n] += demand;
    if (!used[n].fits_within(node.free())) return false;
  }
  return true;
}

inline Objective evaluate_objective(const ResourceVector& demand, std::span<const NodeIndex> nodes,
                                    const Cluster& cluster) {
  std::vector<std::int64_t> extra(cluster.size(), 0);
  std::vector<bool> touched(cluster.size(), false);
  for (NodeIndex n : nodes) {
    extra[n] += demand.gpus;
    touched[n] = true;
  }
  Objective obj;
  for (NodeIndex n = 0; n < cluster.size(); ++n) {
    if (!touched[n]) continue;
    const Node& node = cluster.node(n);
    if (node.held_gpus() == 0) ++obj.opened_nodes;
    obj.free_fragments += node.free().gpus - extra[n];
  }
  return obj;
}

namespace detail {

// Free capacity of every node as seen by one sample.
inline std::vector<ResourceVector> free_vectors(const Cluster& cluster) {
  std::vector<ResourceVector> v;
  v.reserve(cluster.size());
  for (const auto& n : cluster.nodes()) v.push_back(n.free());
  return v;
}

inline bool usable(const ResourceVector& demand, const Node& node, const ResourceVector& free) {
  return node.status() == NodeStatus::Ready && class_matches(demand, node.gpu_class()) &&
         demand.fits_within(free);
}

}  // namespace detail

// Sample 0: each pod goes to the feasible node left with the fewest free GPUs
// (ties by topology order). Pods are homogeneous, so this finds a feasible
// assignment whenever one exists.
inline std::optional<std::vector<NodeIndex>> greedy_best_fit(const ResourceVector& demand,
                                                             int pods, const Cluster& cluster) {
  auto free = detail::free_vectors(cluster);
  std::vector<NodeIndex> out;
  for (int p = 0; p < pods; ++p) {
    std::optional<NodeIndex> best;
    for (NodeIndex n = 0; n < cluster.size(); ++n) {
      if (!detail::usable(demand, cluster.node(n), free[n])) continue;
      if (!best || free[n].gpus < free[*best].gpus) best = n;
    }
    if (!best) return std::nullopt;
    free[*best] -= demand;
    out.push_back(*best);
  }
  return out;
}

// One biased sample: each pod picks a node with probability proportional to
// 1 + GPUs held on it (counting pods already placed by this sample), among
// nodes that still fit the pod.
inline std::optional<std::vector<NodeIndex>> sample_assignment(const ResourceVector& demand,
                                                               int pods, const Cluster& cluster,
                                                               Rng& rng) {
  auto free = detail::free_vectors(cluster);
  std::vector<std::int64_t> held(cluster.size());
  for (NodeIndex n = 0; n < cluster.size(); ++n) held[n] = cluster.node(n).held_gpus();
  std::vector<NodeIndex> out;
  std::vector<double> weight(cluster.size());
  for (int p = 0; p < pods; ++p) {
    double total = 0.0;
    for (NodeIndex n = 0; n < cluster.size(); ++n) {
      weight[n] = detail::usable(demand, cluster.node(n), free[n])
                      ? 1.0 + static_cast<double>(held[n])
                      : 0.0;
      total += weight[n];
    }
    if (total <= 0.0) return std::nullopt;
    double x = rng.uniform() * total;
    NodeIndex pick = cluster.size();
    for (NodeIndex n = 0; n < cluster.size(); ++n) {
      if (weight[n] == 0.0) continue;
      pick = n;
      if (x < weight[n]) break;
      x -= weight[n];
    }
    free[pick] -= demand;
    held[pick] += demand.gpus;
    out.push_back(pick);
  }
  return out;
}

// Best of `samples` candidate assignments (greedy first). Returns an
// infeasible Assignment when no sample fits the whole gang.
inline Assignment plan_gang(const ResourceVector& demand, int pods, const Cluster& cluster,
                            const SchedulerConfig& config, Rng& rng) {
  Assignment best;
  auto consider = [&](std::optional<std::vector<NodeIndex>> nodes, int index) {
    if (!nodes) return;
    const Objective obj = evaluate_objective(demand, *nodes, cluster);
    if (!best.feasible || obj < best.objective) {
      best.nodes = std::move(*nodes);
      best.feasible = true;
      best.objective = obj;
      best.sample_index = index;
    }
  };
  consider(greedy_best_fit(demand, pods, cluster), 0);
  if (!best.feasible) return best;  // greedy is complete for homogeneous pods
  for (int s = 1; s < config.samples; ++s) {
    consider(sample_assignment(demand, pods, cluster, rng), s);
  }
  return best;
}

inline Assignment plan_gang(const Gang& gang, const Cluster& cluster,
                            const SchedulerConfig& config, Rng& rng) {
  return plan_gang(gang.per_pod_demand, gang.gang_size, cluster, config, rng);
}

// Places the gang atomically: all pods or none. Pods [0, materialized) are
// allocated; the rest are held as reservations for pods not yet created.
// `learners` names the learner index of each pod (defaults to 0..size-1).
inline GangDecision schedule_gang(const Gang& gang, Cluster& cluster,
                                  const SchedulerConfig& config, Rng& rng,
                                  int materialized = -1,
                                  std::span<const int> learners = {}) {
  if (gang.gang_size < 1) throw Error(ErrorCode::InvalidConfig, "gang has no pods");
  if (!learners.empty() && learners.size() != static_cast<std::size_t>(gang.gang_size)) {
    throw Error(ErrorCode::InvalidConfig, "learner list does not match gang size");
  }
  if (materialized < 0) materialized = gang.gang_size;
  GangDecision d;
  Assignment a = plan_gang(gang, cluster, config, rng);
  if (!a.feasible) {
    d.tally = filter_nodes(gang.per_pod_demand, cluster).tally();
    return d;
  }
  if (!is_feasible(gang.per_pod_demand, a.nodes, cluster)) {
    throw Error(ErrorCode::InvariantViolation, "gang plan for '" + gang.gang_id +
                                                   "' failed its feasibility re-check");
  }
  for (int p = 0; p < gang.gang_size; ++p) {
    const int learner = learners.empty() ? p : learners[static_cast<std::size_t>(p)];
    hold_on(cluster, a.nodes[static_cast<std::size_t>(p)], gang.per_pod_demand,
            PodKey{gang.gang_id, learner}, p < materialized ? Hold::Allocate : Hold::Reserve);
  }
  d.assignment = std::move(a);
  return d;
}

// ---------------------------------------------------------------------------
// Dispatch.

// FCFS; simultaneous arrivals go largest gang first, then by job id.
inline bool dispatch_before(const JobSpec& a, const JobSpec& b) {
  if (a.submit_time != b.submit_time) return a.submit_time < b.submit_time;
  if (a.learners != b.learners) return a.learners > b.learners;
  return a.job_id < b.job_id;
}

struct PlacementDecision {
  std::string job_id;
  int learner = 0;
  NodeIndex node = 0;

  friend bool operator==(const PlacementDecision&, const PlacementDecision&) = default;
};

struct QueuedPod {
  PodRequest request;
  bool replacement = false;  // re-created after an eviction; allocated directly
};

// Per-pod scheduling queue for the pod-at-a-time policies.
class PodQueue {
 public:
  const std::vector<QueuedPod>& pods() const noexcept { return pods_; }
  std::size_t size() const noexcept { return pods_.size(); }
  bool empty() const noexcept { return pods_.empty(); }

  // Appends the pods of jobs that arrived together, given in dispatch order.
  void enqueue_batch(std::span<const JobSpec* const> jobs, PodOrder order, double jitter_mean,
                     Rng& rng) {
    struct Keyed {
      double key;
      std::size_t seq;
      QueuedPod pod;
    };
    std::vector<Keyed> batch;
    std::size_t seq = 0;
    const double spread = order == PodOrder::Jitter && jitter_mean > 0.0
                              ? rng.exponential(jitter_mean)
                              : 0.0;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const JobSpec& spec = *jobs[j];
      for (int i = 0; i < spec.learners; ++i) {
        double key = static_cast<double>(j);
        if (order == PodOrder::RoundRobin) {
          key = static_cast<double>(i) * static_cast<double>(jobs.size()) + static_cast<double>(j);
        } else if (order == PodOrder::Jitter) {
          key += spread * rng.uniform();
        }
        batch.push_back(Keyed{key, seq++,
                              QueuedPod{PodRequest{spec.job_id, i, spec.per_learner_demand()}, false}});
      }
    }
    std::stable_sort(batch.begin(), batch.end(), [](const Keyed& a, const Keyed& b) {
      return a.key < b.key;
    });
    for (auto& k : batch) pods_.push_back(std::move(k.pod));
  }

  void push_back(QueuedPod pod) { pods_.push_back(std::move(pod)); }

  // Replacement pods jump the queue.
  void push_front(QueuedPod pod) {
    auto pos = std::find_if(pods_.begin(), pods_.end(),
                            [](const QueuedPod& q) { return !q.replacement; });
    pods_.insert(pos, std::move(pod));
  }

  std::size_t remove_gang(std::string_view gang_id) {
    return std::erase_if(pods_, [&](const QueuedPod& q) { return q.request.gang_id == gang_id; });
  }

  // Greedily places pods in queue order. Pods that do not fit stay where
  // they are. New pods are held with `hold`; replacements are allocated.
  std::vector<PlacementDecision> dispatch(Cluster& cluster, RankPolicy policy, Hold hold) {
    std::vector<PlacementDecision> out;
    std::vector<QueuedPod> waiting;
    for (auto& q : pods_) {
      const auto d = schedule_pod(q.request, cluster, policy,
                                  q.replacement ? Hold::Allocate : hold);
      if (d.placed()) {
        out.push_back(PlacementDecision{q.request.gang_id, q.request.learner_index, *d.node});
      } else {
        waiting.push_back(std::move(q));
      }
    }
    pods_ = std::move(waiting);
    return out;
  }

 private:
  std::vector<QueuedPod> pods_;
};

// One dispatch pass over a queue of not-yet-placed jobs. Under Gang each job
// is placed whole or left queued; under the pod policies pods are placed one
// at a time and leftovers wait. Capacity is held as reservations.
inline std::vector<PlacementDecision> dispatch(std::span<const JobSpec> queue, Cluster& cluster,
                                               const SchedulerConfig& config, Rng& rng) {
  std::vector<const JobSpec*> ordered;
  for (const auto& j : queue) ordered.push_back(&j);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const JobSpec* a, const JobSpec* b) { return dispatch_before(*a, *b); });

  std::vector<PlacementDecision> out;
  if (config.policy == Policy::Gang) {
    int blocked = 0;
    for (const JobSpec* spec : ordered) {
      const auto d = schedule_gang(Gang::of(*spec), cluster, config, rng, 0);
      if (!d.placed()) {
        if (config.max_queue_peek > 0 && ++blocked >= config.max_queue_peek) break;
        continue;
      }
      for (int i = 0; i < spec->learners; ++i) {
        out.push_back(PlacementDecision{spec->job_id, i, d.assignment->nodes[static_cast<std::size_t>(i)]});
      }
    }
    return out;
  }
  PodQueue pods;
  // Equal submit times form one batch.
  std::size_t start = 0;
  while (start < ordered.size()) {
    std::size_t end = start;
    while (end < ordered.size() && ordered[end]->submit_time == ordered[start]->submit_time) ++end;
    pods.enqueue_batch(std::span<const JobSpec* const>(ordered.data() + start, end - start),
                       config.pod_order, config.pod_queue_jitter, rng);
    start = end;
  }
  return pods.dispatch(cluster, rank_policy_of(config.policy), Hold::Reserve);
}

// ---------------------------------------------------------------------------
// Temporary deadlock detection.

struct PlacementView {
  std::string job_id;
  int gang_size = 1;
  int placed = 0;
  int gpus_per_learner = 1;
  bool sync = true;
  std::optional<double> partial_since;
};

struct DeadlockReport {
  std::string job_id;
  int stuck_learners = 0;
  std::int64_t idle_gpus = 0;

  friend bool operator==(const DeadlockReport&, const DeadlockReport&) = default;
};

// A synchronous job that has held a partial placement for longer than the
// timeout is deadlocked: its placed learners cannot make progress and their
// GPUs sit idle. Gang scheduling never produces partial placements, so it
// always reports nothing.
inline std::vector<DeadlockReport> detect_deadlocks(std::span<const PlacementView> jobs,
                                                    double now, double deadlock_timeout,
                                                    Policy policy) {
  std::vector<DeadlockReport> out;
  if (policy == Policy::Gang) return out;
  for (const auto& j : jobs) {
    if (!j.sync || j.placed <= 0 || j.placed >= j.gang_size || !j.partial_since) continue;
    if (now - *j.partial_since <= deadlock_timeout) continue;
    out.push_back(DeadlockReport{j.job_id, j.placed,
                                 static_cast<std::int64_t>(j.placed) * j.gpus_per_learner});
  }
  return out;
}

}  // namespace gangsim
