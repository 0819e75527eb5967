#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gangsim/cluster.hpp"
#include "gangsim/error.hpp"
#include "gangsim/lifecycle.hpp"
#include "gangsim/rng.hpp"
#include "gangsim/scheduler.hpp"
#include "gangsim/store.hpp"
#include "gangsim/workload.hpp"

namespace gangsim {

struct LifecycleConfig {
  double deploy_step_s = 0.5;
  double download_s = 60.0;
  double store_s = 60.0;
  double checkpoint_cost_s = 0.0;
  int max_deploy_retries = 3;
  double lease_ttl_s = 30.0;
  double requeue_grace_s = 900.0;
  double dispatch_period_s = 10.0;
  double deadlock_scan_s = 60.0;

  void validate() const {
    if (deploy_step_s < 0 || download_s < 0 || store_s < 0 || checkpoint_cost_s < 0) {
      throw Error(ErrorCode::InvalidConfig, "phase durations must be >= 0");
    }
    if (max_deploy_retries < 0) {
      throw Error(ErrorCode::InvalidConfig, "max_deploy_retries must be >= 0");
    }
    if (!(lease_ttl_s > 0) || !(dispatch_period_s > 0) || !(deadlock_scan_s > 0) ||
        requeue_grace_s < 0) {
      throw Error(ErrorCode::InvalidConfig, "periods and ttl must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Fault plans.

enum class NodeEventKind { Fail, Recover, Cordon };

struct NodeEvent {
  double t = 0.0;
  std::string node_id;
  NodeEventKind kind = NodeEventKind::Fail;
  double down_s = -1.0;  // Fail only; negative means the node never comes back
};

// Independent exponential failures per node; down time is exponential too.
struct StochasticFailures {
  double mtbf_s = 0.0;
  double down_mean_s = 3600.0;
};

struct UserAction {
  double t = 0.0;
  std::string job_id;
  bool halt = true;  // false = resume
};

struct FaultPlan {
  std::vector<NodeEvent> node_events;
  std::optional<StochasticFailures> stochastic;
  DeployFaultPlan deploy;
  std::vector<UserAction> user_actions;

  bool empty() const {
    return node_events.empty() && !stochastic && deploy.crashes.empty() && user_actions.empty();
  }
};

// Fault plan file: a JSON list of entries with a "kind" and either a time
// "t" or a "trigger", and a "target" (node id or job id).
inline FaultPlan fault_plan_from_json(const nlohmann::json& doc) {
  FaultPlan plan;
  if (!doc.is_array()) throw Error(ErrorCode::InvalidConfig, "fault plan must be a list");
  try {
    for (const auto& e : doc) {
      const std::string kind = e.at("kind").get<std::string>();
      if (kind == "node-fail" || kind == "node-recover" || kind == "node-cordon") {
        NodeEvent ev;
        ev.t = e.at("t").get<double>();
        ev.node_id = e.at("target").get<std::string>();
        ev.kind = kind == "node-fail"      ? NodeEventKind::Fail
                  : kind == "node-recover" ? NodeEventKind::Recover
                                           : NodeEventKind::Cordon;
        ev.down_s = e.value("down_s", -1.0);
        plan.node_events.push_back(std::move(ev));
      } else if (kind == "node-mtbf") {
        StochasticFailures s;
        s.mtbf_s = e.at("mtbf_s").get<double>();
        s.down_mean_s = e.value("down_s", s.down_mean_s);
        if (!(s.mtbf_s > 0) || !(s.down_mean_s > 0)) {
          throw Error(ErrorCode::InvalidConfig, "node-mtbf needs mtbf_s > 0 and down_s > 0");
        }
        plan.stochastic = s;
      } else if (kind == "deploy-crash") {
        DeployCrash c;
        c.job_id = e.at("target").get<std::string>();
        const auto& trig = e.at("trigger");
        c.attempt = trig.value("attempt", 1);
        c.step = trig.at("step").get<int>();
        if (c.step < 1 || c.step > kDeploySteps || c.attempt < 1) {
          throw Error(ErrorCode::InvalidConfig, "deploy-crash step must be 1..5, attempt >= 1");
        }
        plan.deploy.crashes.push_back(std::move(c));
      } else if (kind == "halt" || kind == "resume") {
        plan.user_actions.push_back(
            UserAction{e.at("t").get<double>(), e.at("target").get<std::string>(), kind == "halt"});
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown fault kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad fault plan entry: ") + ex.what());
  }
  return plan;
}

inline nlohmann::json to_json(const FaultPlan& plan) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : plan.node_events) {
    nlohmann::json j = {{"t", e.t},
                        {"target", e.node_id},
                        {"kind", e.kind == NodeEventKind::Fail      ? "node-fail"
                                 : e.kind == NodeEventKind::Recover ? "node-recover"
                                                                    : "node-cordon"}};
    if (e.kind == NodeEventKind::Fail) j["down_s"] = e.down_s;
    out.push_back(std::move(j));
  }
  if (plan.stochastic) {
    out.push_back({{"kind", "node-mtbf"},
                   {"mtbf_s", plan.stochastic->mtbf_s},
                   {"down_s", plan.stochastic->down_mean_s}});
  }
  for (const auto& c : plan.deploy.crashes) {
    out.push_back({{"kind", "deploy-crash"},
                   {"target", c.job_id},
                   {"trigger", {{"attempt", c.attempt}, {"step", c.step}}}});
  }
  for (const auto& a : plan.user_actions) {
    out.push_back({{"kind", a.halt ? "halt" : "resume"}, {"t", a.t}, {"target", a.job_id}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Events.

enum class EventKind {
  JobArrival,
  DispatchTick,
  DeployStep,
  PhaseComplete,
  CheckpointDue,
  LearnerReady,
  NodeFail,
  NodeRecover,
  NodeCordon,
  LeaseExpiry,
  DeadlockScan,
  UserHalt,
  UserResume,
  SimEnd,
};

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::JobArrival: return "JobArrival";
    case EventKind::DispatchTick: return "DispatchTick";
    case EventKind::DeployStep: return "DeployStep";
    case EventKind::PhaseComplete: return "PhaseComplete";
    case EventKind::CheckpointDue: return "CheckpointDue";
    case EventKind::LearnerReady: return "LearnerReady";
    case EventKind::NodeFail: return "NodeFail";
    case EventKind::NodeRecover: return "NodeRecover";
    case EventKind::NodeCordon: return "NodeCordon";
    case EventKind::LeaseExpiry: return "LeaseExpiry";
    case EventKind::DeadlockScan: return "DeadlockScan";
    case EventKind::UserHalt: return "UserHalt";
    case EventKind::UserResume: return "UserResume";
    case EventKind::SimEnd: return "SimEnd";
  }
  return "?";
}

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::SimEnd;
  std::size_t job = kNone;
  std::size_t node = kNone;
  int learner = -1;
  std::uint64_t epoch = 0;
  double value = 0.0;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

// Min-queue on (time, seq); seq is assigned at insertion.
class EventQueue {
 public:
  std::uint64_t push(Event e) {
    e.seq = next_seq_++;
    heap_.push(e);
    return e.seq;
  }
  bool empty() const { return heap_.empty(); }
  const Event& top() const { return heap_.top(); }
  Event pop() {
    Event e = heap_.top();
    heap_.pop();
    return e;
  }
  std::size_t size() const { return heap_.size(); }

 private:
  std::priority_queue<Event, std::vector<Event>, EventAfter> heap_;
  std::uint64_t next_seq_ = 0;
};

// ---------------------------------------------------------------------------
// Inputs and results.

struct SimInput {
  Cluster cluster;
  std::vector<JobSpec> jobs;
  SchedulerConfig scheduler;
  LifecycleConfig lifecycle;
  FaultPlan faults;
  std::uint64_t seed = 1;
  double horizon = 86400.0;
  bool record_events = true;
  bool dump_store = false;
};

struct UtilSample {
  double t = 0.0;
  std::int64_t allocated_gpus = 0;
  std::int64_t held_gpus = 0;
};

struct DeadlockSample {
  double t = 0.0;
  int jobs = 0;
  int stuck_learners = 0;
  std::int64_t idle_gpus = 0;
};

struct SimCounters {
  std::int64_t pod_terminations = 0;
  std::int64_t pod_deletions_node_failure = 0;
  std::int64_t node_failures = 0;
  std::int64_t deploy_rollbacks = 0;
  std::int64_t deploy_aborts = 0;
  std::int64_t job_requeues = 0;
  std::int64_t checkpoints = 0;
  std::int64_t events_processed = 0;
};

struct LogEntry {
  double t = 0.0;
  std::uint64_t seq = 0;
  std::string kind;
  std::string job;
  std::string node;
  std::string detail;
};

struct SimResult {
  std::uint64_t seed = 0;
  double horizon = 0.0;
  Policy policy = Policy::Gang;
  std::int64_t total_gpus = 0;
  std::vector<JobRecord> jobs;
  std::vector<UtilSample> utilization;
  std::vector<DeadlockSample> deadlock_samples;
  int peak_deadlocked_learners = 0;
  std::int64_t peak_idle_gpus = 0;
  int max_concurrent_jobs = 0;
  SimCounters counters;
  std::vector<LogEntry> events;
  nlohmann::json final_store;
};

// ---------------------------------------------------------------------------

namespace detail {

// One simulation run. Owns all of its state; nothing is shared across runs.
class Simulation {
 public:
  explicit Simulation(const SimInput& in)
      : in_(in),
        cluster_(in.cluster),
        pod_rng_(Rng::substream(in.seed, "scheduling-shuffle")),
        gang_rng_(Rng::substream(in.seed, "gang-sampling")),
        fault_rng_(Rng::substream(in.seed, "fault-sampling")),
        recovery_rng_(Rng::substream(in.seed, "recovery-delays")) {}

  SimResult run() {
    validate();
    seed_events();
    while (!events_.empty()) {
      if (events_.top().time > in_.horizon) break;
      Event e = events_.pop();
      now_ = e.time;
      seq_ = e.seq;
      if (skip_when_idle(e)) continue;
      ++counters_.events_processed;
      handle(e);
      sample_utilization();
      check_invariants();
    }
    return finish();
  }

 private:
  enum class Stage { NotArrived, Waiting, Deploying, Running, Halted, Done };

  struct JobRuntime {
    JobRecord rec;
    Stage stage = Stage::NotArrived;
    std::optional<Guardian> guardian;
    std::vector<bool> ready;
    std::vector<std::uint64_t> learner_epoch;
    std::optional<double> partial_since;
    std::optional<double> missing_since;
    std::optional<double> phase_deadline;
    std::optional<LeaseId> lease;
    std::uint64_t epoch = 0;
    double rate = 0.0;
    double last_update = 0.0;
    double stalled_until = 0.0;
  };

  // ---- setup ---------------------------------------------------------------

  void validate() {
    in_.scheduler.validate();
    in_.lifecycle.validate();
    if (!(in_.horizon > 0)) throw Error(ErrorCode::ConfigError, "horizon must be positive");
    std::map<std::string, int> seen;
    for (const auto& spec : in_.jobs) {
      spec.validate();
      if (seen[spec.job_id]++ > 0) {
        throw Error(ErrorCode::ConfigError, "duplicate job id '" + spec.job_id + "'");
      }
      if (spec.submit_time >= in_.horizon) {
        throw Error(ErrorCode::ConfigError,
                    "job '" + spec.job_id + "' is submitted at or after the horizon");
      }
      const bool class_present = std::any_of(
          cluster_.nodes().begin(), cluster_.nodes().end(),
          [&](const Node& n) { return class_matches(spec.per_learner_demand(), n.gpu_class()); });
      if (!class_present) {
        throw Error(ErrorCode::ConfigError, "job '" + spec.job_id + "' wants gpu_class " +
                                                spec.gpu_class.name() +
                                                " which the topology does not have");
      }
    }
    for (const auto& ev : in_.faults.node_events) cluster_.index_of(ev.node_id);
    for (const auto& a : in_.faults.user_actions) {
      if (seen.count(a.job_id) == 0) {
        throw Error(ErrorCode::ConfigError, "user action names unknown job '" + a.job_id + "'");
      }
    }
  }

  void seed_events() {
    jobs_.reserve(in_.jobs.size());
    for (std::size_t i = 0; i < in_.jobs.size(); ++i) {
      JobRuntime rt;
      rt.rec = JobRecord(in_.jobs[i], in_.jobs[i].submit_time);
      rt.ready.assign(static_cast<std::size_t>(in_.jobs[i].learners), false);
      rt.learner_epoch.assign(static_cast<std::size_t>(in_.jobs[i].learners), 0);
      job_index_.emplace(in_.jobs[i].job_id, i);
      jobs_.push_back(std::move(rt));
      push({.time = in_.jobs[i].submit_time, .kind = EventKind::JobArrival, .job = i});
    }
    for (const auto& ev : in_.faults.node_events) {
      const NodeIndex n = cluster_.index_of(ev.node_id);
      const EventKind k = ev.kind == NodeEventKind::Fail      ? EventKind::NodeFail
                          : ev.kind == NodeEventKind::Recover ? EventKind::NodeRecover
                                                              : EventKind::NodeCordon;
      push({.time = ev.t, .kind = k, .node = n, .value = ev.down_s});
    }
    if (in_.faults.stochastic) {
      for (NodeIndex n = 0; n < cluster_.size(); ++n) {
        push({.time = fault_rng_.exponential(in_.faults.stochastic->mtbf_s),
              .kind = EventKind::NodeFail,
              .node = n,
              .epoch = 1,
              .value = fault_rng_.exponential(in_.faults.stochastic->down_mean_s)});
      }
    }
    for (const auto& a : in_.faults.user_actions) {
      push({.time = a.t,
            .kind = a.halt ? EventKind::UserHalt : EventKind::UserResume,
            .job = job_index_.at(a.job_id)});
    }
    push({.time = 0.0, .kind = EventKind::DispatchTick, .epoch = 1});
    push({.time = 0.0, .kind = EventKind::DeadlockScan, .epoch = 1});
    push({.time = in_.lifecycle.lease_ttl_s / 3.0, .kind = EventKind::LeaseExpiry, .epoch = 1});
    push({.time = in_.horizon, .kind = EventKind::SimEnd});
  }

  void push(Event e) { events_.push(e); }

  // Periodic and stochastic events stop once every job has finished.
  bool skip_when_idle(const Event& e) const {
    if (done_count_ < jobs_.size()) return false;
    const bool periodic = e.epoch == 1 && (e.kind == EventKind::DispatchTick ||
                                           e.kind == EventKind::DeadlockScan ||
                                           e.kind == EventKind::LeaseExpiry ||
                                           e.kind == EventKind::NodeFail);
    return periodic;
  }

  // ---- logging ---------------------------------------------------------------

  void log(std::string_view kind, const JobRuntime* rt, std::optional<NodeIndex> node,
           std::string detail = {}) {
    if (!in_.record_events) return;
    LogEntry entry;
    entry.t = now_;
    entry.seq = seq_;
    entry.kind = std::string(kind);
    if (rt) entry.job = rt->rec.id();
    if (node) entry.node = cluster_.node(*node).id();
    entry.detail = std::move(detail);
    log_.push_back(std::move(entry));
  }

  // ---- dispatch --------------------------------------------------------------

  void request_dispatch() {
    dirty_ = true;
    if (dispatch_requested_at_ && *dispatch_requested_at_ == now_) return;
    dispatch_requested_at_ = now_;
    push({.time = now_, .kind = EventKind::DispatchTick});
  }

  void handle(const Event& e) {
    switch (e.kind) {
      case EventKind::JobArrival: on_arrival(e); break;
      case EventKind::DispatchTick:
        // A periodic pass only retries when something may have changed.
        if (e.epoch == 0 || dirty_) dispatch();
        if (e.epoch == 1) {
          push({.time = now_ + in_.lifecycle.dispatch_period_s, .kind = EventKind::DispatchTick,
                .epoch = 1});
        }
        break;
      case EventKind::DeployStep: on_deploy_step(e); break;
      case EventKind::PhaseComplete: on_phase_complete(e); break;
      case EventKind::CheckpointDue: on_checkpoint(e); break;
      case EventKind::LearnerReady: on_learner_ready(e); break;
      case EventKind::NodeFail: on_node_fail(e); break;
      case EventKind::NodeRecover: on_node_recover(e); break;
      case EventKind::NodeCordon:
        cluster_.cordon(e.node);
        log("NodeCordon", nullptr, e.node);
        break;
      case EventKind::LeaseExpiry: on_lease_tick(); break;
      case EventKind::DeadlockScan: on_deadlock_scan(); break;
      case EventKind::UserHalt: on_halt(e); break;
      case EventKind::UserResume: on_resume(e); break;
      case EventKind::SimEnd: break;
    }
  }

  void on_arrival(const Event& e) {
    JobRuntime& rt = jobs_[e.job];
    rt.stage = Stage::Waiting;
    arrivals_.push_back(e.job);
    log("JobArrival", &rt, std::nullopt);
    request_dispatch();
  }

  bool gang_policy() const { return in_.scheduler.policy == Policy::Gang; }

  void flush_arrivals() {
    if (arrivals_.empty()) return;
    std::stable_sort(arrivals_.begin(), arrivals_.end(), [&](std::size_t a, std::size_t b) {
      return dispatch_before(jobs_[a].rec.spec, jobs_[b].rec.spec);
    });
    if (gang_policy()) {
      waiting_.insert(waiting_.end(), arrivals_.begin(), arrivals_.end());
    } else {
      enqueue_pods(arrivals_);
    }
    arrivals_.clear();
  }

  void enqueue_pods(const std::vector<std::size_t>& batch) {
    std::vector<const JobSpec*> specs;
    for (auto j : batch) specs.push_back(&jobs_[j].rec.spec);
    pod_queue_.enqueue_batch(specs, in_.scheduler.pod_order, in_.scheduler.pod_queue_jitter,
                             pod_rng_);
  }

  void dispatch() {
    dirty_ = false;
    flush_arrivals();
    if (gang_policy()) {
      dispatch_replacements_gang();
      dispatch_waiting_gang();
    } else {
      dispatch_pods();
    }
    update_concurrency();
  }

  void dispatch_replacements_gang() {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
      if (jobs_[j].stage == Stage::Running && jobs_[j].missing_since) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return *jobs_[a].missing_since < *jobs_[b].missing_since;
    });
    for (auto j : order) {
      JobRuntime& rt = jobs_[j];
      std::vector<int> missing;
      for (int i = 0; i < rt.rec.spec.learners; ++i) {
        if (!rt.rec.placements[static_cast<std::size_t>(i)]) missing.push_back(i);
      }
      if (missing.empty()) continue;
      Gang sub{rt.rec.id(), static_cast<int>(missing.size()), rt.rec.spec.per_learner_demand()};
      const auto d = schedule_gang(sub, cluster_, in_.scheduler, gang_rng_, sub.gang_size, missing);
      if (!d.placed()) continue;
      for (std::size_t k = 0; k < missing.size(); ++k) {
        replacement_placed(rt, missing[k], d.assignment->nodes[k]);
      }
    }
  }

  void dispatch_waiting_gang() {
    std::stable_sort(waiting_.begin(), waiting_.end(), [&](std::size_t a, std::size_t b) {
      return dispatch_before(jobs_[a].rec.spec, jobs_[b].rec.spec);
    });
    std::vector<std::size_t> still;
    int blocked = 0;
    bool stop = false;
    for (auto j : waiting_) {
      JobRuntime& rt = jobs_[j];
      if (rt.stage != Stage::Waiting) continue;
      if (stop) {
        still.push_back(j);
        continue;
      }
      const auto d = schedule_gang(Gang::of(rt.rec.spec), cluster_, in_.scheduler, gang_rng_, 0);
      if (!d.placed()) {
        still.push_back(j);
        if (in_.scheduler.max_queue_peek > 0 && ++blocked >= in_.scheduler.max_queue_peek) {
          stop = true;
        }
        continue;
      }
      for (std::size_t i = 0; i < d.assignment->nodes.size(); ++i) {
        rt.rec.placements[i] = d.assignment->nodes[i];
      }
      start_deploy(rt);
    }
    waiting_ = std::move(still);
  }

  void dispatch_pods() {
    const auto decisions =
        pod_queue_.dispatch(cluster_, rank_policy_of(in_.scheduler.policy), Hold::Reserve);
    for (const auto& d : decisions) {
      JobRuntime& rt = jobs_[job_index_.at(d.job_id)];
      if (rt.stage == Stage::Running) {
        replacement_placed(rt, d.learner, d.node);
        continue;
      }
      rt.rec.placements[static_cast<std::size_t>(d.learner)] = d.node;
      if (!rt.partial_since) rt.partial_since = now_;
      if (rt.rec.fully_placed()) start_deploy(rt);
    }
  }

  void replacement_placed(JobRuntime& rt, int learner, NodeIndex node) {
    rt.rec.placements[static_cast<std::size_t>(learner)] = node;
    log("ReplacementPlaced", &rt, node, "learner " + std::to_string(learner));
    push({.time = now_ + component_recovery_delay(Component::Learner, recovery_rng_),
          .kind = EventKind::LearnerReady,
          .job = index_of(rt),
          .node = node,
          .learner = learner,
          .epoch = rt.learner_epoch[static_cast<std::size_t>(learner)]});
  }

  std::size_t index_of(const JobRuntime& rt) const {
    return static_cast<std::size_t>(&rt - jobs_.data());
  }

  void update_concurrency() {
    int running = 0;
    for (const auto& rt : jobs_) {
      if ((rt.stage == Stage::Deploying || rt.stage == Stage::Running) && rt.rec.fully_placed()) {
        ++running;
      }
    }
    max_concurrent_ = std::max(max_concurrent_, running);
  }

  // ---- deployment ------------------------------------------------------------

  void start_deploy(JobRuntime& rt) {
    std::vector<NodeIndex> nodes;
    for (const auto& p : rt.rec.placements) nodes.push_back(*p);
    rt.guardian.emplace(rt.rec.spec, std::move(nodes),
                        GuardianConfig{in_.lifecycle.max_deploy_retries, in_.lifecycle.lease_ttl_s});
    rt.stage = Stage::Deploying;
    rt.partial_since.reset();
    if (!rt.rec.first_placed_at) rt.rec.first_placed_at = now_;
    if (rt.rec.status == JobStatus::QUEUED) rt.rec.transition(JobStatus::DEPLOYING, now_);
    log("Placed", &rt, std::nullopt);
    push({.time = now_ + in_.lifecycle.deploy_step_s, .kind = EventKind::DeployStep,
          .job = index_of(rt), .epoch = ++rt.epoch});
  }

  void on_deploy_step(const Event& e) {
    JobRuntime& rt = jobs_[e.job];
    if (rt.stage != Stage::Deploying || e.epoch != rt.epoch || !rt.guardian) return;
    const std::size_t pods_before = cluster_.pods_of(rt.rec.id()).size();
    const auto r = rt.guardian->step(rt.rec, cluster_, store_, in_.faults.deploy, now_);
    const std::size_t pods_after = cluster_.pods_of(rt.rec.id()).size();
    if (pods_after < pods_before) {
      counters_.pod_terminations += static_cast<std::int64_t>(pods_before - pods_after);
    }
    switch (r) {
      case Guardian::StepResult::Progressed:
        push({.time = now_ + in_.lifecycle.deploy_step_s, .kind = EventKind::DeployStep,
              .job = e.job, .epoch = rt.epoch});
        break;
      case Guardian::StepResult::Crashed:
        ++counters_.deploy_rollbacks;
        log("DeployRolledBack", &rt, std::nullopt,
            "attempt " + std::to_string(rt.guardian->attempt()));
        push({.time = now_ + component_recovery_delay(Component::Guardian, recovery_rng_),
              .kind = EventKind::DeployStep, .job = e.job, .epoch = rt.epoch});
        break;
      case Guardian::StepResult::Failed:
        log("DeployFailed", &rt, std::nullopt,
            "attempts " + std::to_string(rt.guardian->attempt()));
        rt.rec.placements.assign(rt.rec.placements.size(), std::nullopt);
        finish_job(rt);
        break;
      case Guardian::StepResult::Deployed: deployed(rt); break;
    }
  }

  void deployed(JobRuntime& rt) {
    rt.lease = rt.guardian->lease();
    rt.guardian.reset();
    rt.stage = Stage::Running;
    std::fill(rt.ready.begin(), rt.ready.end(), true);
    rt.missing_since.reset();
    rt.phase_deadline.reset();
    rt.last_update = now_;
    log("Deployed", &rt, std::nullopt);
    if (rt.rec.status == JobStatus::RESUMED) {
      rt.rec.progress = rt.rec.last_checkpoint;
      put_learners(rt, "PROCESSING");
      controller_tick(rt.rec, store_, now_);
      rt.rec.transition(JobStatus::PROCESSING, now_);
    } else {
      put_learners(rt, "DOWNLOADING");
    }
    controller_tick(rt.rec, store_, now_);
    reschedule(rt);
  }

  void put_learners(JobRuntime& rt, const std::string& value) {
    for (int i = 0; i < rt.rec.spec.learners; ++i) {
      if (rt.ready[static_cast<std::size_t>(i)]) put_learner(rt, i, value);
    }
  }

  void put_learner(JobRuntime& rt, int learner, const std::string& value) {
    std::optional<LeaseId> lease;
    if (rt.lease && store_.has_lease(*rt.lease)) lease = rt.lease;
    store_.put(learner_status_key(rt.rec.id(), learner), value, lease);
  }

  // ---- progress --------------------------------------------------------------

  void advance(JobRuntime& rt) {
    if (rt.rec.status == JobStatus::PROCESSING && rt.rate > 0.0) {
      const double from = std::max(rt.last_update, rt.stalled_until);
      if (now_ > from) {
        rt.rec.progress = std::min(rt.rec.spec.work_duration,
                                   rt.rec.progress + rt.rate * (now_ - from));
      }
    }
    rt.last_update = now_;
  }

  bool all_ready(const JobRuntime& rt) const {
    return std::all_of(rt.ready.begin(), rt.ready.end(), [](bool b) { return b; });
  }

  // Recomputes the job's progress rate and schedules its next milestone.
  // Any previously scheduled milestone is invalidated by the epoch bump.
  void reschedule(JobRuntime& rt) {
    advance(rt);
    const std::size_t j = index_of(rt);
    const auto& spec = rt.rec.spec;
    switch (rt.rec.status) {
      case JobStatus::DOWNLOADING:
      case JobStatus::STORING: {
        rt.rate = 0.0;
        if (!all_ready(rt)) {
          rt.phase_deadline.reset();
          ++rt.epoch;
          return;
        }
        if (rt.phase_deadline) return;
        const double dur = rt.rec.status == JobStatus::DOWNLOADING ? in_.lifecycle.download_s
                                                                   : in_.lifecycle.store_s;
        rt.phase_deadline = now_ + dur;
        push({.time = *rt.phase_deadline, .kind = EventKind::PhaseComplete, .job = j,
              .epoch = ++rt.epoch});
        return;
      }
      case JobStatus::PROCESSING: {
        ++rt.epoch;
        std::size_t up = 0;
        for (bool b : rt.ready) up += b ? 1 : 0;
        if (spec.sync) {
          rt.rate = up == rt.ready.size() ? 1.0 : 0.0;
        } else {
          rt.rate = static_cast<double>(up) / static_cast<double>(rt.ready.size());
        }
        if (rt.rate <= 0.0) return;
        const double start = std::max(now_, rt.stalled_until);
        const double remaining = spec.work_duration - rt.rec.progress;
        if (spec.checkpoint_interval > 0.0) {
          double k = std::floor(rt.rec.progress / spec.checkpoint_interval) + 1.0;
          double next = k * spec.checkpoint_interval;
          // k * I / I can round below k; never schedule at or behind progress.
          while (next <= rt.rec.progress) next = ++k * spec.checkpoint_interval;
          if (next < spec.work_duration) {
            push({.time = start + (next - rt.rec.progress) / rt.rate,
                  .kind = EventKind::CheckpointDue, .job = j, .epoch = rt.epoch, .value = next});
            return;
          }
        }
        push({.time = start + remaining / rt.rate, .kind = EventKind::PhaseComplete, .job = j,
              .epoch = rt.epoch, .value = spec.work_duration});
        return;
      }
      default:
        rt.rate = 0.0;
        ++rt.epoch;
        return;
    }
  }

  void on_checkpoint(const Event& e) {
    JobRuntime& rt = jobs_[e.job];
    if (rt.stage != Stage::Running || e.epoch != rt.epoch) return;
    advance(rt);
    rt.rec.progress = e.value;
    if (take_checkpoint(rt.rec, now_)) {
      ++counters_.checkpoints;
      if (in_.lifecycle.checkpoint_cost_s > 0.0) {
        rt.stalled_until = now_ + in_.lifecycle.checkpoint_cost_s;
      }
    }
    reschedule(rt);
  }

  void on_phase_complete(const Event& e) {
    JobRuntime& rt = jobs_[e.job];
    if (rt.stage != Stage::Running || e.epoch != rt.epoch) return;
    rt.phase_deadline.reset();
    switch (rt.rec.status) {
      case JobStatus::DOWNLOADING:
        put_learners(rt, "PROCESSING");
        controller_tick(rt.rec, store_, now_);
        rt.rec.transition(JobStatus::PROCESSING, now_);
        rt.last_update = now_;
        reschedule(rt);
        break;
      case JobStatus::PROCESSING:
        advance(rt);
        rt.rec.progress = rt.rec.spec.work_duration;
        put_learners(rt, "STORING");
        controller_tick(rt.rec, store_, now_);
        rt.rec.transition(JobStatus::STORING, now_);
        reschedule(rt);
        break;
      case JobStatus::STORING:
        put_learners(rt, "COMPLETED");
        controller_tick(rt.rec, store_, now_);
        rt.rec.transition(JobStatus::COMPLETED, now_);
        log("JobCompleted", &rt, std::nullopt);
        release_job(rt);
        finish_job(rt);
        break;
      default: break;
    }
  }

  // Releases every pod and reservation of a job and clears its store state.
  void release_job(JobRuntime& rt) {
    for (const auto& p : cluster_.pods_of(rt.rec.id())) {
      cluster_.release(p.node, p.demand, p.pod);
      ++counters_.pod_terminations;
    }
    cluster_.cancel_gang_reservations(rt.rec.id());
    pod_queue_.remove_gang(rt.rec.id());
    if (rt.lease) store_.revoke(*rt.lease);
    rt.lease.reset();
    store_.delete_prefix(job_prefix(rt.rec.id()));
    rt.rec.placements.assign(rt.rec.placements.size(), std::nullopt);
    std::fill(rt.ready.begin(), rt.ready.end(), false);
    rt.partial_since.reset();
    rt.missing_since.reset();
    rt.phase_deadline.reset();
    rt.rate = 0.0;
    ++rt.epoch;
  }

  void finish_job(JobRuntime& rt) {
    rt.stage = Stage::Done;
    rt.guardian.reset();
    if (rt.rec.status != JobStatus::FAILED && rt.rec.status != JobStatus::COMPLETED) {
      rt.rec.transition(JobStatus::FAILED, now_);
    }
    rt.rec.finished_at = now_;
    ++done_count_;
    request_dispatch();
  }

  // Puts a job back in the scheduling queue, holding nothing.
  void requeue(JobRuntime& rt, JobStatus status) {
    release_job(rt);
    rt.guardian.reset();
    rt.rec.progress = rt.rec.last_checkpoint;
    if (rt.rec.status != status) rt.rec.transition(status, now_);
    rt.stage = Stage::Waiting;
    if (gang_policy()) {
      waiting_.push_back(index_of(rt));
    } else {
      enqueue_pods({index_of(rt)});
    }
    request_dispatch();
  }

  // ---- faults ----------------------------------------------------------------

  void on_node_fail(const Event& e) {
    const NodeIndex n = e.node;
    const bool stochastic = e.epoch == 1;
    if (cluster_.node(n).status() == NodeStatus::NotReady) return;
    NodeFailure failure = cluster_.fail(n);
    ++counters_.node_failures;
    counters_.pod_deletions_node_failure += static_cast<std::int64_t>(failure.evicted.size());
    counters_.pod_terminations += static_cast<std::int64_t>(failure.evicted.size());
    log("NodeFail", nullptr, n, std::to_string(failure.evicted.size()) + " pods evicted");

    std::map<std::size_t, std::vector<PodPlacement>> evicted;
    std::map<std::size_t, std::vector<PodPlacement>> dropped;
    for (const auto& p : failure.evicted) evicted[job_index_.at(p.pod.gang_id)].push_back(p);
    for (const auto& p : failure.dropped_reservations) {
      dropped[job_index_.at(p.pod.gang_id)].push_back(p);
    }
    std::vector<std::size_t> affected;
    for (const auto& [j, _] : evicted) affected.push_back(j);
    for (const auto& [j, _] : dropped) {
      if (!evicted.count(j)) affected.push_back(j);
    }
    std::sort(affected.begin(), affected.end());

    for (auto j : affected) {
      JobRuntime& rt = jobs_[j];
      switch (rt.stage) {
        case Stage::Deploying: {
          const std::size_t before = cluster_.pods_of(rt.rec.id()).size();
          rt.guardian->abort(cluster_, store_);
          counters_.pod_terminations +=
              static_cast<std::int64_t>(before - cluster_.pods_of(rt.rec.id()).size());
          ++counters_.deploy_aborts;
          log("DeployAborted", &rt, n);
          requeue(rt, rt.rec.status == JobStatus::RESUMED ? JobStatus::RESUMED : JobStatus::QUEUED);
          break;
        }
        case Stage::Waiting: {
          for (const auto& p : dropped[j]) {
            rt.rec.placements[static_cast<std::size_t>(p.pod.learner)].reset();
            pod_queue_.push_front(QueuedPod{
                PodRequest{p.pod.gang_id, p.pod.learner, rt.rec.spec.per_learner_demand()}, false});
          }
          if (rt.rec.placed_count() == 0) rt.partial_since.reset();
          break;
        }
        case Stage::Running: {
          advance(rt);
          auto& pods = evicted[j];
          // Reservations on a running job's node belong to replacement pods
          // that were never materialized; treat them like evictions.
          for (const auto& p : dropped[j]) pods.push_back(p);
          const auto actions =
              handle_node_failure(pods, std::span<JobRecord>(&rt.rec, 1), now_);
          for (const auto& a : actions) {
            for (int l : a.learners) {
              rt.ready[static_cast<std::size_t>(l)] = false;
              ++rt.learner_epoch[static_cast<std::size_t>(l)];
              put_learner(rt, l, "FAILED");
              if (!gang_policy()) {
                pod_queue_.push_front(QueuedPod{
                    PodRequest{rt.rec.id(), l, rt.rec.spec.per_learner_demand()}, true});
              }
            }
            std::ostringstream detail;
            detail << "lost_work " << a.lost_work << " resume_from " << a.resume_progress;
            log("LearnersEvicted", &rt, n, detail.str());
          }
          controller_tick(rt.rec, store_, now_);
          if (!rt.missing_since) rt.missing_since = now_;
          reschedule(rt);
          break;
        }
        default: break;
      }
    }

    if (e.value >= 0.0) {
      push({.time = now_ + e.value, .kind = EventKind::NodeRecover, .node = n,
            .epoch = stochastic ? 1u : 0u});
    }
    request_dispatch();
  }

  void on_node_recover(const Event& e) {
    if (cluster_.node(e.node).status() == NodeStatus::Ready) return;
    cluster_.recover(e.node);
    log("NodeRecover", nullptr, e.node);
    if (e.epoch == 1 && in_.faults.stochastic) {
      push({.time = now_ + fault_rng_.exponential(in_.faults.stochastic->mtbf_s),
            .kind = EventKind::NodeFail,
            .node = e.node,
            .epoch = 1,
            .value = fault_rng_.exponential(in_.faults.stochastic->down_mean_s)});
    }
    request_dispatch();
  }

  void on_learner_ready(const Event& e) {
    JobRuntime& rt = jobs_[e.job];
    const auto l = static_cast<std::size_t>(e.learner);
    if (rt.stage != Stage::Running || rt.learner_epoch[l] != e.epoch || rt.ready[l]) return;
    if (rt.rec.placements[l] != e.node) return;
    rt.ready[l] = true;
    advance(rt);
    const std::string phase(to_string(rt.rec.status));
    put_learner(rt, e.learner, phase);
    if (all_ready(rt)) {
      rt.missing_since.reset();
      log("JobRecovered", &rt, e.node);
    }
    controller_tick(rt.rec, store_, now_);
    reschedule(rt);
  }

  void on_lease_tick() {
    for (auto& rt : jobs_) {
      if (rt.stage == Stage::Running && rt.lease && store_.has_lease(*rt.lease)) {
        store_.keep_alive(*rt.lease, now_);
      }
    }
    const auto expired = store_.expire_leases(now_);
    if (!expired.empty()) {
      log("LeaseExpiry", nullptr, std::nullopt, std::to_string(expired.size()) + " keys");
    }
    push({.time = now_ + in_.lifecycle.lease_ttl_s / 3.0, .kind = EventKind::LeaseExpiry,
          .epoch = 1});
  }

  void on_deadlock_scan() {
    std::vector<PlacementView> views;
    std::vector<std::size_t> owners;
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
      const JobRuntime& rt = jobs_[j];
      std::optional<double> since;
      if (rt.stage == Stage::Waiting) since = rt.partial_since;
      if (rt.stage == Stage::Running) since = rt.missing_since;
      if (!since) continue;
      views.push_back(PlacementView{rt.rec.id(), rt.rec.spec.learners, rt.rec.placed_count(),
                                    rt.rec.spec.gpus_per_learner, rt.rec.spec.sync, since});
      owners.push_back(j);
    }
    const auto reports =
        detect_deadlocks(views, now_, in_.scheduler.deadlock_timeout, in_.scheduler.policy);
    DeadlockSample sample{now_, static_cast<int>(reports.size()), 0, 0};
    for (const auto& r : reports) {
      sample.stuck_learners += r.stuck_learners;
      sample.idle_gpus += r.idle_gpus;
    }
    peak_deadlocked_ = std::max(peak_deadlocked_, sample.stuck_learners);
    peak_idle_ = std::max(peak_idle_, sample.idle_gpus);
    if (sample.jobs > 0 || last_sample_jobs_ > 0) deadlock_samples_.push_back(sample);
    last_sample_jobs_ = sample.jobs;

    if (in_.scheduler.evict_deadlocked) {
      for (const auto& r : reports) {
        JobRuntime& rt = jobs_[job_index_.at(r.job_id)];
        if (rt.stage != Stage::Waiting) continue;
        log("DeadlockEvicted", &rt, std::nullopt);
        requeue(rt, rt.rec.status);
      }
    }

    // Running jobs whose replacements could not be placed in time restart
    // from their last checkpoint.
    for (std::size_t j = 0; j < jobs_.size(); ++j) {
      JobRuntime& rt = jobs_[j];
      if (rt.stage != Stage::Running || !rt.missing_since) continue;
      const bool unplaced = rt.rec.placed_count() < rt.rec.spec.learners;
      if (unplaced && now_ - *rt.missing_since > in_.lifecycle.requeue_grace_s) {
        ++rt.rec.requeues;
        ++counters_.job_requeues;
        log("JobRequeued", &rt, std::nullopt);
        requeue(rt, JobStatus::QUEUED);
      }
    }
    push({.time = now_ + in_.lifecycle.deadlock_scan_s, .kind = EventKind::DeadlockScan,
          .epoch = 1});
  }

  void on_halt(const Event& e) {
    JobRuntime& rt = jobs_[e.job];
    if (rt.stage != Stage::Running || rt.rec.status != JobStatus::PROCESSING) {
      log("HaltIgnored", &rt, std::nullopt, std::string(to_string(rt.rec.status)));
      return;
    }
    advance(rt);
    if (rt.rec.progress > rt.rec.last_checkpoint) {
      rt.rec.last_checkpoint = rt.rec.progress;
      ++counters_.checkpoints;
    }
    release_job(rt);
    rt.rec.transition(JobStatus::HALTED, now_);
    rt.stage = Stage::Halted;
    log("JobHalted", &rt, std::nullopt);
    request_dispatch();
  }

  void on_resume(const Event& e) {
    JobRuntime& rt = jobs_[e.job];
    if (rt.stage != Stage::Halted) {
      log("ResumeIgnored", &rt, std::nullopt, std::string(to_string(rt.rec.status)));
      return;
    }
    rt.rec.transition(JobStatus::RESUMED, now_);
    rt.stage = Stage::Waiting;
    if (gang_policy()) {
      waiting_.push_back(e.job);
    } else {
      enqueue_pods({e.job});
    }
    log("JobResumed", &rt, std::nullopt);
    request_dispatch();
  }

  // ---- bookkeeping -----------------------------------------------------------

  void sample_utilization() {
    const auto alloc = cluster_.allocated_gpus();
    const auto held = cluster_.held_gpus();
    if (!util_.empty() && util_.back().allocated_gpus == alloc && util_.back().held_gpus == held) {
      return;
    }
    if (!util_.empty() && util_.back().t == now_) {
      util_.back().allocated_gpus = alloc;
      util_.back().held_gpus = held;
      return;
    }
    util_.push_back(UtilSample{now_, alloc, held});
  }

  // Every pod and reservation must belong to a job that is deploying or
  // running (or waiting with a partial pod-at-a-time placement).
  void check_invariants() const {
    cluster_.check_invariants();
    for (const auto& node : cluster_.nodes()) {
      for (const auto& p : node.pods()) {
        const auto& rt = jobs_[job_index_.at(p.pod.gang_id)];
        if (rt.stage != Stage::Deploying && rt.stage != Stage::Running) {
          throw Error(ErrorCode::InvariantViolation,
                      "zombie pod of job '" + rt.rec.id() + "' on node '" + node.id() + "'");
        }
      }
      for (const auto& r : node.reservations()) {
        const auto& rt = jobs_[job_index_.at(r.pod.gang_id)];
        if (rt.stage == Stage::Done || rt.stage == Stage::Halted) {
          throw Error(ErrorCode::InvariantViolation,
                      "stale reservation of job '" + rt.rec.id() + "' on '" + node.id() + "'");
        }
      }
    }
  }

  SimResult finish() {
    now_ = in_.horizon;
    for (auto& rt : jobs_) {
      if (rt.stage == Stage::Running) advance(rt);
    }
    SimResult r;
    r.seed = in_.seed;
    r.horizon = in_.horizon;
    r.policy = in_.scheduler.policy;
    r.total_gpus = cluster_.total_gpus();
    for (auto& rt : jobs_) {
      if (rt.rec.terminal() && (!cluster_.pods_of(rt.rec.id()).empty() ||
                                !cluster_.reservations_of(rt.rec.id()).empty())) {
        throw Error(ErrorCode::InvariantViolation,
                    "finished job '" + rt.rec.id() + "' still holds resources");
      }
      r.jobs.push_back(rt.rec);
    }
    r.utilization = std::move(util_);
    r.deadlock_samples = std::move(deadlock_samples_);
    r.peak_deadlocked_learners = peak_deadlocked_;
    r.peak_idle_gpus = peak_idle_;
    r.max_concurrent_jobs = max_concurrent_;
    r.counters = counters_;
    r.events = std::move(log_);
    if (in_.dump_store) r.final_store = store_.dump();
    return r;
  }

  SimInput in_;
  Cluster cluster_;
  CoordinationStore store_;
  EventQueue events_;
  Rng pod_rng_;
  Rng gang_rng_;
  Rng fault_rng_;
  Rng recovery_rng_;
  std::vector<JobRuntime> jobs_;
  std::map<std::string, std::size_t> job_index_;
  std::vector<std::size_t> arrivals_;
  std::vector<std::size_t> waiting_;
  PodQueue pod_queue_;
  std::optional<double> dispatch_requested_at_;
  std::size_t done_count_ = 0;
  bool dirty_ = true;
  double now_ = 0.0;
  std::uint64_t seq_ = 0;
  std::vector<UtilSample> util_;
  std::vector<DeadlockSample> deadlock_samples_;
  int last_sample_jobs_ = 0;
  int peak_deadlocked_ = 0;
  std::int64_t peak_idle_ = 0;
  int max_concurrent_ = 0;
  SimCounters counters_;
  std::vector<LogEntry> log_;
};

}  // namespace detail

// Runs one simulation to the horizon. The result is a pure function of the
// input, including the seed.
inline SimResult run(const SimInput& input) { return detail::Simulation(input).run(); }

struct BatchItem {
  std::uint64_t seed = 0;
  std::optional<SimResult> result;
  std::optional<std::string> error;
  std::optional<ErrorCode> error_code;
};

// Independent runs, one per seed, on up to `threads` workers. Results come
// back in seed order; a failing run reports its error without affecting the
// others.
inline std::vector<BatchItem> run_batch(const SimInput& base, const std::vector<std::uint64_t>& seeds,
                                        unsigned threads = 0) {
  if (seeds.empty()) throw Error(ErrorCode::ConfigError, "run_batch needs at least one seed");
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(seeds.size()));
  std::vector<BatchItem> out(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      out[i].seed = seeds[i];
      SimInput in = base;
      in.seed = seeds[i];
      try {
        out[i].result = run(in);
      } catch (const Error& e) {
        out[i].error = e.what();
        out[i].error_code = e.code();
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

// ---------------------------------------------------------------------------
// Exports. Field order is fixed so identical results serialize identically.

inline nlohmann::ordered_json job_to_json(const JobRecord& rec) {
  nlohmann::ordered_json j;
  j["job_id"] = rec.id();
  j["status"] = std::string(to_string(rec.status));
  j["submit_time"] = rec.spec.submit_time;
  j["learners"] = rec.spec.learners;
  j["gpus_per_learner"] = rec.spec.gpus_per_learner;
  j["gpu_class"] = rec.spec.gpu_class.name();
  j["first_placed_at"] = rec.first_placed_at ? nlohmann::ordered_json(*rec.first_placed_at)
                                             : nlohmann::ordered_json(nullptr);
  j["finished_at"] = rec.finished_at ? nlohmann::ordered_json(*rec.finished_at)
                                     : nlohmann::ordered_json(nullptr);
  j["progress"] = rec.progress;
  j["last_checkpoint"] = rec.last_checkpoint;
  j["lost_work"] = rec.lost_work;
  j["deploy_attempts"] = rec.deploy_attempts;
  j["restarts"] = rec.restarts;
  j["requeues"] = rec.requeues;
  return j;
}

inline nlohmann::ordered_json to_json(const SimResult& r) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  j["horizon"] = r.horizon;
  j["policy"] = std::string(to_string(r.policy));
  j["total_gpus"] = r.total_gpus;
  j["peak_deadlocked_learners"] = r.peak_deadlocked_learners;
  j["peak_idle_gpus"] = r.peak_idle_gpus;
  j["max_concurrent_jobs"] = r.max_concurrent_jobs;
  j["counters"] = {{"pod_terminations", r.counters.pod_terminations},
                   {"pod_deletions_node_failure", r.counters.pod_deletions_node_failure},
                   {"node_failures", r.counters.node_failures},
                   {"deploy_rollbacks", r.counters.deploy_rollbacks},
                   {"deploy_aborts", r.counters.deploy_aborts},
                   {"job_requeues", r.counters.job_requeues},
                   {"checkpoints", r.counters.checkpoints},
                   {"events_processed", r.counters.events_processed}};
  auto& jobs = j["jobs"] = nlohmann::ordered_json::array();
  for (const auto& rec : r.jobs) jobs.push_back(job_to_json(rec));
  auto& util = j["utilization"] = nlohmann::ordered_json::array();
  for (const auto& u : r.utilization) util.push_back({u.t, u.allocated_gpus, u.held_gpus});
  auto& dl = j["deadlock_samples"] = nlohmann::ordered_json::array();
  for (const auto& d : r.deadlock_samples) dl.push_back({d.t, d.jobs, d.stuck_learners, d.idle_gpus});
  if (!r.final_store.is_null()) j["store"] = r.final_store;
  return j;
}

inline void write_event_log(std::ostream& out, const SimResult& r) {
  for (const auto& e : r.events) {
    nlohmann::ordered_json j;
    j["t"] = e.t;
    j["seq"] = e.seq;
    j["kind"] = e.kind;
    if (!e.job.empty()) j["job"] = e.job;
    if (!e.node.empty()) j["node"] = e.node;
    if (!e.detail.empty()) j["detail"] = e.detail;
    out << j.dump() << '\n';
  }
}

// Status-history export: one {job_id, t, status} line per transition.
inline void write_status_history(std::ostream& out, const SimResult& r) {
  for (const auto& rec : r.jobs) {
    for (const auto& h : rec.status_history) {
      nlohmann::ordered_json j;
      j["job_id"] = rec.id();
      j["t"] = h.t;
      j["status"] = std::string(to_string(h.status));
      out << j.dump() << '\n';
    }
  }
}

}  // namespace gangsim
