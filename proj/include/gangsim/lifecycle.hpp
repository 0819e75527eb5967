#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gangsim/cluster.hpp"
#include "gangsim/error.hpp"
#include "gangsim/rng.hpp"
#include "gangsim/store.hpp"
#include "gangsim/workload.hpp"

namespace gangsim {

enum class JobStatus {
  QUEUED,
  DEPLOYING,
  DOWNLOADING,
  PROCESSING,
  STORING,
  COMPLETED,
  FAILED,
  HALTED,
  RESUMED,
};

inline std::string_view to_string(JobStatus s) {
  switch (s) {
    case JobStatus::QUEUED: return "QUEUED";
    case JobStatus::DEPLOYING: return "DEPLOYING";
    case JobStatus::DOWNLOADING: return "DOWNLOADING";
    case JobStatus::PROCESSING: return "PROCESSING";
    case JobStatus::STORING: return "STORING";
    case JobStatus::COMPLETED: return "COMPLETED";
    case JobStatus::FAILED: return "FAILED";
    case JobStatus::HALTED: return "HALTED";
    case JobStatus::RESUMED: return "RESUMED";
  }
  return "?";
}

inline std::optional<JobStatus> parse_job_status(std::string_view s) {
  static constexpr std::array all = {
      JobStatus::QUEUED,    JobStatus::DEPLOYING, JobStatus::DOWNLOADING,
      JobStatus::PROCESSING, JobStatus::STORING,  JobStatus::COMPLETED,
      JobStatus::FAILED,    JobStatus::HALTED,    JobStatus::RESUMED};
  for (auto st : all) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

inline bool is_terminal(JobStatus s) noexcept {
  return s == JobStatus::COMPLETED || s == JobStatus::FAILED;
}

inline bool is_legal_transition(JobStatus from, JobStatus to) noexcept {
  using S = JobStatus;
  if (is_terminal(from)) return false;
  if (to == S::FAILED || to == S::QUEUED) return true;
  switch (from) {
    case S::QUEUED: return to == S::DEPLOYING;
    case S::DEPLOYING: return to == S::DOWNLOADING;
    case S::DOWNLOADING: return to == S::PROCESSING;
    case S::PROCESSING: return to == S::STORING || to == S::HALTED;
    case S::STORING: return to == S::COMPLETED;
    case S::HALTED: return to == S::RESUMED;
    case S::RESUMED: return to == S::PROCESSING;
    default: return false;
  }
}

struct StatusChange {
  double t = 0.0;
  JobStatus status = JobStatus::QUEUED;

  friend bool operator==(const StatusChange&, const StatusChange&) = default;
};

// Lifecycle state of one job.
struct JobRecord {
  JobSpec spec;
  JobStatus status = JobStatus::QUEUED;
  std::vector<StatusChange> status_history;
  std::vector<std::optional<NodeIndex>> placements;  // by learner index
  double progress = 0.0;
  double last_checkpoint = 0.0;
  int deploy_attempts = 0;  // attempts of the current (or last) deployment
  int total_deploy_attempts = 0;
  int restarts = 0;
  int requeues = 0;
  double lost_work = 0.0;
  std::optional<double> first_placed_at;
  std::optional<double> finished_at;

  JobRecord() = default;
  JobRecord(JobSpec s, double now) : spec(std::move(s)) {
    placements.assign(static_cast<std::size_t>(spec.learners), std::nullopt);
    status_history.push_back(StatusChange{now, JobStatus::QUEUED});
  }

  const std::string& id() const noexcept { return spec.job_id; }

  // Moves to `to`, appending to the history. A transition to the current
  // status is a no-op. Throws IllegalTransition otherwise.
  bool transition(JobStatus to, double now) {
    if (to == status) return false;
    if (!is_legal_transition(status, to)) {
      throw Error(ErrorCode::IllegalTransition, "job '" + spec.job_id + "': " +
                                                    std::string(to_string(status)) + " -> " +
                                                    std::string(to_string(to)));
    }
    status = to;
    status_history.push_back(StatusChange{now, to});
    return true;
  }

  int placed_count() const {
    return static_cast<int>(std::count_if(placements.begin(), placements.end(),
                                          [](const auto& p) { return p.has_value(); }));
  }

  bool fully_placed() const { return placed_count() == spec.learners; }
  bool terminal() const { return is_terminal(status); }
};

// ---------------------------------------------------------------------------
// Store layout used by the Guardian and the per-job controller.

inline std::string job_prefix(std::string_view job_id) {
  return "/jobs/" + std::string(job_id) + "/";
}

inline std::string learner_status_key(std::string_view job_id, int learner) {
  return job_prefix(job_id) + "learner/" + std::to_string(learner) + "/status";
}

// ---------------------------------------------------------------------------
// Guardian: atomic multi-step deployment with rollback and bounded retries.

enum class DeployStep {
  ReservePlacements = 1,
  CreateVolumes = 2,
  CreateHelpers = 3,
  CreateLearners = 4,
  ApplyNetworkPolicy = 5,
};

inline constexpr int kDeploySteps = 5;

inline std::string_view to_string(DeployStep s) {
  switch (s) {
    case DeployStep::ReservePlacements: return "ReservePlacements";
    case DeployStep::CreateVolumes: return "CreateVolumes";
    case DeployStep::CreateHelpers: return "CreateHelpers";
    case DeployStep::CreateLearners: return "CreateLearners";
    case DeployStep::ApplyNetworkPolicy: return "ApplyNetworkPolicy";
  }
  return "?";
}

// Injected Guardian crash while executing `step` (1-based) of `attempt`.
struct DeployCrash {
  std::string job_id;
  int attempt = 1;
  int step = 1;
};

struct DeployFaultPlan {
  std::vector<DeployCrash> crashes;

  bool crashes_at(std::string_view job_id, int attempt, int step) const {
    return std::any_of(crashes.begin(), crashes.end(), [&](const DeployCrash& c) {
      return c.job_id == job_id && c.attempt == attempt && c.step == step;
    });
  }
};

struct GuardianConfig {
  int max_deploy_retries = 3;
  double lease_ttl = 30.0;
};

enum class AttemptOutcome { Deployed, RolledBackAndRetried, Failed };

inline std::string_view to_string(AttemptOutcome o) {
  switch (o) {
    case AttemptOutcome::Deployed: return "Deployed";
    case AttemptOutcome::RolledBackAndRetried: return "RolledBackAndRetried";
    case AttemptOutcome::Failed: return "Failed";
  }
  return "?";
}

class Guardian {
 public:
  enum class StepResult { Progressed, Deployed, Crashed, Failed };

  Guardian(const JobSpec& spec, std::vector<NodeIndex> placements, GuardianConfig config = {})
      : job_id_(spec.job_id),
        demand_(spec.per_learner_demand()),
        placements_(std::move(placements)),
        config_(config) {
    if (placements_.size() != static_cast<std::size_t>(spec.learners)) {
      throw Error(ErrorCode::InvalidConfig, "guardian for '" + job_id_ +
                                                "' needs one placement per learner");
    }
  }

  const std::string& job_id() const noexcept { return job_id_; }
  int attempt() const noexcept { return attempt_; }
  int next_step() const noexcept { return next_step_; }
  std::optional<LeaseId> lease() const noexcept { return lease_; }
  const std::vector<NodeIndex>& placements() const noexcept { return placements_; }
  const std::vector<AttemptOutcome>& outcomes() const noexcept { return outcomes_; }

  // Runs the next deploy step. A crash rolls back every completed step of the
  // attempt; the next call then starts a fresh attempt, until the retry
  // budget is spent and the job is marked FAILED with nothing left behind.
  StepResult step(JobRecord& job, Cluster& cluster, CoordinationStore& store,
                  const DeployFaultPlan& faults, double now) {
    if (done_) throw Error(ErrorCode::InvariantViolation, "guardian already finished");
    if (next_step_ == 1) {
      ++attempt_;
      job.deploy_attempts = attempt_;
      ++job.total_deploy_attempts;
      if (job.status == JobStatus::QUEUED) job.transition(JobStatus::DEPLOYING, now);
    }
    const int s = next_step_;
    bool crashed = faults.crashes_at(job_id_, attempt_, s);
    if (!crashed) {
      try {
        apply(static_cast<DeployStep>(s), cluster, store, now);
      } catch (const Error&) {
        crashed = true;
      }
    }
    if (crashed) {
      rollback(cluster, store);
      if (attempt_ >= config_.max_deploy_retries + 1) {
        outcomes_.push_back(AttemptOutcome::Failed);
        give_up(job, cluster, store, now);
        return StepResult::Failed;
      }
      outcomes_.push_back(AttemptOutcome::RolledBackAndRetried);
      return StepResult::Crashed;
    }
    completed_.push_back(s);
    if (++next_step_ <= kDeploySteps) return StepResult::Progressed;
    done_ = true;
    outcomes_.push_back(AttemptOutcome::Deployed);
    for (std::size_t i = 0; i < placements_.size(); ++i) job.placements[i] = placements_[i];
    if (!job.first_placed_at) job.first_placed_at = now;
    if (job.status == JobStatus::DEPLOYING) job.transition(JobStatus::DOWNLOADING, now);
    return StepResult::Deployed;
  }

  // Tears down a deployment in flight (e.g. one of its nodes died): every
  // completed step is undone and the gang's reservations are dropped.
  void abort(Cluster& cluster, CoordinationStore& store) {
    rollback(cluster, store);
    cluster.cancel_gang_reservations(job_id_);
    store.delete_prefix(job_prefix(job_id_));
    done_ = true;
  }

  bool finished() const noexcept { return done_; }

 private:
  void apply(DeployStep s, Cluster& cluster, CoordinationStore& store, double now) {
    const std::string prefix = job_prefix(job_id_);
    switch (s) {
      case DeployStep::ReservePlacements:
        for (std::size_t i = 0; i < placements_.size(); ++i) {
          const PodKey pod{job_id_, static_cast<int>(i)};
          const bool had_reservation = cluster.node(placements_[i]).has_reservation(pod);
          try {
            cluster.allocate(placements_[i], demand_, pod);
          } catch (const Error&) {
            undo_allocations(cluster);
            throw;
          }
          allocated_.push_back({static_cast<int>(i), had_reservation});
        }
        break;
      case DeployStep::CreateVolumes:
        store.put(prefix + "volume", "bound");
        break;
      case DeployStep::CreateHelpers:
        store.put(prefix + "helper", "running");
        break;
      case DeployStep::CreateLearners:
        lease_ = store.grant_lease(config_.lease_ttl, now);
        for (std::size_t i = 0; i < placements_.size(); ++i) {
          store.put(learner_status_key(job_id_, static_cast<int>(i)), "PENDING", lease_);
        }
        break;
      case DeployStep::ApplyNetworkPolicy:
        store.put(prefix + "netpolicy", "isolated");
        break;
    }
  }

  void undo(DeployStep s, Cluster& cluster, CoordinationStore& store) {
    const std::string prefix = job_prefix(job_id_);
    switch (s) {
      case DeployStep::ReservePlacements: undo_allocations(cluster); break;
      case DeployStep::CreateVolumes: store.erase(prefix + "volume"); break;
      case DeployStep::CreateHelpers: store.erase(prefix + "helper"); break;
      case DeployStep::CreateLearners:
        if (lease_) store.revoke(*lease_);
        for (std::size_t i = 0; i < placements_.size(); ++i) {
          store.erase(learner_status_key(job_id_, static_cast<int>(i)));
        }
        lease_.reset();
        break;
      case DeployStep::ApplyNetworkPolicy: store.erase(prefix + "netpolicy"); break;
    }
  }

  // Inverse of ReservePlacements: release what we allocated and hand the
  // capacity back to the gang's reservation when it came from one. Pods
  // that are already gone (evicted) are skipped.
  void undo_allocations(Cluster& cluster) {
    for (auto it = allocated_.rbegin(); it != allocated_.rend(); ++it) {
      const PodKey pod{job_id_, it->learner};
      const NodeIndex n = placements_[static_cast<std::size_t>(it->learner)];
      if (!cluster.node(n).has_pod(pod)) continue;
      cluster.release(n, demand_, pod);
      if (it->had_reservation && cluster.node(n).status() == NodeStatus::Ready) {
        cluster.reserve(n, demand_, pod);
      }
    }
    allocated_.clear();
  }

  void rollback(Cluster& cluster, CoordinationStore& store) {
    for (auto it = completed_.rbegin(); it != completed_.rend(); ++it) {
      undo(static_cast<DeployStep>(*it), cluster, store);
    }
    completed_.clear();
    undo_allocations(cluster);
    next_step_ = 1;
  }

  void give_up(JobRecord& job, Cluster& cluster, CoordinationStore& store, double now) {
    cluster.cancel_gang_reservations(job_id_);
    store.delete_prefix(job_prefix(job_id_));
    done_ = true;
    job.transition(JobStatus::FAILED, now);
    job.finished_at = now;
  }

  struct Allocated {
    int learner = 0;
    bool had_reservation = false;
  };

  std::string job_id_;
  ResourceVector demand_;
  std::vector<NodeIndex> placements_;
  GuardianConfig config_;
  std::vector<int> completed_;
  std::vector<Allocated> allocated_;
  std::vector<AttemptOutcome> outcomes_;
  std::optional<LeaseId> lease_;
  int attempt_ = 0;
  int next_step_ = 1;
  bool done_ = false;
};

struct DeployReport {
  std::vector<AttemptOutcome> attempts;
  AttemptOutcome final_outcome = AttemptOutcome::Failed;
  std::optional<LeaseId> lease;
};

// Runs a Guardian to completion. `placements` is the scheduler's grant, one
// node per learner; capacity may already be reserved for the gang.
inline DeployReport guardian_deploy(JobRecord& job, const std::vector<NodeIndex>& placements,
                                    Cluster& cluster, CoordinationStore& store,
                                    const DeployFaultPlan& faults, GuardianConfig config = {},
                                    double now = 0.0) {
  if (job.status != JobStatus::QUEUED && job.status != JobStatus::RESUMED) {
    throw Error(ErrorCode::IllegalTransition,
                "job '" + job.id() + "' is " + std::string(to_string(job.status)) +
                    ", not QUEUED");
  }
  Guardian g(job.spec, placements, config);
  for (;;) {
    const auto r = g.step(job, cluster, store, faults, now);
    if (r == Guardian::StepResult::Deployed || r == Guardian::StepResult::Failed) break;
  }
  DeployReport report;
  report.attempts = g.outcomes();
  report.final_outcome = report.attempts.back();
  report.lease = g.lease();
  return report;
}

// ---------------------------------------------------------------------------
// Controller status aggregation.

struct ControllerVerdict {
  std::optional<JobStatus> aggregated;
  std::vector<int> failed_learners;
  std::vector<int> unknown_learners;
  bool recovery_needed = false;
  bool changed = false;
};

// Reads every learner's status from the store and records the job's overall
// status. Sync jobs are PROCESSING only when every learner is; a FAILED
// learner asks for recovery and leaves the job status alone; a missing key is
// "unknown" and is left to the liveness timer.
inline ControllerVerdict controller_tick(JobRecord& job, const CoordinationStore& store,
                                         double now) {
  ControllerVerdict v;
  std::map<std::string, int> counts;
  for (int i = 0; i < job.spec.learners; ++i) {
    const auto value = store.get(learner_status_key(job.id(), i));
    if (!value) {
      v.unknown_learners.push_back(i);
    } else if (*value == "FAILED") {
      v.failed_learners.push_back(i);
    } else {
      ++counts[*value];
    }
  }
  if (!v.failed_learners.empty()) {
    v.recovery_needed = true;
    return v;
  }
  if (!v.unknown_learners.empty()) return v;

  std::optional<JobStatus> target;
  if (counts.size() == 1) {
    target = parse_job_status(counts.begin()->first);
  } else if (!job.spec.sync && counts.count("PROCESSING") != 0) {
    target = JobStatus::PROCESSING;
  }
  if (!target || *target == JobStatus::QUEUED) return v;
  v.aggregated = target;
  if (*target != job.status && is_legal_transition(job.status, *target)) {
    v.changed = job.transition(*target, now);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Node failure recovery and checkpointing.

struct RecoveryAction {
  std::string job_id;
  std::vector<int> learners;  // evicted learner indices
  JobStatus status_at_failure = JobStatus::QUEUED;
  double progress_at_failure = 0.0;
  double resume_progress = 0.0;
  double lost_work = 0.0;
};

// Applies evictions to the affected jobs. Evicted learners lose their
// placement; a synchronous job in PROCESSING is rewound to its last
// checkpoint (progress 0 when it never checkpoints). Asynchronous jobs keep
// their progress: survivors continue and the replacement rejoins them.
inline std::vector<RecoveryAction> handle_node_failure(std::span<const PodPlacement> evictions,
                                                       std::span<JobRecord> jobs, double now) {
  (void)now;
  std::map<std::string, JobRecord*> by_id;
  for (auto& j : jobs) by_id.emplace(j.id(), &j);

  std::map<std::string, RecoveryAction> actions;
  for (const auto& e : evictions) {
    auto it = by_id.find(e.pod.gang_id);
    if (it == by_id.end()) continue;
    JobRecord& job = *it->second;
    auto& action = actions[job.id()];
    if (action.job_id.empty()) {
      action.job_id = job.id();
      action.status_at_failure = job.status;
      action.progress_at_failure = job.progress;
      action.resume_progress = job.progress;
    }
    action.learners.push_back(e.pod.learner);
    if (e.pod.learner >= 0 && e.pod.learner < job.spec.learners) {
      job.placements[static_cast<std::size_t>(e.pod.learner)].reset();
    }
  }

  std::vector<RecoveryAction> out;
  for (auto& [id, action] : actions) {
    JobRecord& job = *by_id.at(id);
    std::sort(action.learners.begin(), action.learners.end());
    if (job.status == JobStatus::PROCESSING && job.spec.sync) {
      action.resume_progress = job.last_checkpoint;
      action.lost_work = job.progress - job.last_checkpoint;
      job.progress = job.last_checkpoint;
      job.lost_work += action.lost_work;
    }
    if (job.status == JobStatus::DOWNLOADING || job.status == JobStatus::PROCESSING ||
        job.status == JobStatus::STORING || job.status == JobStatus::RESUMED) {
      ++job.restarts;
    }
    out.push_back(std::move(action));
  }
  return out;
}

// Captures current progress. Returns true when a new checkpoint was written.
inline bool take_checkpoint(JobRecord& job, double now) {
  (void)now;
  if (job.status != JobStatus::PROCESSING || job.spec.checkpoint_interval <= 0.0) return false;
  if (job.progress <= job.last_checkpoint) return false;
  job.last_checkpoint = job.progress;
  return true;
}

// ---------------------------------------------------------------------------
// Component restart times.

enum class Component { API, LCM, Guardian, Helper, Learner };

struct RecoveryRange {
  double min_s = 0.0;
  double max_s = 0.0;
};

inline RecoveryRange recovery_range(Component c) {
  switch (c) {
    case Component::API: return {3.0, 5.0};
    case Component::LCM: return {4.0, 6.0};
    case Component::Guardian: return {1.0, 2.0};
    case Component::Helper: return {3.0, 4.0};
    case Component::Learner: return {10.0, 20.0};
  }
  return {};
}

inline Component parse_component(std::string_view name) {
  if (name == "API") return Component::API;
  if (name == "LCM") return Component::LCM;
  if (name == "Guardian") return Component::Guardian;
  if (name == "Helper") return Component::Helper;
  if (name == "Learner") return Component::Learner;
  throw Error(ErrorCode::UnknownComponent, "unknown component '" + std::string(name) + "'");
}

// Restart delay drawn uniformly from the component's measured range.
inline double component_recovery_delay(Component c, Rng& rng) {
  const auto r = recovery_range(c);
  return rng.uniform(r.min_s, r.max_s);
}

inline double component_recovery_delay(std::string_view name, Rng& rng) {
  return component_recovery_delay(parse_component(name), rng);
}

}  // namespace gangsim
