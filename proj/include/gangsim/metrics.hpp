#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gangsim/engine.hpp"

namespace gangsim {

inline constexpr double kDefaultQueueThreshold = 900.0;  // 15 minutes

// Step-function CDF over a finite sample: at(x) = fraction of samples <= x.
class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;
  explicit EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
    std::sort(sorted_.begin(), sorted_.end());
  }

  std::size_t size() const noexcept { return sorted_.size(); }
  bool empty() const noexcept { return sorted_.empty(); }

  double at(double x) const {
    if (sorted_.empty()) return 0.0;
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
  }

  // Smallest sample v with at(v) >= q.
  double quantile(double q) const {
    if (sorted_.empty()) return 0.0;
    q = std::clamp(q, 0.0, 1.0);
    auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted_.size())));
    k = std::clamp<std::size_t>(k, 1, sorted_.size());
    return sorted_[k - 1];
  }

  // Distinct sample values with the CDF just after each.
  std::vector<std::pair<double, double>> points() const {
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < sorted_.size(); ++i) {
      if (i + 1 < sorted_.size() && sorted_[i + 1] == sorted_[i]) continue;
      out.emplace_back(sorted_[i], static_cast<double>(i + 1) / static_cast<double>(sorted_.size()));
    }
    return out;
  }

  const std::vector<double>& samples() const noexcept { return sorted_; }

 private:
  std::vector<double> sorted_;
};

// Time each job spent queued before it first held its whole gang. Jobs that
// were never placed count up to the horizon.
inline std::vector<double> wait_times(const SimResult& r) {
  std::vector<double> out;
  out.reserve(r.jobs.size());
  for (const auto& j : r.jobs) {
    const double placed = j.first_placed_at ? *j.first_placed_at : r.horizon;
    out.push_back(std::max(0.0, placed - j.spec.submit_time));
  }
  return out;
}

inline int queued_over_threshold(const SimResult& r, double threshold = kDefaultQueueThreshold) {
  int n = 0;
  for (double w : wait_times(r)) n += w > threshold ? 1 : 0;
  return n;
}

// Same count, bucketed by the day the job was submitted.
inline std::vector<int> queued_over_threshold_by_day(const SimResult& r,
                                                     double threshold = kDefaultQueueThreshold,
                                                     double day_length = 86400.0) {
  const auto days = static_cast<std::size_t>(std::ceil(r.horizon / day_length));
  std::vector<int> out(std::max<std::size_t>(days, 1), 0);
  const auto waits = wait_times(r);
  for (std::size_t i = 0; i < r.jobs.size(); ++i) {
    if (waits[i] <= threshold) continue;
    auto d = static_cast<std::size_t>(r.jobs[i].spec.submit_time / day_length);
    if (d >= out.size()) out.resize(d + 1, 0);
    ++out[d];
  }
  return out;
}

struct FailureImpact {
  std::int64_t terminations = 0;
  std::int64_t deletions = 0;
  int jobs = 0;
  int cancelled_jobs = 0;
  double pod_deletion_pct = 0.0;
  double job_cancel_pct = 0.0;
};

// Pods deleted by node failures as a share of all pod terminations, and jobs
// that had to start over from the queue as a share of all jobs.
inline FailureImpact failure_impact(const SimResult& r) {
  FailureImpact f;
  f.terminations = r.counters.pod_terminations;
  f.deletions = r.counters.pod_deletions_node_failure;
  f.jobs = static_cast<int>(r.jobs.size());
  for (const auto& j : r.jobs) f.cancelled_jobs += j.requeues > 0 ? 1 : 0;
  if (f.terminations > 0) {
    f.pod_deletion_pct = 100.0 * static_cast<double>(f.deletions) / static_cast<double>(f.terminations);
  }
  if (f.jobs > 0) f.job_cancel_pct = 100.0 * f.cancelled_jobs / f.jobs;
  return f;
}

// Time-averaged allocated GPUs over [0, horizon], as a fraction of capacity.
inline double mean_utilization(const SimResult& r) {
  if (r.total_gpus <= 0 || r.horizon <= 0) return 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < r.utilization.size(); ++i) {
    const double t0 = std::min(r.utilization[i].t, r.horizon);
    const double t1 = i + 1 < r.utilization.size() ? std::min(r.utilization[i + 1].t, r.horizon)
                                                   : r.horizon;
    area += static_cast<double>(r.utilization[i].allocated_gpus) * std::max(0.0, t1 - t0);
  }
  return area / (static_cast<double>(r.total_gpus) * r.horizon);
}

struct RunMetrics {
  std::uint64_t seed = 0;
  std::string policy;
  int jobs = 0;
  int completed = 0;
  int failed = 0;
  int never_placed = 0;
  double mean_wait_s = 0.0;
  double p95_wait_s = 0.0;
  int queued_over_threshold = 0;
  double utilization = 0.0;
  int peak_deadlocked_learners = 0;
  std::int64_t peak_idle_gpus = 0;
  double peak_idle_pct = 0.0;
  int max_concurrent_jobs = 0;
  std::int64_t node_failures = 0;
  std::int64_t pod_terminations = 0;
  std::int64_t pod_deletions = 0;
  double pod_deletion_pct = 0.0;
  double job_cancel_pct = 0.0;
  std::int64_t deploy_rollbacks = 0;
  double lost_work_s = 0.0;
  double makespan_s = 0.0;
};

inline RunMetrics compute_metrics(const SimResult& r, double threshold = kDefaultQueueThreshold) {
  RunMetrics m;
  m.seed = r.seed;
  m.policy = std::string(to_string(r.policy));
  m.jobs = static_cast<int>(r.jobs.size());
  for (const auto& j : r.jobs) {
    if (j.status == JobStatus::COMPLETED) ++m.completed;
    if (j.status == JobStatus::FAILED) ++m.failed;
    if (!j.first_placed_at) ++m.never_placed;
    m.lost_work_s += j.lost_work;
    if (j.finished_at) m.makespan_s = std::max(m.makespan_s, *j.finished_at);
  }
  const auto waits = wait_times(r);
  if (!waits.empty()) {
    double sum = 0.0;
    for (double w : waits) sum += w;
    m.mean_wait_s = sum / static_cast<double>(waits.size());
    m.p95_wait_s = EmpiricalCdf(waits).quantile(0.95);
  }
  m.queued_over_threshold = queued_over_threshold(r, threshold);
  m.utilization = mean_utilization(r);
  m.peak_deadlocked_learners = r.peak_deadlocked_learners;
  m.peak_idle_gpus = r.peak_idle_gpus;
  if (r.total_gpus > 0) {
    m.peak_idle_pct = 100.0 * static_cast<double>(r.peak_idle_gpus) / static_cast<double>(r.total_gpus);
  }
  m.max_concurrent_jobs = r.max_concurrent_jobs;
  const auto f = failure_impact(r);
  m.node_failures = r.counters.node_failures;
  m.pod_terminations = f.terminations;
  m.pod_deletions = f.deletions;
  m.pod_deletion_pct = f.pod_deletion_pct;
  m.job_cancel_pct = f.job_cancel_pct;
  m.deploy_rollbacks = r.counters.deploy_rollbacks;
  return m;
}

// CDF across runs of the peak number of deadlocked learners.
inline EmpiricalCdf deadlock_cdf(const std::vector<SimResult>& runs) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.peak_deadlocked_learners);
  return EmpiricalCdf(std::move(v));
}

// CDF across runs of peak idle GPUs, as a percentage of cluster capacity.
inline EmpiricalCdf idle_gpu_cdf(const std::vector<SimResult>& runs) {
  std::vector<double> v;
  for (const auto& r : runs) {
    v.push_back(r.total_gpus > 0 ? 100.0 * static_cast<double>(r.peak_idle_gpus) /
                                       static_cast<double>(r.total_gpus)
                                 : 0.0);
  }
  return EmpiricalCdf(std::move(v));
}

// ---------------------------------------------------------------------------
// Export. The column order is part of the output format; append only.

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "seed",          "policy",
      "jobs",          "completed",
      "failed",        "never_placed",
      "mean_wait_s",   "p95_wait_s",
      "queued_over_threshold",
      "utilization",   "peak_deadlocked_learners",
      "peak_idle_gpus", "peak_idle_pct",
      "max_concurrent_jobs",
      "node_failures", "pod_terminations",
      "pod_deletions", "pod_deletion_pct",
      "job_cancel_pct", "deploy_rollbacks",
      "lost_work_s",   "makespan_s"};
  return cols;
}

namespace detail {
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace detail

inline std::vector<std::string> metrics_row(const RunMetrics& m) {
  using detail::fmt;
  return {std::to_string(m.seed),
          m.policy,
          std::to_string(m.jobs),
          std::to_string(m.completed),
          std::to_string(m.failed),
          std::to_string(m.never_placed),
          fmt(m.mean_wait_s),
          fmt(m.p95_wait_s),
          std::to_string(m.queued_over_threshold),
          fmt(m.utilization),
          std::to_string(m.peak_deadlocked_learners),
          std::to_string(m.peak_idle_gpus),
          fmt(m.peak_idle_pct),
          std::to_string(m.max_concurrent_jobs),
          std::to_string(m.node_failures),
          std::to_string(m.pod_terminations),
          std::to_string(m.pod_deletions),
          fmt(m.pod_deletion_pct),
          fmt(m.job_cancel_pct),
          std::to_string(m.deploy_rollbacks),
          fmt(m.lost_work_s),
          fmt(m.makespan_s)};
}

inline void write_csv_header(std::ostream& out) {
  const auto& cols = metrics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

inline void write_csv_row(std::ostream& out, const RunMetrics& m) {
  const auto row = metrics_row(m);
  for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
  out << '\n';
}

inline void write_csv(std::ostream& out, const std::vector<RunMetrics>& rows) {
  write_csv_header(out);
  for (const auto& m : rows) write_csv_row(out, m);
}

// CDF tables: one row per support point of each distribution across runs.
struct CdfTable {
  std::string metric;
  EmpiricalCdf cdf;
};

inline std::vector<CdfTable> cdf_tables(const std::vector<SimResult>& runs) {
  return {{"peak_deadlocked_learners", deadlock_cdf(runs)}, {"peak_idle_pct", idle_gpu_cdf(runs)}};
}

inline void write_cdf_csv(std::ostream& out, const std::vector<CdfTable>& tables) {
  out << "metric,value,cdf\n";
  for (const auto& t : tables) {
    for (const auto& [x, p] : t.cdf.points()) out << t.metric << ',' << detail::fmt(x) << ',' << detail::fmt(p) << '\n';
  }
}

inline nlohmann::ordered_json cdf_to_json(const std::vector<CdfTable>& tables) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& t : tables) {
    auto& rows = j[t.metric] = nlohmann::ordered_json::array();
    for (const auto& [x, p] : t.cdf.points()) rows.push_back({{"value", x}, {"cdf", p}});
  }
  return j;
}

inline nlohmann::ordered_json to_json(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["seed"] = m.seed;
  j["policy"] = m.policy;
  j["jobs"] = m.jobs;
  j["completed"] = m.completed;
  j["failed"] = m.failed;
  j["never_placed"] = m.never_placed;
  j["mean_wait_s"] = m.mean_wait_s;
  j["p95_wait_s"] = m.p95_wait_s;
  j["queued_over_threshold"] = m.queued_over_threshold;
  j["utilization"] = m.utilization;
  j["peak_deadlocked_learners"] = m.peak_deadlocked_learners;
  j["peak_idle_gpus"] = m.peak_idle_gpus;
  j["peak_idle_pct"] = m.peak_idle_pct;
  j["max_concurrent_jobs"] = m.max_concurrent_jobs;
  j["node_failures"] = m.node_failures;
  j["pod_terminations"] = m.pod_terminations;
  j["pod_deletions"] = m.pod_deletions;
  j["pod_deletion_pct"] = m.pod_deletion_pct;
  j["job_cancel_pct"] = m.job_cancel_pct;
  j["deploy_rollbacks"] = m.deploy_rollbacks;
  j["lost_work_s"] = m.lost_work_s;
  j["makespan_s"] = m.makespan_s;
  return j;
}

}  // namespace gangsim
