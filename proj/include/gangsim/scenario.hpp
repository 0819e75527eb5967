#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gangsim/cluster.hpp"
#include "gangsim/engine.hpp"
#include "gangsim/error.hpp"
#include "gangsim/scheduler.hpp"
#include "gangsim/workload.hpp"

namespace gangsim {

// A runnable experiment: topology, workload (fixed trace or generator),
// scheduler and lifecycle settings, faults, seeds and horizon.
struct Scenario {
  std::string name = "scenario";
  Cluster cluster;
  std::optional<std::string> trace_path;
  std::vector<JobSpec> trace;
  std::optional<WorkloadConfig> generator;
  SchedulerConfig scheduler;
  LifecycleConfig lifecycle;
  FaultPlan faults;
  std::vector<std::uint64_t> seeds{1};
  double horizon_s = 86400.0;
  double queue_threshold_s = 900.0;

  // The jobs of one run. Generated workloads depend on the seed; traces do not.
  std::vector<JobSpec> jobs_for(std::uint64_t seed) const {
    if (generator) return generate_synthetic(*generator, seed);
    return trace;
  }

  SimInput input_for(std::uint64_t seed) const {
    SimInput in;
    in.cluster = cluster;
    in.jobs = jobs_for(seed);
    in.scheduler = scheduler;
    in.lifecycle = lifecycle;
    in.faults = faults;
    in.seed = seed;
    in.horizon = horizon_s;
    return in;
  }
};

inline SchedulerConfig scheduler_config_from_json(const nlohmann::json& j) {
  SchedulerConfig c;
  if (j.contains("policy")) c.policy = parse_policy(j.at("policy").get<std::string>());
  c.samples = j.value("samples", c.samples);
  c.deadlock_timeout = j.value("deadlock_timeout_s", c.deadlock_timeout);
  c.max_queue_peek = j.value("max_queue_peek", c.max_queue_peek);
  if (j.contains("pod_order")) c.pod_order = parse_pod_order(j.at("pod_order").get<std::string>());
  c.pod_queue_jitter = j.value("pod_queue_jitter", c.pod_queue_jitter);
  c.evict_deadlocked = j.value("evict_deadlocked", c.evict_deadlocked);
  return c;
}

inline nlohmann::ordered_json to_json(const SchedulerConfig& c) {
  nlohmann::ordered_json j;
  j["policy"] = std::string(to_string(c.policy));
  j["samples"] = c.samples;
  j["deadlock_timeout_s"] = c.deadlock_timeout;
  j["max_queue_peek"] = c.max_queue_peek;
  j["pod_order"] = std::string(to_string(c.pod_order));
  j["pod_queue_jitter"] = c.pod_queue_jitter;
  j["evict_deadlocked"] = c.evict_deadlocked;
  return j;
}

inline LifecycleConfig lifecycle_config_from_json(const nlohmann::json& j) {
  LifecycleConfig c;
  c.deploy_step_s = j.value("deploy_step_s", c.deploy_step_s);
  c.download_s = j.value("download_s", c.download_s);
  c.store_s = j.value("store_s", c.store_s);
  c.checkpoint_cost_s = j.value("checkpoint_cost_s", c.checkpoint_cost_s);
  c.max_deploy_retries = j.value("max_deploy_retries", c.max_deploy_retries);
  c.lease_ttl_s = j.value("lease_ttl_s", c.lease_ttl_s);
  c.requeue_grace_s = j.value("requeue_grace_s", c.requeue_grace_s);
  c.dispatch_period_s = j.value("dispatch_period_s", c.dispatch_period_s);
  c.deadlock_scan_s = j.value("deadlock_scan_s", c.deadlock_scan_s);
  return c;
}

inline nlohmann::ordered_json to_json(const LifecycleConfig& c) {
  nlohmann::ordered_json j;
  j["deploy_step_s"] = c.deploy_step_s;
  j["download_s"] = c.download_s;
  j["store_s"] = c.store_s;
  j["checkpoint_cost_s"] = c.checkpoint_cost_s;
  j["max_deploy_retries"] = c.max_deploy_retries;
  j["lease_ttl_s"] = c.lease_ttl_s;
  j["requeue_grace_s"] = c.requeue_grace_s;
  j["dispatch_period_s"] = c.dispatch_period_s;
  j["deadlock_scan_s"] = c.deadlock_scan_s;
  return j;
}

namespace detail {

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal().string();
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace detail

// Parses a scenario document. Relative paths are resolved against base_dir.
inline Scenario scenario_from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = {}) {
  static const std::set<std::string> known = {"name",      "topology",  "workload",
                                              "scheduler", "lifecycle", "faults",
                                              "seeds",     "horizon_s", "queue_threshold_s"};
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "scenario must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::ConfigError, "unknown scenario key '" + key + "'");
  }
  Scenario s;
  try {
    s.name = j.value("name", s.name);
    if (!j.contains("topology")) throw Error(ErrorCode::ConfigError, "scenario needs a topology");
    const auto& topo = j.at("topology");
    if (topo.is_string()) {
      s.cluster = load_topology(detail::resolve(base_dir, topo.get<std::string>()));
    } else {
      s.cluster = cluster_from_json(topo);
    }
    if (!j.contains("workload")) throw Error(ErrorCode::ConfigError, "scenario needs a workload");
    const auto& wl = j.at("workload");
    if (wl.is_object() && wl.contains("trace")) {
      s.trace_path = detail::resolve(base_dir, wl.at("trace").get<std::string>());
      s.trace = load_trace(*s.trace_path);
    } else if (wl.is_array()) {
      const auto classes = builtin_gpu_classes();
      for (const auto& e : wl) s.trace.push_back(job_from_json(e, classes));
      sort_by_submit_time(s.trace);
    } else {
      s.generator = workload_config_from_json(wl);
    }
    if (j.contains("scheduler")) s.scheduler = scheduler_config_from_json(j.at("scheduler"));
    if (j.contains("lifecycle")) s.lifecycle = lifecycle_config_from_json(j.at("lifecycle"));
    if (j.contains("faults")) {
      const auto& f = j.at("faults");
      s.faults = f.is_string()
                     ? fault_plan_from_json(detail::read_json_file(
                           detail::resolve(base_dir, f.get<std::string>())))
                     : fault_plan_from_json(f);
    }
    if (j.contains("seeds")) {
      const auto& sd = j.at("seeds");
      s.seeds.clear();
      if (sd.is_number_integer()) {
        const auto n = sd.get<std::int64_t>();
        if (n < 1) throw Error(ErrorCode::ConfigError, "seeds must be >= 1");
        for (std::int64_t i = 1; i <= n; ++i) s.seeds.push_back(static_cast<std::uint64_t>(i));
      } else {
        for (const auto& v : sd) s.seeds.push_back(v.get<std::uint64_t>());
      }
      if (s.seeds.empty()) throw Error(ErrorCode::ConfigError, "seed list is empty");
    }
    s.horizon_s = j.value("horizon_s", s.horizon_s);
    s.queue_threshold_s = j.value("queue_threshold_s", s.queue_threshold_s);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad scenario: ") + e.what());
  }
  s.scheduler.validate();
  s.lifecycle.validate();
  if (!(s.horizon_s > 0)) throw Error(ErrorCode::ConfigError, "horizon_s must be positive");
  if (s.cluster.size() == 0) throw Error(ErrorCode::ConfigError, "topology has no nodes");
  return s;
}

// Loads a scenario file. Every failure is reported as a ConfigError naming
// the offending file.
inline Scenario load_scenario(const std::string& path) {
  const auto doc = detail::read_json_file(path);
  try {
    Scenario s = scenario_from_json(doc, std::filesystem::path(path).parent_path());
    return s;
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.message());
  }
}

// Checks a scenario against its workload without running it: every job must
// fit the topology's classes and be submitted before the horizon.
inline void validate_scenario(const Scenario& s) {
  for (std::uint64_t seed : s.seeds) {
    SimInput in = s.input_for(seed);
    for (const auto& spec : in.jobs) {
      spec.validate();
      if (spec.submit_time >= s.horizon_s) {
        throw Error(ErrorCode::ConfigError, "job '" + spec.job_id + "' submits after the horizon");
      }
      const bool fits = std::any_of(s.cluster.nodes().begin(), s.cluster.nodes().end(),
                                    [&](const Node& n) {
                                      return class_matches(spec.per_learner_demand(), n.gpu_class()) &&
                                             spec.per_learner_demand().fits_within(n.capacity());
                                    });
      if (!fits) {
        throw Error(ErrorCode::ConfigError,
                    "job '" + spec.job_id + "' fits no node of the topology");
      }
    }
    if (s.trace_path || !s.trace.empty()) break;  // same jobs for every seed
  }
  for (const auto& ev : s.faults.node_events) s.cluster.index_of(ev.node_id);
}

inline nlohmann::ordered_json to_json(const Scenario& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["topology"] = nlohmann::ordered_json::parse(cluster_to_json(s.cluster).dump());
  if (s.trace_path) {
    j["workload"] = {{"trace", *s.trace_path}};
  } else if (s.generator) {
    j["workload"] = nlohmann::ordered_json::parse(to_json(*s.generator).dump());
  } else {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& spec : s.trace) arr.push_back(nlohmann::ordered_json::parse(to_json(spec).dump()));
    j["workload"] = arr;
  }
  j["scheduler"] = to_json(s.scheduler);
  j["lifecycle"] = to_json(s.lifecycle);
  j["faults"] = nlohmann::ordered_json::parse(to_json(s.faults).dump());
  j["seeds"] = s.seeds;
  j["horizon_s"] = s.horizon_s;
  j["queue_threshold_s"] = s.queue_threshold_s;
  return j;
}

}  // namespace gangsim
