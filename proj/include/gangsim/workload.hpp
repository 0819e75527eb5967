#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gangsim/error.hpp"
#include "gangsim/resources.hpp"
#include "gangsim/rng.hpp"

namespace gangsim {

// A deep-learning training job: `learners` homogeneous learner pods, each
// needing `gpus_per_learner` GPUs of one class plus CPU and memory.
struct JobSpec {
  std::string job_id;
  double submit_time = 0.0;
  int learners = 1;
  int gpus_per_learner = 1;
  GpuClass gpu_class;
  std::int64_t cpu_per_learner = 0;  // millicores
  std::int64_t mem_per_learner = 0;  // MB
  double work_duration = 0.0;        // seconds of uninterrupted processing
  double checkpoint_interval = 0.0;  // seconds of progress; 0 disables checkpoints
  bool sync = true;

  ResourceVector per_learner_demand() const {
    return ResourceVector{gpus_per_learner, gpu_class, cpu_per_learner, mem_per_learner};
  }

  std::int64_t total_gpus() const {
    return static_cast<std::int64_t>(learners) * gpus_per_learner;
  }

  void validate() const {
    auto bad = [&](const std::string& what) {
      throw Error(ErrorCode::ValidationError, "job '" + job_id + "': " + what);
    };
    if (job_id.empty()) throw Error(ErrorCode::ValidationError, "job_id must not be empty");
    if (learners < 1) bad("learners must be >= 1");
    if (gpus_per_learner < 1) bad("gpus_per_learner must be >= 1");
    if (!(work_duration > 0.0)) bad("work_duration must be > 0");
    if (checkpoint_interval < 0.0) bad("checkpoint_interval must be >= 0");
    if (submit_time < 0.0) bad("submit_time must be >= 0");
    if (cpu_per_learner < 0 || mem_per_learner < 0) bad("negative cpu or memory");
    if (gpu_class.empty()) bad("gpu_class is required");
  }

  friend bool operator==(const JobSpec&, const JobSpec&) = default;
};

struct Gang {
  std::string gang_id;
  int gang_size = 1;
  ResourceVector per_pod_demand;

  static Gang of(const JobSpec& spec) {
    return Gang{spec.job_id, spec.learners, spec.per_learner_demand()};
  }
};

// ---------------------------------------------------------------------------
// Recommended learner sizes by GPU type and count.

struct TShirtSize {
  GpuClass gpu_class;
  int gpus = 0;
  int cpu_cores = 0;
  int mem_gb = 0;
};

inline const std::vector<TShirtSize>& tshirt_table() {
  static const std::vector<TShirtSize> table = {
      {GpuClass::K80(), 1, 4, 24},   {GpuClass::K80(), 2, 8, 48},
      {GpuClass::K80(), 4, 16, 96},  {GpuClass::P100(), 1, 8, 24},
      {GpuClass::P100(), 2, 16, 48}, {GpuClass::V100(), 1, 26, 24},
      {GpuClass::V100(), 2, 42, 48},
  };
  return table;
}

struct CpuMem {
  int cpu_cores = 0;
  int mem_gb = 0;

  friend bool operator==(const CpuMem&, const CpuMem&) = default;
};

// CPU-only learners get this unless the caller says otherwise.
inline constexpr CpuMem kCpuOnlyDefault{4, 9};

inline CpuMem default_resources(const GpuClass& cls, int gpus,
                                CpuMem cpu_only = kCpuOnlyDefault) {
  if (gpus == 0) return cpu_only;
  for (const auto& row : tshirt_table()) {
    if (row.gpu_class == cls && row.gpus == gpus) return CpuMem{row.cpu_cores, row.mem_gb};
  }
  throw Error(ErrorCode::UnknownConfiguration,
              "no recommended size for " + std::to_string(gpus) + "-" + cls.name());
}

// Fills cpu/mem from the t-shirt table when they are unset.
inline void apply_default_resources(JobSpec& spec) {
  if (spec.cpu_per_learner > 0 && spec.mem_per_learner > 0) return;
  const CpuMem d = default_resources(spec.gpu_class, spec.gpus_per_learner);
  if (spec.cpu_per_learner <= 0) spec.cpu_per_learner = std::int64_t{d.cpu_cores} * 1000;
  if (spec.mem_per_learner <= 0) spec.mem_per_learner = std::int64_t{d.mem_gb} * 1024;
}

// ---------------------------------------------------------------------------
// JSON-lines traces, one JobSpec per line with JobSpec field names.

inline nlohmann::json to_json(const JobSpec& s) {
  return {{"job_id", s.job_id},
          {"submit_time", s.submit_time},
          {"learners", s.learners},
          {"gpus_per_learner", s.gpus_per_learner},
          {"gpu_class", s.gpu_class.name()},
          {"cpu_per_learner", s.cpu_per_learner},
          {"mem_per_learner", s.mem_per_learner},
          {"work_duration", s.work_duration},
          {"checkpoint_interval", s.checkpoint_interval},
          {"sync", s.sync}};
}

// Parses one trace record. Missing cpu/mem are defaulted from the t-shirt
// table; `known_classes` lists the accepted GPU class labels.
inline JobSpec job_from_json(const nlohmann::json& j, const std::set<GpuClass>& known_classes) {
  JobSpec s;
  s.job_id = j.at("job_id").get<std::string>();
  s.submit_time = j.at("submit_time").get<double>();
  s.learners = j.at("learners").get<int>();
  s.gpus_per_learner = j.at("gpus_per_learner").get<int>();
  s.gpu_class = GpuClass(j.at("gpu_class").get<std::string>());
  s.work_duration = j.at("work_duration").get<double>();
  s.cpu_per_learner = j.value("cpu_per_learner", std::int64_t{0});
  s.mem_per_learner = j.value("mem_per_learner", std::int64_t{0});
  s.checkpoint_interval = j.value("checkpoint_interval", 0.0);
  s.sync = j.value("sync", true);
  if (known_classes.count(s.gpu_class) == 0) {
    throw Error(ErrorCode::ValidationError,
                "job '" + s.job_id + "': unknown gpu_class '" + s.gpu_class.name() + "'");
  }
  s.validate();
  try {
    apply_default_resources(s);
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, "job '" + s.job_id + "': " + e.message());
  }
  return s;
}

inline std::set<GpuClass> builtin_gpu_classes() {
  return {GpuClass::K80(), GpuClass::P100(), GpuClass::V100()};
}

// Sorts by submit_time; ties keep input order.
inline void sort_by_submit_time(std::vector<JobSpec>& jobs) {
  std::stable_sort(jobs.begin(), jobs.end(), [](const JobSpec& a, const JobSpec& b) {
    return a.submit_time < b.submit_time;
  });
}

inline std::vector<JobSpec> parse_trace(std::istream& in,
                                        const std::set<GpuClass>& known = builtin_gpu_classes()) {
  std::vector<JobSpec> jobs;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": " + e.what(),
                  lineno);
    }
    try {
      JobSpec spec = job_from_json(j, known);
      if (!ids.insert(spec.job_id).second) {
        throw Error(ErrorCode::ValidationError, "duplicate job_id '" + spec.job_id + "'");
      }
      jobs.push_back(std::move(spec));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": " + e.what(),
                  lineno);
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(lineno) + ": " + e.message(), lineno);
    }
  }
  sort_by_submit_time(jobs);
  return jobs;
}

inline std::vector<JobSpec> load_trace(const std::string& path,
                                       const std::set<GpuClass>& known = builtin_gpu_classes()) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open trace file '" + path + "'");
  return parse_trace(in, known);
}

inline void write_trace(std::ostream& out, const std::vector<JobSpec>& jobs) {
  for (const auto& j : jobs) out << to_json(j).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic workload generators.

// A job shape in a workload mix, drawn with probability proportional to weight.
struct JobShape {
  double weight = 1.0;
  int learners = 1;
  int gpus_per_learner = 1;
  GpuClass gpu_class = GpuClass::K80();
};

// Work durations are log-uniform over [min_s, max_s].
struct WorkRange {
  double min_s = 1800.0;
  double max_s = 14400.0;

  double draw(Rng& rng) const {
    if (max_s <= min_s) return min_s;
    return std::exp(rng.uniform(std::log(min_s), std::log(max_s)));
  }
};

// N identical synchronous jobs submitted together.
struct GangExperimentConfig {
  int n_jobs = 50;
  int learners = 2;
  int gpus_per_learner = 1;
  GpuClass gpu_class = GpuClass::K80();
  double submit_time = 0.0;
  double work_duration = 3600.0;
  double work_jitter = 0.2;  // +/- fraction, uniform
  double checkpoint_interval = 0.0;
  bool sync = true;
};

// Four staggered batches per GPU type (light or heavy mix).
struct StaggeredLoadConfig {
  bool heavy = false;
  int learners = 1;
  int gpus_per_learner = 1;
  double work_duration = 3600.0;
  double work_jitter = 0.1;
  double checkpoint_interval = 0.0;
  bool sync = true;
};

struct StaggeredBatch {
  GpuClass gpu_class;
  int light_jobs = 0;
  int heavy_jobs = 0;
  double start_s = 0.0;
};

inline const std::vector<StaggeredBatch>& staggered_batches() {
  static const std::vector<StaggeredBatch> batches = {
      {GpuClass::K80(), 30, 300, 0.0},
      {GpuClass::K80(), 24, 240, 15 * 60.0},
      {GpuClass::P100(), 11, 110, 30 * 60.0},
      {GpuClass::V100(), 5, 50, 32 * 60.0},
  };
  return batches;
}

struct PoissonConfig {
  double rate_per_hour = 10.0;
  double duration_s = 86400.0;
  double start_s = 0.0;
  std::vector<JobShape> mix{JobShape{}};
  WorkRange work;
  double checkpoint_interval = 0.0;
  bool sync = true;
};

// Daily arrival counts with occasional burst days and quiet weekends;
// arrivals fall inside a daytime window of each (possibly compressed) day.
struct BurstyDailyConfig {
  int days = 60;
  double day_length_s = 86400.0;
  double jobs_per_day = 20.0;
  double burst_probability = 0.15;
  double burst_factor = 3.0;
  double weekend_factor = 0.4;
  double window_start = 0.3;  // fraction of the day
  double window_end = 0.8;
  std::vector<JobShape> mix{JobShape{}};
  WorkRange work;
  double checkpoint_interval = 0.0;
  bool sync = true;
};

using WorkloadConfig =
    std::variant<GangExperimentConfig, StaggeredLoadConfig, PoissonConfig, BurstyDailyConfig>;

namespace detail {

inline std::string job_name(std::size_t i) {
  std::ostringstream os;
  os << "job-" << std::setw(5) << std::setfill('0') << i;
  return os.str();
}

inline JobSpec make_job(std::size_t index, double t, int learners, int gpus, const GpuClass& cls,
                        double work, double ckpt, bool sync) {
  JobSpec s;
  s.job_id = job_name(index);
  s.submit_time = t;
  s.learners = learners;
  s.gpus_per_learner = gpus;
  s.gpu_class = cls;
  s.work_duration = work;
  s.checkpoint_interval = ckpt;
  s.sync = sync;
  apply_default_resources(s);
  s.validate();
  return s;
}

inline double jittered(double base, double jitter, Rng& rng) {
  if (jitter <= 0.0) return base;
  return base * (1.0 + rng.uniform(-jitter, jitter));
}

inline const JobShape& pick_shape(const std::vector<JobShape>& mix, Rng& rng) {
  double total = 0.0;
  for (const auto& s : mix) total += s.weight;
  double x = rng.uniform() * total;
  for (const auto& s : mix) {
    if (x < s.weight) return s;
    x -= s.weight;
  }
  return mix.back();
}

inline void check_mix(const std::vector<JobShape>& mix) {
  if (mix.empty()) throw Error(ErrorCode::InvalidConfig, "job mix must not be empty");
  double total = 0.0;
  for (const auto& s : mix) {
    if (s.weight < 0.0 || s.learners < 1 || s.gpus_per_learner < 1) {
      throw Error(ErrorCode::InvalidConfig, "invalid job shape in mix");
    }
    total += s.weight;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidConfig, "job mix weights sum to zero");
}

inline void check_work(const WorkRange& w) {
  if (!(w.min_s > 0.0) || w.max_s < w.min_s) {
    throw Error(ErrorCode::InvalidConfig, "work range must satisfy 0 < min_s <= max_s");
  }
}

}  // namespace detail

// Pure function of (config, seed).
inline std::vector<JobSpec> generate_synthetic(const WorkloadConfig& config, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "workload");
  std::vector<JobSpec> jobs;

  if (const auto* g = std::get_if<GangExperimentConfig>(&config)) {
    if (g->n_jobs < 0 || g->learners < 1 || g->gpus_per_learner < 1 || !(g->work_duration > 0) ||
        g->work_jitter < 0 || g->work_jitter >= 1) {
      throw Error(ErrorCode::InvalidConfig, "invalid gang-experiment config");
    }
    for (int i = 0; i < g->n_jobs; ++i) {
      jobs.push_back(detail::make_job(static_cast<std::size_t>(i), g->submit_time, g->learners,
                                      g->gpus_per_learner, g->gpu_class,
                                      detail::jittered(g->work_duration, g->work_jitter, rng),
                                      g->checkpoint_interval, g->sync));
    }
  } else if (const auto* st = std::get_if<StaggeredLoadConfig>(&config)) {
    if (st->learners < 1 || st->gpus_per_learner < 1 || !(st->work_duration > 0) ||
        st->work_jitter < 0 || st->work_jitter >= 1) {
      throw Error(ErrorCode::InvalidConfig, "invalid staggered-load config");
    }
    std::size_t index = 0;
    for (const auto& batch : staggered_batches()) {
      const int count = st->heavy ? batch.heavy_jobs : batch.light_jobs;
      for (int i = 0; i < count; ++i) {
        jobs.push_back(detail::make_job(index++, batch.start_s, st->learners,
                                        st->gpus_per_learner, batch.gpu_class,
                                        detail::jittered(st->work_duration, st->work_jitter, rng),
                                        st->checkpoint_interval, st->sync));
      }
    }
  } else if (const auto* p = std::get_if<PoissonConfig>(&config)) {
    if (!(p->rate_per_hour > 0) || !(p->duration_s > 0) || p->start_s < 0) {
      throw Error(ErrorCode::InvalidConfig, "poisson config needs rate > 0 and duration > 0");
    }
    detail::check_mix(p->mix);
    detail::check_work(p->work);
    const double mean_gap = 3600.0 / p->rate_per_hour;
    double t = p->start_s + rng.exponential(mean_gap);
    std::size_t index = 0;
    while (t < p->start_s + p->duration_s) {
      const JobShape& shape = detail::pick_shape(p->mix, rng);
      jobs.push_back(detail::make_job(index++, t, shape.learners, shape.gpus_per_learner,
                                      shape.gpu_class, p->work.draw(rng), p->checkpoint_interval,
                                      p->sync));
      t += rng.exponential(mean_gap);
    }
  } else if (const auto* b = std::get_if<BurstyDailyConfig>(&config)) {
    if (b->days < 1 || !(b->day_length_s > 0) || b->jobs_per_day < 0 ||
        !(b->window_start >= 0 && b->window_start < b->window_end && b->window_end <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "invalid bursty-daily config");
    }
    detail::check_mix(b->mix);
    detail::check_work(b->work);
    std::size_t index = 0;
    for (int day = 0; day < b->days; ++day) {
      double level = b->jobs_per_day * rng.uniform(0.7, 1.3);
      if (day % 7 >= 5) level *= b->weekend_factor;
      if (rng.uniform() < b->burst_probability) level *= b->burst_factor;
      const auto count = static_cast<int>(std::floor(level + rng.uniform()));
      std::vector<double> offsets;
      offsets.reserve(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i) {
        offsets.push_back(b->day_length_s * rng.uniform(b->window_start, b->window_end));
      }
      std::sort(offsets.begin(), offsets.end());
      for (double off : offsets) {
        const JobShape& shape = detail::pick_shape(b->mix, rng);
        jobs.push_back(detail::make_job(index++, day * b->day_length_s + off, shape.learners,
                                        shape.gpus_per_learner, shape.gpu_class,
                                        b->work.draw(rng), b->checkpoint_interval, b->sync));
      }
    }
  }
  sort_by_submit_time(jobs);
  return jobs;
}

// ---------------------------------------------------------------------------
// Scenario JSON for generators: an object with a "scenario" discriminator of
// gang-experiment | staggered-load | poisson | bursty-daily.

namespace detail {

inline std::vector<JobShape> mix_from_json(const nlohmann::json& j) {
  std::vector<JobShape> mix;
  for (const auto& e : j) {
    JobShape s;
    s.weight = e.value("weight", 1.0);
    s.learners = e.value("learners", 1);
    s.gpus_per_learner = e.value("gpus_per_learner", 1);
    s.gpu_class = GpuClass(e.value("gpu_class", std::string("K80")));
    mix.push_back(s);
  }
  return mix;
}

inline nlohmann::json mix_to_json(const std::vector<JobShape>& mix) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : mix) {
    out.push_back({{"weight", s.weight},
                   {"learners", s.learners},
                   {"gpus_per_learner", s.gpus_per_learner},
                   {"gpu_class", s.gpu_class.name()}});
  }
  return out;
}

inline WorkRange work_from_json(const nlohmann::json& j, WorkRange def) {
  if (!j.contains("work")) return def;
  const auto& w = j.at("work");
  return WorkRange{w.value("min_s", def.min_s), w.value("max_s", def.max_s)};
}

}  // namespace detail

inline WorkloadConfig workload_config_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("scenario").get<std::string>();
    if (kind == "gang-experiment") {
      GangExperimentConfig c;
      c.n_jobs = j.value("n_jobs", c.n_jobs);
      c.learners = j.value("learners", c.learners);
      c.gpus_per_learner = j.value("gpus_per_learner", c.gpus_per_learner);
      c.gpu_class = GpuClass(j.value("gpu_class", c.gpu_class.name()));
      c.submit_time = j.value("submit_time", c.submit_time);
      c.work_duration = j.value("work_duration_s", c.work_duration);
      c.work_jitter = j.value("work_jitter", c.work_jitter);
      c.checkpoint_interval = j.value("checkpoint_interval_s", c.checkpoint_interval);
      c.sync = j.value("sync", c.sync);
      return c;
    }
    if (kind == "staggered-load") {
      StaggeredLoadConfig c;
      const std::string load = j.value("load", std::string("light"));
      if (load != "light" && load != "heavy") {
        throw Error(ErrorCode::InvalidConfig, "load must be light or heavy");
      }
      c.heavy = load == "heavy";
      c.learners = j.value("learners", c.learners);
      c.gpus_per_learner = j.value("gpus_per_learner", c.gpus_per_learner);
      c.work_duration = j.value("work_duration_s", c.work_duration);
      c.work_jitter = j.value("work_jitter", c.work_jitter);
      c.checkpoint_interval = j.value("checkpoint_interval_s", c.checkpoint_interval);
      c.sync = j.value("sync", c.sync);
      return c;
    }
    if (kind == "poisson") {
      PoissonConfig c;
      c.rate_per_hour = j.value("rate_per_hour", c.rate_per_hour);
      c.duration_s = j.value("duration_s", c.duration_s);
      c.start_s = j.value("start_s", c.start_s);
      if (j.contains("mix")) c.mix = detail::mix_from_json(j.at("mix"));
      c.work = detail::work_from_json(j, c.work);
      c.checkpoint_interval = j.value("checkpoint_interval_s", c.checkpoint_interval);
      c.sync = j.value("sync", c.sync);
      return c;
    }
    if (kind == "bursty-daily") {
      BurstyDailyConfig c;
      c.days = j.value("days", c.days);
      c.day_length_s = j.value("day_length_s", c.day_length_s);
      c.jobs_per_day = j.value("jobs_per_day", c.jobs_per_day);
      c.burst_probability = j.value("burst_probability", c.burst_probability);
      c.burst_factor = j.value("burst_factor", c.burst_factor);
      c.weekend_factor = j.value("weekend_factor", c.weekend_factor);
      c.window_start = j.value("window_start", c.window_start);
      c.window_end = j.value("window_end", c.window_end);
      if (j.contains("mix")) c.mix = detail::mix_from_json(j.at("mix"));
      c.work = detail::work_from_json(j, c.work);
      c.checkpoint_interval = j.value("checkpoint_interval_s", c.checkpoint_interval);
      c.sync = j.value("sync", c.sync);
      return c;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown workload scenario '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad workload config: ") + e.what());
  }
}

inline nlohmann::json to_json(const WorkloadConfig& config) {
  return std::visit(
      [](const auto& c) -> nlohmann::json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, GangExperimentConfig>) {
          return {{"scenario", "gang-experiment"},   {"n_jobs", c.n_jobs},
                  {"learners", c.learners},          {"gpus_per_learner", c.gpus_per_learner},
                  {"gpu_class", c.gpu_class.name()}, {"submit_time", c.submit_time},
                  {"work_duration_s", c.work_duration}, {"work_jitter", c.work_jitter},
                  {"checkpoint_interval_s", c.checkpoint_interval}, {"sync", c.sync}};
        } else if constexpr (std::is_same_v<T, StaggeredLoadConfig>) {
          return {{"scenario", "staggered-load"}, {"load", c.heavy ? "heavy" : "light"},
                  {"learners", c.learners},       {"gpus_per_learner", c.gpus_per_learner},
                  {"work_duration_s", c.work_duration}, {"work_jitter", c.work_jitter},
                  {"checkpoint_interval_s", c.checkpoint_interval}, {"sync", c.sync}};
        } else if constexpr (std::is_same_v<T, PoissonConfig>) {
          return {{"scenario", "poisson"},
                  {"rate_per_hour", c.rate_per_hour},
                  {"duration_s", c.duration_s},
                  {"start_s", c.start_s},
                  {"mix", detail::mix_to_json(c.mix)},
                  {"work", {{"min_s", c.work.min_s}, {"max_s", c.work.max_s}}},
                  {"checkpoint_interval_s", c.checkpoint_interval},
                  {"sync", c.sync}};
        } else {
          return {{"scenario", "bursty-daily"},
                  {"days", c.days},
                  {"day_length_s", c.day_length_s},
                  {"jobs_per_day", c.jobs_per_day},
                  {"burst_probability", c.burst_probability},
                  {"burst_factor", c.burst_factor},
                  {"weekend_factor", c.weekend_factor},
                  {"window_start", c.window_start},
                  {"window_end", c.window_end},
                  {"mix", detail::mix_to_json(c.mix)},
                  {"work", {{"min_s", c.work.min_s}, {"max_s", c.work.max_s}}},
                  {"checkpoint_interval_s", c.checkpoint_interval},
                  {"sync", c.sync}};
        }
      },
      config);
}

}  // namespace gangsim
