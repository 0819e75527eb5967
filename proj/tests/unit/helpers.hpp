#pragma once

#include <string>

#include "gangsim/gangsim.hpp"

namespace testing_helpers {

inline gangsim::ResourceVector gpus(std::int64_t n, gangsim::GpuClass cls = gangsim::GpuClass::K80()) {
  return gangsim::ResourceVector{n, cls, 0, 0};
}

inline gangsim::JobSpec job(std::string id, int learners, int gpus_per_learner, double work,
                            double submit = 0.0, double ckpt = 0.0) {
  gangsim::JobSpec s;
  s.job_id = std::move(id);
  s.submit_time = submit;
  s.learners = learners;
  s.gpus_per_learner = gpus_per_learner;
  s.gpu_class = gangsim::GpuClass::K80();
  s.work_duration = work;
  s.checkpoint_interval = ckpt;
  gangsim::apply_default_resources(s);
  return s;
}

// A node whose only constraint is its GPU count.
inline gangsim::Cluster gpu_only_cluster(std::initializer_list<std::int64_t> capacities) {
  gangsim::Cluster c;
  int i = 0;
  for (auto g : capacities) {
    c.add_node("n" + std::to_string(i++), gangsim::ResourceVector{g, gangsim::GpuClass::K80(), 0, 0});
  }
  return c;
}

}  // namespace testing_helpers
