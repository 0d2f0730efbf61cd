#pragma once

#include <functional>
#include <map>
#include <vector>

#include "conpro/models.hpp"
#include "conpro/tensor.hpp"

namespace conpro::dai {

struct TaskDistanceReport {
  std::map<int64_t, double> per_task_distance;
  int64_t selected = -1;
  int64_t real_batch_size = 0;
  int64_t n_per_task = 0;
};

// features: (B,...) images -> (B, d) feature rows
using FeatureFn = std::function<Tensor(const Tensor&)>;
// images for `n` seeded latents of a past task
using TaskSampleFn = std::function<Tensor(int64_t task_id, int64_t n, uint64_t seed)>;

// Per past task: generate n_per_task samples, compare feature centroids with
// the real batch centroid by Euclidean distance, select the argmin (ties go
// to the smallest task id).
TaskDistanceReport select_init_task(const Tensor& real_batch, const std::vector<int64_t>& past_ids,
                                    const FeatureFn& features, const TaskSampleFn& sample,
                                    int64_t n_per_task, uint64_t seed);

TaskDistanceReport select_init_task(const Tensor& real_batch, const std::vector<int64_t>& past_ids,
                                    const models::Generator& gen, const models::TaskRegistry& reg,
                                    const models::Discriminator& disc, int64_t n_per_task,
                                    uint64_t seed);

// Deep copy of a frozen task's modulation factors and per-task copies as an
// unfrozen starting point; generating with the clone reproduces the source
// exactly until training moves it.
models::TaskEntry clone_modulation(const models::TaskRegistry& reg, int64_t from_task,
                                   int64_t new_task_id, int64_t new_class_id);

std::string report_csv_header();
std::string report_csv_rows(int64_t for_task, const TaskDistanceReport& report);

}  // namespace conpro::dai
