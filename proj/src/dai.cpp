#include "conpro/dai.hpp"

#include <cmath>
#include <sstream>

#include "conpro/rng.hpp"

namespace conpro::dai {

namespace {
Tensor centroid(const Tensor& rows) {
  check(rows.ndim() == 2 && rows.dim(0) >= 1, "centroid: need (n, d) rows");
  Tensor c({rows.dim(1)});
  for (int64_t i = 0; i < rows.dim(0); ++i)
    axpy(1.0 / double(rows.dim(0)), rows.data() + i * rows.dim(1), c.data(), c.size());
  return c;
}

double euclidean(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}
}  // namespace

TaskDistanceReport select_init_task(const Tensor& real_batch, const std::vector<int64_t>& past_ids,
                                    const FeatureFn& features, const TaskSampleFn& sample,
                                    int64_t n_per_task, uint64_t seed) {
  check(!past_ids.empty(), "distance-aware init: no past tasks to select from");
  check(real_batch.ndim() == 4 && real_batch.dim(0) >= 1, "distance-aware init: empty real batch");
  check(n_per_task >= 1, "distance-aware init: n_per_task must be >= 1");

  TaskDistanceReport report;
  report.real_batch_size = real_batch.dim(0);
  report.n_per_task = n_per_task;

  const Tensor real_centroid = centroid(features(real_batch));
  for (int64_t id : past_ids) {
    Tensor gen = sample(id, n_per_task, mix_seed(seed, static_cast<uint64_t>(id)));
    const Tensor task_centroid = centroid(features(gen));
    const double d = euclidean(real_centroid, task_centroid);
    report.per_task_distance[id] = d;
    if (report.selected < 0 || d < report.per_task_distance[report.selected] ||
        (d == report.per_task_distance[report.selected] && id < report.selected)) {
      report.selected = id;
    }
  }
  return report;
}

TaskDistanceReport select_init_task(const Tensor& real_batch, const std::vector<int64_t>& past_ids,
                                    const models::Generator& gen, const models::TaskRegistry& reg,
                                    const models::Discriminator& disc, int64_t n_per_task,
                                    uint64_t seed) {
  FeatureFn features = [&disc](const Tensor& images) { return disc.features_of(images); };
  TaskSampleFn sample = [&gen, &reg](int64_t task_id, int64_t n, uint64_t s) {
    Rng rng(s);
    Tensor z = rng.normal_tensor({n, gen.spec().latent_dim});
    return gen.generate(reg, task_id, z);
  };
  return select_init_task(real_batch, past_ids, features, sample, n_per_task, seed);
}

models::TaskEntry clone_modulation(const models::TaskRegistry& reg, int64_t from_task,
                                   int64_t new_task_id, int64_t new_class_id) {
  const models::TaskEntry& src = reg.entry(from_task);
  check(src.frozen, "clone_modulation: source task " + std::to_string(from_task) + " is not frozen");
  check(src.kind == models::TaskKind::modulated,
        "clone_modulation: task " + std::to_string(from_task) + " has no modulation set");
  models::TaskEntry clone;
  clone.task_id = new_task_id;
  clone.class_id = new_class_id;
  clone.kind = models::TaskKind::modulated;
  clone.mods = src.mods;  // deep copy (tensors own their storage)
  clone.mods.task_id = new_task_id;
  clone.mods.frozen = false;
  clone.copies = src.copies;
  clone.frozen = false;
  return clone;
}

std::string report_csv_header() { return "for_task,candidate_task,distance,selected\n"; }

std::string report_csv_rows(int64_t for_task, const TaskDistanceReport& report) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& [id, d] : report.per_task_distance)
    os << for_task << "," << id << "," << d << "," << (id == report.selected ? 1 : 0) << "\n";
  return os.str();
}

}  // namespace conpro::dai
