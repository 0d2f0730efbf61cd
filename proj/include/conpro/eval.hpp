#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "conpro/checkpoint.hpp"
#include "conpro/models.hpp"
#include "conpro/tensor.hpp"

namespace conpro::eval {

struct FeatureStats {
  Tensor mean;  // (d)
  Tensor cov;   // (d, d), unbiased
  int64_t count = 0;
};

// Fixed randomly-initialized conv feature network standing in for the usual
// pretrained metric backbone. Seeded once per project and stored in the
// checkpoint container so metrics are comparable across runs.
class FeatureExtractor {
 public:
  FeatureExtractor(uint64_t seed, int64_t out_dim);

  Tensor features(const Tensor& images) const;  // (B, out_dim)
  uint64_t seed() const { return seed_; }
  int64_t dim() const { return out_dim_; }

  void save(ArrayStore& store) const;
  static FeatureExtractor load(const ArrayStore& store);

 private:
  uint64_t seed_ = 0;
  int64_t out_dim_ = 32;
  std::vector<Tensor> weights_;  // conv kernels, widths 8 -> 16 -> out_dim
};

FeatureStats feature_stats(const Tensor& feature_rows);
FeatureStats feature_stats_of_images(const Tensor& images, const FeatureExtractor& extractor);

// symmetric eigendecomposition (cyclic Jacobi); eigvecs columns are the vectors
void jacobi_eig(const Tensor& sym, Tensor& eigvals, Tensor& eigvecs);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)); the matrix root goes
// through eig(Sa^(1/2) Sb Sa^(1/2)) with negative eigenvalues clamped at 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

double toy_fid(const Tensor& images_a, const Tensor& images_b, const FeatureExtractor& extractor);

struct TaskMetrics {
  int64_t task_id = -1;
  int64_t class_id = -1;
  double toy_fid = 0.0;
  int64_t added_params = 0;
  double step_ms = 0.0;
};

// added trainable parameters for one task entry (0 for the base task)
int64_t added_param_count(const models::TaskEntry& entry);

TaskMetrics evaluate_task(const models::Generator& gen, const models::TaskRegistry& reg,
                          int64_t task_id, int64_t n_gen, const Tensor& real_images,
                          const FeatureExtractor& extractor, uint64_t seed, double step_ms);

// rows = tasks, one column per configuration
std::string report_table(const std::vector<std::string>& config_names,
                         const std::vector<std::vector<TaskMetrics>>& per_config);

std::string metrics_csv_header();
std::string metrics_csv_row(const TaskMetrics& m);

// per-task toy-FID bar chart as a binary PPM image
void write_fid_bars(const std::vector<TaskMetrics>& metrics, const std::filesystem::path& file);

}  // namespace conpro::eval
