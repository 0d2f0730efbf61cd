#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "conpro/tensor.hpp"

namespace conpro::data {

enum class ShapeFamily { circle, square, triangle, stripes };

std::string family_name(ShapeFamily f);
ShapeFamily family_from_name(const std::string& s);

struct SyntheticClassSpec {
  int64_t class_id = 0;
  ShapeFamily family = ShapeFamily::circle;
  double hue = 0.0;            // [0,1)
  double texture_freq = 2.0;   // cycles across the image
  double pos_jitter = 0.0;     // max center offset in [-1,1] coords
  double scale_jitter = 0.0;   // relative size variation
  double hue_jitter = 0.0;
};

struct FewShotDataset {
  int64_t class_id = 0;
  Tensor images;  // (shots, 3, 32, 32) in [-1,1]
  uint64_t seed = 0;
  int64_t shots() const { return images.empty() ? 0 : images.dim(0); }
};

constexpr int64_t kImageChannels = 3;
constexpr int64_t kImageSize = 32;

// Renders one image; jitter draws come from a per-sample stream derived from
// (seed, class_id, sample index) so sample i never depends on rendering order.
void render_sample(const SyntheticClassSpec& spec, uint64_t seed, int64_t sample_index, double* out);

FewShotDataset render_class(const SyntheticClassSpec& spec, int64_t shots, uint64_t seed);

// Deterministic class specs with pairwise-distinct (family, hue).
std::vector<SyntheticClassSpec> make_class_specs(int64_t n_classes, uint64_t seed);

struct TaskStream {
  SyntheticClassSpec base_spec;
  FewShotDataset base;
  std::vector<SyntheticClassSpec> incremental_specs;
  std::vector<FewShotDataset> incremental;
};

// n_tasks = 1 base + (n_tasks-1) incremental; base budget = multiplier*shots.
TaskStream build_task_stream(int64_t n_tasks, int64_t shots, uint64_t seed,
                             int64_t base_budget_multiplier = 10);

void export_dataset(const TaskStream& stream, const std::filesystem::path& dir);
TaskStream import_dataset(const std::filesystem::path& dir);

// Ingestion hook for user-supplied data: a directory with one subdirectory
// per class containing .ppm/.pgm rasters (binary P6/P5) or raw .f64 dumps of
// shape (3,32,32). Images are resampled to 32x32 and mapped to [-1,1].
FewShotDataset load_image_folder(const std::filesystem::path& class_dir, int64_t class_id);

// Fits per-class pixel centroids and classifies every sample to the nearest
// centroid; returns accuracy in [0,1].
double nearest_centroid_accuracy(const std::vector<FewShotDataset>& sets);

}  // namespace conpro::data
