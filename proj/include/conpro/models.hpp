#pragma once

#include <optional>
#include <string>
#include <vector>

#include "conpro/afm.hpp"
#include "conpro/checkpoint.hpp"
#include "conpro/graph.hpp"
#include "conpro/tensor.hpp"

namespace conpro::models {

struct ConvBlock {
  std::string id;
  int64_t c_in = 0;
  int64_t c_out = 0;
  int64_t k = 3;
  bool upsample = false;
  bool norm = true;
};

struct GeneratorSpec {
  int64_t latent_dim = 64;
  int64_t out_channels = 3;
  int64_t height = 32;
  int64_t width = 32;
  int64_t base_channels = 128;  // channels of the 4x4 root feature map
  std::vector<ConvBlock> blocks;
  std::vector<std::string> modulated_layer_ids;

  // latent -> 4x4xbase -> three upsampling conv blocks -> output conv.
  // widths are the channel counts after blocks 1..3.
  static GeneratorSpec dcgan32(int64_t latent_dim, int64_t base_channels,
                               const std::vector<int64_t>& widths);
  void validate() const;
  std::vector<std::pair<std::string, afm::LayerDims>> modulated_dims() const;
  // valid activation indices are 0 (projection output) .. blocks.size()
  int64_t activation_count() const { return static_cast<int64_t>(blocks.size()) + 1; }
};

struct NormAffine {
  Tensor gain;
  Tensor bias;
};

struct GenBlockParams {
  Tensor w;  // (c_out, c_in, k, k)
  Tensor b;  // (c_out)
  NormAffine norm;
};

struct GeneratorParams {
  Tensor proj_w;  // (latent_dim, base_channels*16)
  Tensor proj_b;
  NormAffine proj_norm;
  std::vector<GenBlockParams> blocks;

  static GeneratorParams init(const GeneratorSpec& spec, uint64_t seed);
  int64_t param_count() const;
};

// Per-task copies of the non-convolution trainables (conv biases and
// normalization affine terms). Convolution kernels themselves stay frozen
// and are only modulated.
struct TaskCopies {
  NormAffine proj_norm;
  std::vector<Tensor> conv_bias;
  std::vector<NormAffine> norms;

  static TaskCopies from_base(const GeneratorParams& base);
  int64_t param_count() const;
};

enum class TaskKind { base, modulated, full_copy };

std::string task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& s);

struct TaskEntry {
  int64_t task_id = -1;
  int64_t class_id = -1;
  TaskKind kind = TaskKind::base;
  afm::TaskModulationSet mods;  // kind == modulated
  TaskCopies copies;            // kind == modulated
  GeneratorParams full;         // kind == full_copy
  bool frozen = false;
  uint64_t probe_seed = 0;
  std::vector<uint64_t> probe_hashes;
};

// Ordered record of all tasks; the source of generative replay.
class TaskRegistry {
 public:
  int64_t add(TaskEntry e);
  bool has(int64_t task_id) const;
  const TaskEntry& entry(int64_t task_id) const;
  TaskEntry& entry_mut(int64_t task_id);
  int64_t count() const { return static_cast<int64_t>(tasks_.size()); }
  std::vector<int64_t> task_ids() const;
  // frozen tasks with their own modulation factors (DAI clone sources)
  std::vector<int64_t> modulated_task_ids() const;

 private:
  std::vector<TaskEntry> tasks_;
};

struct GenParamVars {
  Var proj_w, proj_b, proj_gain, proj_bias;
  struct BlockVars {
    Var w, b, gain, bias;
  };
  std::vector<BlockVars> blocks;
  std::vector<Var> trainables;
  std::vector<std::string> trainable_names;
};

struct GenForward {
  Var image;              // (B, 3, H, W)
  std::vector<Var> acts;  // activation per layer index
};

class Generator {
 public:
  Generator(GeneratorSpec spec, uint64_t seed);

  const GeneratorSpec& spec() const { return spec_; }
  GeneratorParams& base_params() { return base_; }
  const GeneratorParams& base_params() const { return base_; }
  bool base_frozen() const { return frozen_; }
  void freeze_base() { frozen_ = true; }
  int64_t base_param_count() const { return base_.param_count(); }

  GenParamVars bind_base(Graph& g, bool trainable) const;
  GenParamVars bind_task(Graph& g, const TaskEntry& task, bool trainable) const;
  GenForward forward(Graph& g, const GenParamVars& pv, Var z) const;

  Tensor generate(const TaskRegistry& reg, int64_t task_id, const Tensor& z) const;
  Tensor generate_entry(const TaskEntry& task, const Tensor& z) const;
  Tensor activations(const TaskRegistry& reg, int64_t task_id, const Tensor& z, int64_t layer) const;

 private:
  GeneratorSpec spec_;
  GeneratorParams base_;
  bool frozen_ = false;
};

struct DiscSpec {
  int64_t in_channels = 3;
  int64_t image_size = 32;
  std::vector<int64_t> channels = {8, 16, 32, 64};
  int64_t feature_dim = 64;
  int64_t proj_dim = 64;
  void validate() const;
};

struct DiscParams {
  struct BlockParams {
    Tensor w, b;
  };
  std::vector<BlockParams> blocks;
  Tensor fc_w, fc_b;    // flattened conv output -> features
  Tensor out_w, out_b;  // features -> logit
  Tensor proj_w, proj_b;
  int64_t param_count() const;
};

struct DiscVars {
  struct BlockVars {
    Var w, b;
  };
  std::vector<BlockVars> blocks;
  Var fc_w, fc_b, out_w, out_b, proj_w, proj_b;
  std::vector<Var> trainables;
  std::vector<std::string> trainable_names;
};

struct DiscForward {
  Var logits;    // (B)
  Var features;  // (B, feature_dim)
};

class Discriminator {
 public:
  Discriminator(DiscSpec spec, uint64_t seed);

  const DiscSpec& spec() const { return spec_; }
  DiscParams& params() { return params_; }
  const DiscParams& params() const { return params_; }
  int64_t param_count() const { return params_.param_count(); }

  DiscVars bind(Graph& g, bool trainable) const;
  DiscForward forward(Graph& g, const DiscVars& dv, Var images) const;
  Var project(Graph& g, const DiscVars& dv, Var features) const;

  // value-level: (logits (B), features (B, feature_dim))
  std::pair<Tensor, Tensor> discriminate(const Tensor& images) const;
  Tensor features_of(const Tensor& images) const;

 private:
  DiscSpec spec_;
  DiscParams params_;
};

// Name-addressed parameter tables. Names are the checkpoint entry names and
// also what the graph binders report as trainable, so the optimizer, the
// census checks and serialization all agree on one vocabulary.
using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;
using ConstParamRefs = std::vector<std::pair<std::string, const Tensor*>>;

ConstParamRefs generator_base_refs(const Generator& gen);
ConstParamRefs task_entry_refs(const GeneratorSpec& spec, const TaskEntry& entry);
ConstParamRefs discriminator_refs(const Discriminator& disc);
ParamRefs generator_base_refs(Generator& gen);
ParamRefs task_entry_refs(const GeneratorSpec& spec, TaskEntry& entry);
ParamRefs discriminator_refs(Discriminator& disc);

// checkpoint naming: "base/...", "task/<id>/...", "disc/..."
void save_generator(const Generator& gen, ArrayStore& store);
void load_generator(Generator& gen, const ArrayStore& store);
void save_discriminator(const Discriminator& disc, ArrayStore& store);
void load_discriminator(Discriminator& disc, const ArrayStore& store);
void save_task_entry(const TaskEntry& t, const GeneratorSpec& spec, ArrayStore& store);
TaskEntry load_task_entry(int64_t task_id, TaskKind kind, const GeneratorSpec& spec,
                          const ArrayStore& store);

}  // namespace conpro::models
