#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace conpro::cli {

// Versioned run configuration. Field order is fixed so parse -> serialize ->
// parse is the identity on resolved configs.
struct RunConfig {
  int64_t schema_version = 1;
  int64_t seed = -1;  // < 0 means unset; mandatory for training
  std::string out_dir;

  struct Data {
    int64_t n_tasks = 4;
    int64_t shots = 100;
    int64_t base_budget_multiplier = 10;
    int64_t seed = 11;
    std::string dataset_dir;  // optional pre-rendered dataset
  } data;

  struct Arch {
    int64_t latent_dim = 64;
    int64_t base_channels = 128;
    std::vector<int64_t> gen_widths = {64, 32, 16};
    std::vector<int64_t> disc_channels = {8, 16, 32, 64};
    int64_t feature_dim = 64;
    int64_t proj_dim = 64;
    int64_t rank = 4;
    int64_t mdl_layer = 3;
  } arch;

  struct Loss {
    double lambda_g_mdl = 4.0;
    double lambda_d_mdl = 4.0;
    double lambda_supcon = 0.15;
    double supcon_temperature = 0.1;
    double r1_gamma = 10.0;
    int64_t mixup_anchors = 4;
  } loss;

  struct Train {
    int64_t base_steps = 300;
    int64_t incr_steps = 200;
    int64_t batch_size = 8;
    double lr_d = 2e-4;
    double lr_g_base = 2e-4;
    double lr_modulation = 1e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    int64_t replay_cap = 64;
  } train;

  struct Dai {
    int64_t n_per_task = 32;
    int64_t real_batch_cap = 128;
  } dai;

  struct Eval {
    int64_t n_gen = 256;
    int64_t extractor_seed = 77;
    int64_t extractor_dim = 32;
    int64_t probe_count = 16;
  } eval;

  struct Ablation {
    bool afm = true;
    bool mdl = true;
    bool supcon = true;
    bool dai = true;
  } ablation;

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  void validate() const;
  void validate_for_train() const;  // additionally requires seed and out_dir

  // short toggle signature, e.g. "afm+mdl+supcon+dai" or "finetune"
  std::string ablation_signature() const;
};

// Table-1-style ladder from one config: afm-only, +mdl, +supcon, +dai.
// Consecutive entries differ in exactly one toggle.
std::vector<std::pair<std::string, RunConfig>> ablation_ladder(const RunConfig& base);

}  // namespace conpro::cli
