#include "conpro/config.hpp"

#include <cmath>
#include <fstream>

#include "conpro/tensor.hpp"

namespace conpro::cli {

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = schema_version;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["data"] = {{"n_tasks", data.n_tasks},
               {"shots", data.shots},
               {"base_budget_multiplier", data.base_budget_multiplier},
               {"seed", data.seed},
               {"dataset_dir", data.dataset_dir}};
  j["arch"] = {{"latent_dim", arch.latent_dim},
               {"base_channels", arch.base_channels},
               {"gen_widths", arch.gen_widths},
               {"disc_channels", arch.disc_channels},
               {"feature_dim", arch.feature_dim},
               {"proj_dim", arch.proj_dim},
               {"rank", arch.rank},
               {"mdl_layer", arch.mdl_layer}};
  j["loss"] = {{"lambda_g_mdl", loss.lambda_g_mdl},
               {"lambda_d_mdl", loss.lambda_d_mdl},
               {"lambda_supcon", loss.lambda_supcon},
               {"supcon_temperature", loss.supcon_temperature},
               {"r1_gamma", loss.r1_gamma},
               {"mixup_anchors", loss.mixup_anchors}};
  j["train"] = {{"base_steps", train.base_steps},
                {"incr_steps", train.incr_steps},
                {"batch_size", train.batch_size},
                {"lr_d", train.lr_d},
                {"lr_g_base", train.lr_g_base},
                {"lr_modulation", train.lr_modulation},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"replay_cap", train.replay_cap}};
  j["dai"] = {{"n_per_task", dai.n_per_task}, {"real_batch_cap", dai.real_batch_cap}};
  j["eval"] = {{"n_gen", eval.n_gen},
               {"extractor_seed", eval.extractor_seed},
               {"extractor_dim", eval.extractor_dim},
               {"probe_count", eval.probe_count}};
  j["ablation"] = {{"afm", ablation.afm},
                   {"mdl", ablation.mdl},
                   {"supcon", ablation.supcon},
                   {"dai", ablation.dai}};
  return j;
}

namespace {
template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  get_if_present(j, "schema_version", c.schema_version);
  check(c.schema_version == 1,
        "unsupported config schema_version " + std::to_string(c.schema_version));
  get_if_present(j, "seed", c.seed);
  get_if_present(j, "out_dir", c.out_dir);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    get_if_present(d, "n_tasks", c.data.n_tasks);
    get_if_present(d, "shots", c.data.shots);
    get_if_present(d, "base_budget_multiplier", c.data.base_budget_multiplier);
    get_if_present(d, "seed", c.data.seed);
    get_if_present(d, "dataset_dir", c.data.dataset_dir);
  }
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    get_if_present(a, "latent_dim", c.arch.latent_dim);
    get_if_present(a, "base_channels", c.arch.base_channels);
    get_if_present(a, "gen_widths", c.arch.gen_widths);
    get_if_present(a, "disc_channels", c.arch.disc_channels);
    get_if_present(a, "feature_dim", c.arch.feature_dim);
    get_if_present(a, "proj_dim", c.arch.proj_dim);
    get_if_present(a, "rank", c.arch.rank);
    get_if_present(a, "mdl_layer", c.arch.mdl_layer);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    get_if_present(l, "lambda_g_mdl", c.loss.lambda_g_mdl);
    get_if_present(l, "lambda_d_mdl", c.loss.lambda_d_mdl);
    get_if_present(l, "lambda_supcon", c.loss.lambda_supcon);
    get_if_present(l, "supcon_temperature", c.loss.supcon_temperature);
    get_if_present(l, "r1_gamma", c.loss.r1_gamma);
    get_if_present(l, "mixup_anchors", c.loss.mixup_anchors);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    get_if_present(t, "base_steps", c.train.base_steps);
    get_if_present(t, "incr_steps", c.train.incr_steps);
    get_if_present(t, "batch_size", c.train.batch_size);
    get_if_present(t, "lr_d", c.train.lr_d);
    get_if_present(t, "lr_g_base", c.train.lr_g_base);
    get_if_present(t, "lr_modulation", c.train.lr_modulation);
    get_if_present(t, "beta1", c.train.beta1);
    get_if_present(t, "beta2", c.train.beta2);
    get_if_present(t, "replay_cap", c.train.replay_cap);
  }
  if (j.contains("dai")) {
    const auto& d = j.at("dai");
    get_if_present(d, "n_per_task", c.dai.n_per_task);
    get_if_present(d, "real_batch_cap", c.dai.real_batch_cap);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    get_if_present(e, "n_gen", c.eval.n_gen);
    get_if_present(e, "extractor_seed", c.eval.extractor_seed);
    get_if_present(e, "extractor_dim", c.eval.extractor_dim);
    get_if_present(e, "probe_count", c.eval.probe_count);
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    get_if_present(a, "afm", c.ablation.afm);
    get_if_present(a, "mdl", c.ablation.mdl);
    get_if_present(a, "supcon", c.ablation.supcon);
    get_if_present(a, "dai", c.ablation.dai);
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
  std::ifstream is(file);
  check(static_cast<bool>(is), "cannot open config '" + file.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const std::exception& e) {
    fail("config '" + file.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& file) const {
  std::ofstream os(file);
  check(static_cast<bool>(os), "cannot write config '" + file.string() + "'");
  os << to_json().dump(2) << "\n";
}

void RunConfig::validate() const {
  check(data.n_tasks >= 2, "config: data.n_tasks must be >= 2 (base + incremental)");
  check(data.shots >= 1, "config: data.shots must be >= 1");
  check(data.base_budget_multiplier >= 1, "config: data.base_budget_multiplier must be >= 1");
  check(arch.latent_dim >= 1 && arch.base_channels >= 1, "config: bad architecture dims");
  check(arch.gen_widths.size() == 3, "config: arch.gen_widths must list three block widths");
  check(!arch.disc_channels.empty(), "config: arch.disc_channels must be non-empty");
  check(arch.rank >= 1, "config: arch.rank must be >= 1");
  check(arch.mdl_layer >= 0 && arch.mdl_layer <= 4, "config: arch.mdl_layer out of range");
  check(loss.lambda_g_mdl >= 0 && loss.lambda_d_mdl >= 0 && loss.lambda_supcon >= 0,
        "config: loss weights must be non-negative");
  check(loss.supcon_temperature > 0, "config: supcon_temperature must be positive");
  check(loss.r1_gamma >= 0, "config: r1_gamma must be non-negative");
  check(loss.mixup_anchors >= 1, "config: mixup_anchors must be >= 1");
  check(train.base_steps >= 0 && train.incr_steps >= 0, "config: negative step counts");
  check(train.batch_size >= 1, "config: batch_size must be >= 1");
  check(train.replay_cap >= 1, "config: replay_cap must be >= 1");
  check(dai.n_per_task >= 1 && dai.real_batch_cap >= 1, "config: bad DAI settings");
  check(eval.n_gen >= 2, "config: eval.n_gen must be >= 2");
  check(eval.extractor_dim >= 1, "config: eval.extractor_dim must be >= 1");
  check(eval.probe_count >= 1, "config: eval.probe_count must be >= 1");
  check(!(ablation.dai && !ablation.afm), "config: ablation dai=true requires afm=true");
}

void RunConfig::validate_for_train() const {
  validate();
  check(seed >= 0, "config: a non-negative seed is mandatory for training (set seed or pass --seed)");
  check(!out_dir.empty(), "config: out_dir is required for training");
}

std::string RunConfig::ablation_signature() const {
  if (!ablation.afm) return "finetune";
  std::string s = "afm";
  if (ablation.mdl) s += "+mdl";
  if (ablation.supcon) s += "+supcon";
  if (ablation.dai) s += "+dai";
  return s;
}

std::vector<std::pair<std::string, RunConfig>> ablation_ladder(const RunConfig& base) {
  std::vector<std::pair<std::string, RunConfig>> ladder;
  RunConfig c = base;
  c.ablation = {true, false, false, false};
  ladder.emplace_back("afm", c);
  c.ablation.mdl = true;
  ladder.emplace_back("afm+mdl", c);
  c.ablation.supcon = true;
  ladder.emplace_back("afm+mdl+supcon", c);
  c.ablation.dai = true;
  ladder.emplace_back("afm+mdl+supcon+dai", c);
  return ladder;
}

}  // namespace conpro::cli
