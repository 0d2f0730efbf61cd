#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conpro/runner.hpp"

namespace {

// relative out_dir is rooted at $CONPRO_OUT_ROOT when set
std::string resolve_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) return out_dir;
  std::filesystem::path p(out_dir);
  if (p.is_absolute()) return out_dir;
  const char* root = std::getenv("CONPRO_OUT_ROOT");
  if (!root || !*root) return out_dir;
  return (std::filesystem::path(root) / p).string();
}

struct CommonOverrides {
  std::string config_file;
  std::string out_dir;
  int64_t seed = -1;
  int64_t shots = -1;
  int64_t n_tasks = -1;
  int64_t base_steps = -1;
  int64_t incr_steps = -1;
  int64_t batch = -1;
  int64_t data_seed = -1;
  std::string ablation;  // comma list from {afm,mdl,supcon,dai}, or "finetune"
};

void add_common(CLI::App* app, CommonOverrides& ov, bool require_config) {
  auto* copt = app->add_option("--config", ov.config_file, "run configuration JSON");
  if (require_config) copt->required();
  app->add_option("--out", ov.out_dir, "output run directory (overrides config out_dir)");
  app->add_option("--seed", ov.seed, "training seed (overrides config seed)");
  app->add_option("--shots", ov.shots, "shots per incremental class");
  app->add_option("--tasks", ov.n_tasks, "number of tasks (base + incremental)");
  app->add_option("--base-steps", ov.base_steps, "optimizer steps for the base task");
  app->add_option("--incr-steps", ov.incr_steps, "optimizer steps per incremental task");
  app->add_option("--batch", ov.batch, "batch size");
  app->add_option("--data-seed", ov.data_seed, "dataset seed");
  app->add_option("--ablation", ov.ablation,
                  "comma list of enabled components (afm,mdl,supcon,dai) or 'finetune'");
}

conpro::cli::RunConfig build_config(const CommonOverrides& ov) {
  conpro::cli::RunConfig cfg;
  if (!ov.config_file.empty()) cfg = conpro::cli::RunConfig::load(ov.config_file);
  if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
  cfg.out_dir = resolve_out_dir(cfg.out_dir);
  if (ov.seed >= 0) cfg.seed = ov.seed;
  if (ov.shots >= 0) cfg.data.shots = ov.shots;
  if (ov.n_tasks >= 0) cfg.data.n_tasks = ov.n_tasks;
  if (ov.base_steps >= 0) cfg.train.base_steps = ov.base_steps;
  if (ov.incr_steps >= 0) cfg.train.incr_steps = ov.incr_steps;
  if (ov.batch >= 0) cfg.train.batch_size = ov.batch;
  if (ov.data_seed >= 0) cfg.data.seed = ov.data_seed;
  if (!ov.ablation.empty()) {
    cfg.ablation = {false, false, false, false};
    if (ov.ablation != "finetune") {
      std::string item;
      std::istringstream ss(ov.ablation);
      while (std::getline(ss, item, ',')) {
        if (item == "afm") cfg.ablation.afm = true;
        else if (item == "mdl") cfg.ablation.mdl = true;
        else if (item == "supcon") cfg.ablation.supcon = true;
        else if (item == "dai") cfg.ablation.dai = true;
        else throw CLI::ValidationError("--ablation", "unknown component '" + item + "'");
      }
    }
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conpro: few-shot class-incremental image synthesis testbed"};
  app.require_subcommand(1);

  CommonOverrides gen_ov, train_ov;
  std::string eval_dir;
  std::vector<std::string> report_dirs;
  std::string report_out;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset to disk");
  add_common(gen, gen_ov, /*require_config=*/false);

  auto* train = app.add_subcommand("train", "train the full task sequence");
  add_common(train, train_ov, /*require_config=*/false);

  auto* eval = app.add_subcommand("eval", "compute per-task metrics for a finished run");
  eval->add_option("--run", eval_dir, "run directory with a checkpoint")->required();

  auto* report = app.add_subcommand("report", "side-by-side toy-FID table over runs");
  report->add_option("runs", report_dirs, "run directories")->required()->expected(-1);
  report->add_option("--out", report_out, "also write the table to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return conpro::cli::cmd_gen_data(build_config(gen_ov), std::cout);
    if (train->parsed()) {
      auto cfg = build_config(train_ov);
      cfg.validate_for_train();
      return conpro::cli::cmd_train(cfg, std::cout);
    }
    if (eval->parsed()) return conpro::cli::cmd_eval(eval_dir, std::cout);
    if (report->parsed()) {
      std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
      if (!report_out.empty()) {
        std::ostringstream buf;
        int rc = conpro::cli::cmd_report(dirs, buf);
        std::cout << buf.str();
        if (rc == 0) {
          std::ofstream os(report_out);
          os << buf.str();
        }
        return rc;
      }
      return conpro::cli::cmd_report(dirs, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
