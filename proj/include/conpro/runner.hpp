#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <vector>

#include "conpro/config.hpp"
#include "conpro/data.hpp"
#include "conpro/eval.hpp"
#include "conpro/models.hpp"
#include "conpro/trainer.hpp"

namespace conpro::cli {

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path config() const { return dir / "config.resolved.json"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint.bin"; }
  std::filesystem::path manifest() const { return dir / "checkpoint.manifest.txt"; }
  std::filesystem::path registry() const { return dir / "registry.json"; }
  std::filesystem::path metrics() const { return dir / "metrics.csv"; }
  std::filesystem::path dai() const { return dir / "dai.csv"; }
  std::filesystem::path eval_csv() const { return dir / "eval.csv"; }
  std::filesystem::path lock() const { return dir / ".conpro.lock"; }
};

// exclusive per-run-directory lock; held for the lifetime of a training run
class LockFile {
 public:
  explicit LockFile(const std::filesystem::path& p);
  ~LockFile();
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

models::GeneratorSpec generator_spec_from(const RunConfig& cfg);
models::DiscSpec disc_spec_from(const RunConfig& cfg);
trainer::TrainerOptions trainer_options_from(const RunConfig& cfg);

// trained state reloaded from a run directory
struct LoadedRun {
  RunConfig config;
  std::unique_ptr<models::Generator> gen;
  std::unique_ptr<models::Discriminator> disc;
  models::TaskRegistry registry;
  std::unique_ptr<eval::FeatureExtractor> extractor;
  ArrayStore store;  // keeps probe arrays accessible
};

void save_run_state(const trainer::Trainer& tr, const eval::FeatureExtractor& extractor,
                    const RunPaths& paths);
LoadedRun load_run_state(const std::filesystem::path& run_dir);

data::TaskStream dataset_for(const RunConfig& cfg);

void run_gen_data(const RunConfig& cfg, std::ostream& log);
void run_train(const RunConfig& cfg, std::ostream& log);
std::vector<eval::TaskMetrics> run_eval(const std::filesystem::path& run_dir, std::ostream& log);
std::string run_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& log);

// exit-code wrappers with diagnostics on stderr-style streams
int cmd_gen_data(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const std::filesystem::path& run_dir, std::ostream& log);
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& log);

}  // namespace conpro::cli
