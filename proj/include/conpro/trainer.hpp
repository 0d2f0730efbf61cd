#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "conpro/data.hpp"
#include "conpro/losses.hpp"
#include "conpro/models.hpp"

namespace conpro::trainer {

struct OptimizerSettings {
  double lr_d = 2e-4;
  double lr_g_base = 2e-4;
  double lr_modulation = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(OptimizerSettings s) : s_(s) {}
  void step_one(const std::string& name, Tensor& param, const Tensor& grad, double lr);

 private:
  struct State {
    Tensor m, v;
    int64_t t = 0;
  };
  std::map<std::string, State> states_;
  OptimizerSettings s_;
};

struct TaskSchedule {
  int64_t base_class = 0;
  int64_t base_budget = 0;
  std::vector<std::pair<int64_t, int64_t>> incremental;  // (class_id, shots)
  int64_t base_steps = 0;
  int64_t incr_steps = 0;
  int64_t batch_size = 8;
  OptimizerSettings opt;
  uint64_t seed = 0;
  void validate() const;
};

struct ReplayBatchSpec {
  std::vector<std::pair<int64_t, int64_t>> counts;  // (task_id, count)
  uint64_t seed = 0;
  int64_t total() const;
};

struct LabeledImages {
  Tensor images;
  std::vector<int64_t> labels;
};

struct TrainerOptions {
  losses::LossWeights weights;
  OptimizerSettings opt;
  int64_t mixup_anchors = 4;
  int64_t mdl_layer = 3;
  bool use_afm = true;
  bool use_mdl = true;
  bool use_supcon = true;
  bool use_dai = true;
  int64_t rank = 4;
  int64_t replay_cap = 64;
  int64_t dai_n_per_task = 32;
  int64_t dai_real_cap = 128;
  int64_t probe_count = 16;
};

// One ledger row per optimizer step. d_total = d_adv + d_r1 +
// lambda_d_mdl*d_mdl + lambda_supcon*d_supcon; g_total = g_adv +
// lambda_g_mdl*g_mdl.
struct StepLog {
  int64_t step = 0;
  int64_t task = 0;
  double d_adv = 0, d_r1 = 0, d_mdl = 0, d_supcon = 0, d_total = 0;
  double g_adv = 0, g_mdl = 0, g_total = 0;
  double step_ms = 0;
};

std::string ledger_csv_header();
std::string ledger_csv_row(const StepLog& log);

// mean squared input-gradient norm of the logit on `reals`; fills `grads`
// with d[(gamma/2)*penalty]/d(theta) computed by a central-difference
// Hessian-vector product (two extra forward/backward passes).
double r1_penalty_and_grads(const models::Discriminator& disc, const Tensor& reals, double gamma,
                            std::map<std::string, Tensor>& grads);

struct ProbeCheck {
  bool exact = false;
  double max_delta = 0.0;
  bool within(double tol) const { return exact || max_delta <= tol; }
};

Tensor probe_latents_for(uint64_t probe_seed, int64_t count, int64_t latent_dim);
// replay-exactness check against the hashes recorded at freeze time; when
// stored probe images are supplied, max_delta carries the tolerance path
ProbeCheck validate_task_probes(const models::Generator& gen, const models::TaskRegistry& reg,
                                int64_t task_id, int64_t probe_count,
                                const Tensor* stored_images = nullptr);

class Trainer {
 public:
  Trainer(models::GeneratorSpec gspec, models::DiscSpec dspec, TrainerOptions opt, uint64_t seed);

  void set_ledger(std::ostream* os) { ledger_ = os; }
  void set_dai_log(std::ostream* os) { dai_log_ = os; }

  // Adversarial + in-domain MDL training of the whole generator, then the
  // base freeze; returns the base task id (0).
  int64_t train_base_task(int64_t class_id, const Tensor& data, int64_t steps, int64_t batch);

  // DAI (or fresh) modulation init, alternating D/G steps with MDL and
  // SupCon over replay, then freeze; returns the new task id.
  int64_t train_incremental_task(int64_t class_id, const Tensor& data, int64_t steps, int64_t batch);

  LabeledImages make_replay_batch(const ReplayBatchSpec& spec) const;

  models::Generator& generator() { return gen_; }
  const models::Generator& generator() const { return gen_; }
  models::Discriminator& discriminator() { return disc_; }
  const models::Discriminator& discriminator() const { return disc_; }
  models::TaskRegistry& registry() { return registry_; }
  const models::TaskRegistry& registry() const { return registry_; }
  const TrainerOptions& options() const { return opt_; }
  uint64_t seed() const { return seed_; }

  const std::vector<StepLog>& logs() const { return logs_; }
  double mean_step_ms(int64_t task_id) const;
  const std::vector<std::string>& last_g_trainables() const { return last_g_trainables_; }
  const std::vector<std::string>& last_d_trainables() const { return last_d_trainables_; }

  Tensor probe_latents(uint64_t probe_seed) const;
  Tensor probe_images(int64_t task_id) const;
  // exact = stored hashes match bit-for-bit; max_delta compares against the
  // stored probe images when provided (cross-machine tolerance path)
  ProbeCheck validate_probes(int64_t task_id, const Tensor* stored_images = nullptr) const;

 private:
  void d_step(StepLog& log, const Tensor& reals, int64_t cur_class, Rng& rng, bool allow_supcon);
  void g_step(StepLog& log, int64_t batch, Rng& rng);
  Tensor gen_current(const Tensor& z) const;
  void record_probes(models::TaskEntry& e);
  void emit(const StepLog& log);
  void apply_adam(Graph& g, const std::vector<Var>& vars, const std::vector<std::string>& names,
                  const models::ParamRefs& refs, const std::map<std::string, Tensor>* extra,
                  double lr);

  models::Generator gen_;
  models::Discriminator disc_;
  models::TaskRegistry registry_;
  TrainerOptions opt_;
  uint64_t seed_;
  Adam adam_;
  std::ostream* ledger_ = nullptr;
  bool ledger_header_written_ = false;
  std::ostream* dai_log_ = nullptr;
  bool dai_header_written_ = false;
  std::vector<StepLog> logs_;
  std::optional<models::TaskEntry> current_;
  std::vector<std::string> last_g_trainables_;
  std::vector<std::string> last_d_trainables_;
};

}  // namespace conpro::trainer
