#include "conpro/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include "conpro/dai.hpp"

namespace conpro::trainer {

namespace {

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  check(a.ndim() == b.ndim(), "concat_rows: rank mismatch");
  for (int i = 1; i < a.ndim(); ++i)
    check(a.dim(i) == b.dim(i), "concat_rows: trailing shape mismatch");
  Shape s = a.shape();
  s[0] = a.dim(0) + b.dim(0);
  Tensor out(s);
  std::memcpy(out.data(), a.data(), static_cast<size_t>(a.size()) * sizeof(double));
  std::memcpy(out.data() + a.size(), b.data(), static_cast<size_t>(b.size()) * sizeof(double));
  return out;
}

Tensor sample_batch(const Tensor& data, int64_t batch, Rng& rng) {
  const int64_t n = data.dim(0);
  const int64_t stride = data.size() / n;
  Shape s = data.shape();
  s[0] = batch;
  Tensor out(s);
  for (int64_t i = 0; i < batch; ++i) {
    const int64_t j = rng.uniform_int(n);
    std::memcpy(out.data() + i * stride, data.data() + j * stride,
                static_cast<size_t>(stride) * sizeof(double));
  }
  return out;
}

Tensor mixup_latent_batch(const losses::MixupSpec& mix) {
  const int64_t n = mix.count(), dz = mix.anchors.dim(1);
  Tensor lat({n + 1, dz});
  std::memcpy(lat.data(), mix.mixed.data(), static_cast<size_t>(dz) * sizeof(double));
  std::memcpy(lat.data() + dz, mix.anchors.data(), static_cast<size_t>(n * dz) * sizeof(double));
  return lat;
}

}  // namespace

void Adam::step_one(const std::string& name, Tensor& param, const Tensor& grad, double lr) {
  check(param.same_shape(grad) || grad.size() == param.size(), "adam: grad shape mismatch for " + name);
  State& st = states_[name];
  if (st.m.empty()) {
    st.m = Tensor(param.shape());
    st.v = Tensor(param.shape());
  }
  st.t += 1;
  const double b1 = s_.beta1, b2 = s_.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(st.t));
  const double bc2 = 1.0 - std::pow(b2, double(st.t));
  for (int64_t i = 0; i < param.size(); ++i) {
    const double gi = grad[i];
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * gi;
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * gi * gi;
    const double mh = st.m[i] / bc1;
    const double vh = st.v[i] / bc2;
    param[i] -= lr * mh / (std::sqrt(vh) + s_.eps);
  }
}

void TaskSchedule::validate() const {
  check(base_budget >= 1, "schedule: base budget must be >= 1");
  check(base_steps >= 0 && incr_steps >= 0, "schedule: negative step counts");
  check(batch_size >= 1, "schedule: batch size must be >= 1");
  std::set<int64_t> ids{base_class};
  for (const auto& [cls, shots] : incremental) {
    check(shots >= 1, "schedule: shots must be >= 1");
    check(ids.insert(cls).second, "schedule: class id " + std::to_string(cls) + " repeats");
  }
}

int64_t ReplayBatchSpec::total() const {
  int64_t t = 0;
  for (const auto& [id, n] : counts) t += n;
  return t;
}

std::string ledger_csv_header() {
  return "step,task,d_adv,d_r1,d_mdl,d_supcon,d_total,g_adv,g_mdl,g_total,step_ms\n";
}

std::string ledger_csv_row(const StepLog& log) {
  std::ostringstream os;
  os.precision(17);
  os << log.step << "," << log.task << "," << log.d_adv << "," << log.d_r1 << "," << log.d_mdl
     << "," << log.d_supcon << "," << log.d_total << "," << log.g_adv << "," << log.g_mdl << ","
     << log.g_total << "," << log.step_ms << "\n";
  return os.str();
}

double r1_penalty_and_grads(const models::Discriminator& disc, const Tensor& reals, double gamma,
                            std::map<std::string, Tensor>& grads) {
  const int64_t B = reals.dim(0);
  Tensor gx;
  {
    Graph g;
    auto dv = disc.bind(g, false);
    Var x = g.input(reals, true);
    auto fwd = disc.forward(g, dv, x);
    g.backward(g.sum(fwd.logits));
    gx = g.grad(x);
  }
  double r1_mean = 0.0;
  for (int64_t i = 0; i < gx.size(); ++i) r1_mean += gx[i] * gx[i];
  r1_mean /= double(B);
  if (gamma <= 0.0) return r1_mean;

  const double eps = 1e-4 / std::max(1.0, gx.max_abs());
  auto param_grads = [&disc, &reals, &gx](double sign, double eps) {
    Tensor shifted = reals;
    axpy(sign * eps, gx.data(), shifted.data(), shifted.size());
    Graph g;
    auto dv = disc.bind(g, true);
    auto fwd = disc.forward(g, dv, g.constant(shifted));
    g.backward(g.sum(fwd.logits));
    std::map<std::string, Tensor> out;
    for (size_t i = 0; i < dv.trainables.size(); ++i)
      if (g.has_grad(dv.trainables[i])) out[dv.trainable_names[i]] = g.grad(dv.trainables[i]);
    return out;
  };
  auto plus = param_grads(+1.0, eps);
  auto minus = param_grads(-1.0, eps);
  const double coeff = gamma / (2.0 * eps * double(B));
  for (auto& [name, gp] : plus) {
    auto it = minus.find(name);
    check(it != minus.end(), "r1: mismatched gradient paths");
    Tensor d(gp.shape());
    for (int64_t i = 0; i < d.size(); ++i) d[i] = coeff * (gp[i] - it->second[i]);
    grads[name] = std::move(d);
  }
  return r1_mean;
}

Trainer::Trainer(models::GeneratorSpec gspec, models::DiscSpec dspec, TrainerOptions opt,
                 uint64_t seed)
    : gen_(std::move(gspec), mix_seed(seed, 0x6e11)),
      disc_(std::move(dspec), mix_seed(seed, 0xd15c)),
      opt_(opt),
      seed_(seed),
      adam_(opt.opt) {
  opt_.weights.validate();
  check(opt_.mixup_anchors >= 1, "trainer: mixup_anchors must be >= 1");
  check(opt_.mdl_layer >= 0 && opt_.mdl_layer < gen_.spec().activation_count(),
        "trainer: mdl_layer out of range");
  check(opt_.rank >= 1, "trainer: modulation rank must be >= 1");
  check(opt_.probe_count >= 1, "trainer: probe_count must be >= 1");
  check(!(opt_.use_dai && !opt_.use_afm), "trainer: DAI requires AFM");
}

void Trainer::emit(const StepLog& log) {
  logs_.push_back(log);
  if (!ledger_) return;
  if (!ledger_header_written_) {
    (*ledger_) << ledger_csv_header();
    ledger_header_written_ = true;
  }
  (*ledger_) << ledger_csv_row(log);
}

Tensor Trainer::gen_current(const Tensor& z) const {
  if (current_) return gen_.generate_entry(*current_, z);
  models::TaskEntry base_entry;
  base_entry.kind = models::TaskKind::base;
  return gen_.generate_entry(base_entry, z);
}

void Trainer::apply_adam(Graph& g, const std::vector<Var>& vars,
                         const std::vector<std::string>& names, const models::ParamRefs& refs,
                         const std::map<std::string, Tensor>* extra, double lr) {
  std::map<std::string, Tensor*> by_name;
  for (const auto& [name, t] : refs) by_name[name] = t;
  for (size_t i = 0; i < vars.size(); ++i) {
    auto it = by_name.find(names[i]);
    check(it != by_name.end(), "no parameter target named '" + names[i] + "'");
    Tensor grad = g.has_grad(vars[i]) ? g.grad(vars[i]) : Tensor(g.value(vars[i]).shape());
    if (extra) {
      auto ex = extra->find(names[i]);
      if (ex != extra->end()) axpy(1.0, ex->second.data(), grad.data(), grad.size());
    }
    adam_.step_one(names[i], *it->second, grad, lr);
  }
}

void Trainer::d_step(StepLog& log, const Tensor& reals, int64_t cur_class, Rng& rng,
                     bool allow_supcon) {
  const auto& w = opt_.weights;
  const int64_t B = reals.dim(0);
  const int64_t dz = gen_.spec().latent_dim;

  Tensor fakes = gen_current(rng.normal_tensor({B, dz}));

  LabeledImages replay;
  bool supcon_active = false;
  if (opt_.use_supcon && allow_supcon && registry_.count() >= 1) {
    ReplayBatchSpec spec;
    spec.seed = rng.next_u64();
    const auto ids = registry_.task_ids();
    const int64_t n = static_cast<int64_t>(ids.size());
    for (int64_t i = 0; i < n; ++i) {
      const int64_t cnt = B / n + (i < B % n ? 1 : 0);
      if (cnt > 0) spec.counts.emplace_back(ids[static_cast<size_t>(i)], cnt);
    }
    replay = make_replay_batch(spec);
    supcon_active = replay.images.dim(0) >= 1;
  }

  std::map<std::string, Tensor> r1_grads;
  double r1_mean = 0.0;
  if (w.r1_gamma > 0.0) r1_mean = r1_penalty_and_grads(disc_, reals, w.r1_gamma, r1_grads);
  const double r1_term = 0.5 * w.r1_gamma * r1_mean;
  check(std::isfinite(r1_term), "R1 penalty is not finite");

  Graph g;
  auto dv = disc_.bind(g, true);
  const Tensor all_images = supcon_active ? concat_rows(reals, replay.images) : reals;
  auto fwd_all = disc_.forward(g, dv, g.constant(all_images));
  Var logits_real = supcon_active ? g.slice_rows(fwd_all.logits, 0, B) : fwd_all.logits;
  auto fwd_fake = disc_.forward(g, dv, g.constant(fakes));
  Var d_adv = losses::adversarial_d_loss(g, logits_real, fwd_fake.logits);
  Var total = d_adv;

  double mdl_v = 0.0, sc_v = 0.0;
  if (opt_.use_mdl) {
    Rng mix_rng(rng.next_u64());
    auto mix = losses::MixupSpec::sample(opt_.mixup_anchors, dz, mix_rng);
    Tensor imgs = gen_current(mixup_latent_batch(mix));
    auto fwd_m = disc_.forward(g, dv, g.constant(imgs));
    Var rows = disc_.project(g, dv, fwd_m.features);
    Var mdl = losses::mixup_distance_loss(g, rows, mix.coefficients);
    mdl_v = g.value(mdl)[0];
    total = g.add(total, g.scale(mdl, w.lambda_d_mdl));
  }
  if (supcon_active) {
    std::vector<int64_t> labels(static_cast<size_t>(B), cur_class);
    labels.insert(labels.end(), replay.labels.begin(), replay.labels.end());
    // viable only when some class occurs at least twice
    std::map<int64_t, int> counts;
    bool has_positive = false;
    for (int64_t l : labels) has_positive = has_positive || (++counts[l] >= 2);
    if (has_positive) {
      Var emb = disc_.project(g, dv, fwd_all.features);
      Var sc = losses::supcon_loss(g, emb, labels, w.supcon_temperature);
      sc_v = g.value(sc)[0];
      total = g.add(total, g.scale(sc, w.lambda_supcon));
    }
  }

  const double adv_v = g.value(d_adv)[0];
  const double total_v = losses::total_discriminator_loss(adv_v, mdl_v, sc_v, w) + r1_term;

  g.backward(total);
  apply_adam(g, dv.trainables, dv.trainable_names, models::discriminator_refs(disc_),
             r1_grads.empty() ? nullptr : &r1_grads, opt_.opt.lr_d);
  last_d_trainables_ = dv.trainable_names;

  log.d_adv = adv_v;
  log.d_r1 = r1_term;
  log.d_mdl = mdl_v;
  log.d_supcon = sc_v;
  log.d_total = total_v;
}

void Trainer::g_step(StepLog& log, int64_t batch, Rng& rng) {
  const auto& w = opt_.weights;
  const int64_t dz = gen_.spec().latent_dim;

  Graph g;
  models::GenParamVars pv;
  models::ParamRefs refs;
  double lr = opt_.opt.lr_g_base;
  if (current_) {
    pv = gen_.bind_task(g, *current_, true);
    refs = models::task_entry_refs(gen_.spec(), *current_);
    if (current_->kind == models::TaskKind::modulated) lr = opt_.opt.lr_modulation;
  } else {
    pv = gen_.bind_base(g, true);
    refs = models::generator_base_refs(gen_);
  }
  auto dv = disc_.bind(g, false);

  auto gfwd = gen_.forward(g, pv, g.constant(rng.normal_tensor({batch, dz})));
  auto dfwd = disc_.forward(g, dv, gfwd.image);
  Var g_adv = losses::adversarial_g_loss(g, dfwd.logits);
  Var total = g_adv;

  double mdl_v = 0.0;
  if (opt_.use_mdl) {
    Rng mix_rng(rng.next_u64());
    auto mix = losses::MixupSpec::sample(opt_.mixup_anchors, dz, mix_rng);
    auto gfwd2 = gen_.forward(g, pv, g.constant(mixup_latent_batch(mix)));
    Var acts = gfwd2.acts[static_cast<size_t>(opt_.mdl_layer)];
    const Tensor& ta = g.value(acts);
    Var rows = g.reshape(acts, {mix.count() + 1, ta.size() / (mix.count() + 1)});
    Var mdl = losses::mixup_distance_loss(g, rows, mix.coefficients);
    mdl_v = g.value(mdl)[0];
    total = g.add(total, g.scale(mdl, w.lambda_g_mdl));
  }

  const double adv_v = g.value(g_adv)[0];
  const double total_v = losses::total_generator_loss(adv_v, mdl_v, w);

  g.backward(total);
  apply_adam(g, pv.trainables, pv.trainable_names, refs, nullptr, lr);
  last_g_trainables_ = pv.trainable_names;

  log.g_adv = adv_v;
  log.g_mdl = mdl_v;
  log.g_total = total_v;
}

int64_t Trainer::train_base_task(int64_t class_id, const Tensor& data, int64_t steps,
                                 int64_t batch) {
  check(registry_.count() == 0, "the base task must be the first task trained");
  check(!gen_.base_frozen(), "base generator is already frozen");
  check(data.ndim() == 4 && data.dim(0) >= 1, "train_base_task: empty dataset");
  check(batch >= 1, "train_base_task: batch must be >= 1");

  Rng rng(mix_seed(seed_, 0xba5e));
  for (int64_t step = 0; step < steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    StepLog log;
    log.step = step;
    log.task = 0;
    Tensor reals = sample_batch(data, batch, rng);
    d_step(log, reals, class_id, rng, /*allow_supcon=*/false);
    g_step(log, batch, rng);
    log.step_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    emit(log);
  }

  gen_.freeze_base();
  models::TaskEntry e;
  e.task_id = 0;
  e.class_id = class_id;
  e.kind = models::TaskKind::base;
  e.frozen = true;
  record_probes(e);
  return registry_.add(std::move(e));
}

int64_t Trainer::train_incremental_task(int64_t class_id, const Tensor& data, int64_t steps,
                                        int64_t batch) {
  check(registry_.count() >= 1, "train the base task before any incremental task");
  check(data.ndim() == 4 && data.dim(0) >= 1, "train_incremental_task: empty dataset");
  check(batch >= 1, "train_incremental_task: batch must be >= 1");
  const int64_t new_id = registry_.count();

  if (opt_.use_afm) {
    const auto sources = registry_.modulated_task_ids();
    if (opt_.use_dai && !sources.empty()) {
      const int64_t n_real = std::min(data.dim(0), opt_.dai_real_cap);
      Shape s = data.shape();
      s[0] = n_real;
      Tensor real_batch(s);
      std::memcpy(real_batch.data(), data.data(),
                  static_cast<size_t>(real_batch.size()) * sizeof(double));
      auto report = dai::select_init_task(real_batch, sources, gen_, registry_, disc_,
                                          opt_.dai_n_per_task,
                                          mix_seed(seed_, 0xda1, static_cast<uint64_t>(new_id)));
      if (dai_log_) {
        if (!dai_header_written_) {
          (*dai_log_) << dai::report_csv_header();
          dai_header_written_ = true;
        }
        (*dai_log_) << dai::report_csv_rows(new_id, report);
      }
      current_ = dai::clone_modulation(registry_, report.selected, new_id, class_id);
    } else {
      models::TaskEntry e;
      e.task_id = new_id;
      e.class_id = class_id;
      e.kind = models::TaskKind::modulated;
      e.mods = afm::init_modulation(gen_.spec().modulated_dims(), opt_.rank,
                                    mix_seed(seed_, 0x171, static_cast<uint64_t>(new_id)));
      e.mods.task_id = new_id;
      e.copies = models::TaskCopies::from_base(gen_.base_params());
      current_ = std::move(e);
    }
  } else {
    models::TaskEntry e;
    e.task_id = new_id;
    e.class_id = class_id;
    e.kind = models::TaskKind::full_copy;
    e.full = gen_.base_params();
    current_ = std::move(e);
  }

  Rng rng(mix_seed(seed_, 0x7a5c, static_cast<uint64_t>(new_id)));
  for (int64_t step = 0; step < steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    StepLog log;
    log.step = step;
    log.task = new_id;
    Tensor reals = sample_batch(data, batch, rng);
    d_step(log, reals, class_id, rng, /*allow_supcon=*/true);
    g_step(log, batch, rng);
    log.step_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    emit(log);
  }

  current_->frozen = true;
  current_->mods.frozen = true;
  record_probes(*current_);
  registry_.add(std::move(*current_));
  current_.reset();
  return new_id;
}

LabeledImages Trainer::make_replay_batch(const ReplayBatchSpec& spec) const {
  check(registry_.count() >= 1, "replay requires at least one frozen task");
  const int64_t dz = gen_.spec().latent_dim;
  LabeledImages out;
  std::vector<Tensor> parts;
  for (const auto& [task_id, count] : spec.counts) {
    check(count >= 0, "replay count must be non-negative");
    check(count <= opt_.replay_cap, "replay count " + std::to_string(count) + " for task " +
                                        std::to_string(task_id) + " exceeds the cap of " +
                                        std::to_string(opt_.replay_cap));
    if (count == 0) continue;
    const auto& entry = registry_.entry(task_id);
    check(entry.frozen, "replay source task " + std::to_string(task_id) + " is not frozen");
    Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(task_id)));
    parts.push_back(gen_.generate(registry_, task_id, rng.normal_tensor({count, dz})));
    for (int64_t i = 0; i < count; ++i) out.labels.push_back(entry.class_id);
  }
  check(!parts.empty(), "replay batch is empty");
  out.images = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) out.images = concat_rows(out.images, parts[i]);
  return out;
}

Tensor probe_latents_for(uint64_t probe_seed, int64_t count, int64_t latent_dim) {
  Rng rng(probe_seed);
  return rng.normal_tensor({count, latent_dim});
}

ProbeCheck validate_task_probes(const models::Generator& gen, const models::TaskRegistry& reg,
                                int64_t task_id, int64_t probe_count,
                                const Tensor* stored_images) {
  const auto& e = reg.entry(task_id);
  check(e.frozen, "validate_probes: task " + std::to_string(task_id) + " is not frozen");
  check(e.probe_hashes.size() == static_cast<size_t>(probe_count),
        "validate_probes: probe table size mismatch for task " + std::to_string(task_id));
  Tensor imgs =
      gen.generate_entry(e, probe_latents_for(e.probe_seed, probe_count, gen.spec().latent_dim));
  const int64_t stride = imgs.size() / imgs.dim(0);
  ProbeCheck result;
  result.exact = true;
  for (int64_t i = 0; i < imgs.dim(0); ++i) {
    if (fnv1a64_bytes(imgs.data() + i * stride, stride) != e.probe_hashes[static_cast<size_t>(i)]) {
      result.exact = false;
      break;
    }
  }
  if (stored_images) {
    check(stored_images->size() == imgs.size(), "validate_probes: stored probe shape mismatch");
    double md = 0.0;
    for (int64_t i = 0; i < imgs.size(); ++i)
      md = std::max(md, std::fabs(imgs[i] - (*stored_images)[i]));
    result.max_delta = md;
  } else {
    result.max_delta = result.exact ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return result;
}

Tensor Trainer::probe_latents(uint64_t probe_seed) const {
  return probe_latents_for(probe_seed, opt_.probe_count, gen_.spec().latent_dim);
}

void Trainer::record_probes(models::TaskEntry& e) {
  e.probe_seed = mix_seed(seed_, 0x9b0e, static_cast<uint64_t>(e.task_id));
  Tensor z = probe_latents(e.probe_seed);
  Tensor imgs = gen_.generate_entry(e, z);
  const int64_t stride = imgs.size() / imgs.dim(0);
  e.probe_hashes.clear();
  for (int64_t i = 0; i < imgs.dim(0); ++i)
    e.probe_hashes.push_back(fnv1a64_bytes(imgs.data() + i * stride, stride));
}

Tensor Trainer::probe_images(int64_t task_id) const {
  const auto& e = registry_.entry(task_id);
  return gen_.generate_entry(e, probe_latents(e.probe_seed));
}

ProbeCheck Trainer::validate_probes(int64_t task_id, const Tensor* stored_images) const {
  return validate_task_probes(gen_, registry_, task_id, opt_.probe_count, stored_images);
}

double Trainer::mean_step_ms(int64_t task_id) const {
  double sum = 0.0;
  int64_t n = 0;
  for (const auto& log : logs_)
    if (log.task == task_id) {
      sum += log.step_ms;
      ++n;
    }
  return n > 0 ? sum / double(n) : 0.0;
}

}  // namespace conpro::trainer
